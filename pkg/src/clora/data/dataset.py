from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import DataError
from .pnm import IGNORE, load_sample

# fixed normalisation of 8-bit pixels to roughly zero mean / unit scale
PIXEL_MEAN = 127.5
PIXEL_SCALE = 64.0


def to_input(images: np.ndarray) -> np.ndarray:
    """uint8 [B,H,W,3] -> float64 [B,3,H,W] network input."""
    x = images.astype(np.float64).transpose(0, 3, 1, 2)
    return np.ascontiguousarray((x - PIXEL_MEAN) / PIXEL_SCALE)


@dataclass
class SegDataset:
    images: np.ndarray       # [N,H,W,3] uint8
    labels: np.ndarray       # [N,H,W] uint8
    splits: dict[str, list[int]]
    num_classes: int
    class_names: list[str]
    root: Path | None = None
    manifest: dict | None = None

    def __len__(self) -> int:
        return len(self.images)

    def split(self, name: str) -> np.ndarray:
        if name not in self.splits:
            raise DataError(f"dataset has no split {name!r}")
        return np.asarray(self.splits[name], dtype=np.int64)

    @classmethod
    def load(cls, root) -> "SegDataset":
        root = Path(root)
        try:
            manifest = json.loads((root / "manifest.json").read_text())
        except FileNotFoundError:
            raise DataError(f"{root}: no manifest.json") from None
        except json.JSONDecodeError as exc:
            raise DataError(f"{root}/manifest.json: {exc}") from None
        n = int(manifest["num_samples"])
        num_classes = int(manifest["num_classes"])
        images, labels = [], []
        for i in range(n):
            s = load_sample(root / "images" / f"{i:05d}.ppm", root / "labels" / f"{i:05d}.pgm")
            images.append(s.image)
            labels.append(s.labels)
        labels = np.stack(labels)
        bad = (labels >= num_classes) & (labels != IGNORE)
        if bad.any():
            raise DataError(f"{root}: label id {int(labels[bad][0])} >= num_classes {num_classes}")
        return cls(np.stack(images), labels, {k: list(v) for k, v in manifest["splits"].items()},
                   num_classes, list(manifest.get("class_names", [])), root, manifest)

    @classmethod
    def from_arrays(cls, images, labels, train, val, num_classes, names=None) -> "SegDataset":
        return cls(images, labels, {"train": list(train), "val": list(val)}, num_classes,
                   names or [str(i) for i in range(num_classes)])
