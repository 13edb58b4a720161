"""Synthetic shape-segmentation datasets.

Each image is a noisy, softly shaded background carrying 1-3 filled shapes.
Every foreground class owns a geometry and a base colour. Classes listed in
``twin_pairs`` copy their partner's geometry and colour and differ only by a
faint horizontal stripe texture, which makes them hard to tell apart unless
a model has seen both.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .. import _kernels as K
from ..errors import ConfigError, DataError
from ..rng import stream
from .pnm import write_pgm, write_ppm

KINDS = {"disk": 0, "square": 1, "triangle": 2, "ring": 3, "cross": 4, "diamond": 5}

_DEFAULT_SHAPES = [
    ("disk", (220, 40, 40)),
    ("square", (40, 200, 60)),
    ("triangle", (50, 80, 230)),
    ("ring", (230, 210, 40)),
    ("cross", (210, 50, 210)),
    ("diamond", (40, 210, 210)),
]

STRIPE_AMPLITUDE = 18.0


@dataclass
class ShapeSpec:
    kind: str
    color: tuple[int, int, int]
    color_jitter: float = 12.0
    size_range: tuple[float, float] = (9.0, 16.0)


@dataclass
class SynthSpec:
    num_classes: int = 6
    samples_per_class: int = 40
    image_size: int = 32
    shapes: list[ShapeSpec] = field(default_factory=list)
    noise_level: float = 6.0
    twin_pairs: list[tuple[int, int]] = field(default_factory=list)
    max_instances: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 2:
            raise ConfigError("num_classes: need background plus at least one class")
        if self.num_classes > 255:
            raise ConfigError("num_classes: at most 255 (255 is the ignore id)")
        if self.samples_per_class < 1:
            raise ConfigError("samples_per_class: must be >= 1")
        if self.image_size < 8:
            raise ConfigError("image_size: must be >= 8")
        if self.noise_level < 0:
            raise ConfigError("noise_level: must be >= 0")
        if not 1 <= self.max_instances <= 3:
            raise ConfigError("max_instances: must be within 1..3")
        if not self.shapes:
            self.shapes = default_shapes(self.num_classes - 1)
        self.shapes = [s if isinstance(s, ShapeSpec) else ShapeSpec(**s) for s in self.shapes]
        if len(self.shapes) != self.num_classes - 1:
            raise ConfigError(f"shapes: need {self.num_classes - 1} entries, got {len(self.shapes)}")
        for s in self.shapes:
            if s.kind not in KINDS:
                raise ConfigError(f"shapes: unknown kind {s.kind!r}")
            s.color = tuple(int(c) for c in s.color)
            s.size_range = tuple(float(v) for v in s.size_range)
            if not 2.0 <= s.size_range[0] <= s.size_range[1]:
                raise ConfigError(f"shapes: bad size_range {s.size_range}")
        pairs = []
        for pair in self.twin_pairs:
            a, b = (int(v) for v in pair)
            if not (1 <= a < self.num_classes and 1 <= b < self.num_classes and a != b):
                raise ConfigError(f"twin_pairs: invalid pair {pair}")
            pairs.append((a, b))
        self.twin_pairs = pairs

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        known = set(cls.__dataclass_fields__)
        for key in d:
            if key not in known:
                raise ConfigError(f"{key}: unknown synth spec field")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self) -> dict:
        out = asdict(self)
        out["shapes"] = [asdict(s) for s in self.shapes]
        return out

    def twin_of(self) -> dict[int, int]:
        """Map the second class of each pair to the class it imitates."""
        return {b: a for a, b in self.twin_pairs}


def default_shapes(n: int) -> list[ShapeSpec]:
    out = []
    for i in range(n):
        kind, color = _DEFAULT_SHAPES[i % len(_DEFAULT_SHAPES)]
        if i >= len(_DEFAULT_SHAPES):
            shift = 60 * (i // len(_DEFAULT_SHAPES))
            color = tuple((c + shift) % 256 for c in color)
        out.append(ShapeSpec(kind, color))
    return out


def class_names(spec: SynthSpec) -> list[str]:
    names = ["background"]
    twins = spec.twin_of()
    for cid in range(1, spec.num_classes):
        shape = spec.shapes[twins.get(cid, cid) - 1]
        suffix = "_striped" if cid in twins else ""
        names.append(f"{shape.kind}{suffix}_{cid}")
    return names


def _appearance(spec: SynthSpec, cid: int) -> tuple[ShapeSpec, bool]:
    twins = spec.twin_of()
    if cid in twins:
        return spec.shapes[twins[cid] - 1], True
    return spec.shapes[cid - 1], False


def _stripes(size: int) -> np.ndarray:
    return np.where(np.arange(size) % 2 == 0, STRIPE_AMPLITUDE, -STRIPE_AMPLITUDE)[:, None, None]


def _background(rng, size: int) -> np.ndarray:
    base = rng.uniform(70.0, 120.0, 3)
    gx, gy = rng.uniform(-20.0, 20.0, 2)
    ramp = np.linspace(-0.5, 0.5, size)
    img = base[None, None, :] + gx * ramp[None, :, None] + gy * ramp[:, None, None]
    return np.broadcast_to(img, (size, size, 3)).copy()


def render(spec: SynthSpec, rng, classes: list[int]) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``classes`` in order (later shapes on top); return (uint8 image, labels)."""
    n = spec.image_size
    img = _background(rng, n)
    labels = np.zeros((n, n), dtype=np.uint8)
    stripes = _stripes(n)
    for cid in classes:
        shape, striped = _appearance(spec, cid)
        size = rng.uniform(*shape.size_range)
        margin = size / 2.0
        cx, cy = rng.uniform(margin * 0.6, n - margin * 0.6, 2)
        angle = rng.uniform(0.0, np.pi)
        mask = K.rasterize(KINDS[shape.kind], cx, cy, size, angle, n, n)
        color = np.asarray(shape.color, dtype=np.float64) + rng.normal(0.0, shape.color_jitter, 3)
        fill = np.broadcast_to(color, (n, n, 3))
        if striped:
            fill = fill + stripes
        img[mask] = fill[mask]
        labels[mask] = cid
    if spec.noise_level:
        img = img + rng.normal(0.0, spec.noise_level, img.shape)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8), labels


def prototype(spec: SynthSpec, cid: int) -> np.ndarray:
    """Noise-free centred rendering of class ``cid`` on black, as float RGB."""
    n = spec.image_size
    shape, striped = _appearance(spec, cid)
    size = 0.5 * (shape.size_range[0] + shape.size_range[1])
    mask = K.rasterize(KINDS[shape.kind], n / 2.0, n / 2.0, size, 0.0, n, n)
    fill = np.broadcast_to(np.asarray(shape.color, dtype=np.float64), (n, n, 3))
    if striped:
        fill = fill + _stripes(n)
    out = np.zeros((n, n, 3))
    out[mask] = fill[mask]
    return out


def prototype_distance(spec: SynthSpec, a: int, b: int) -> float:
    """Mean absolute per-pixel difference between two class prototypes (0-255 scale)."""
    return float(np.abs(prototype(spec, a) - prototype(spec, b)).mean())


def generate_arrays(spec: SynthSpec):
    """Return (images [N,H,W,3] uint8, labels [N,H,W] uint8, train idx, val idx)."""
    rng = stream(spec.seed, "data")
    fg = spec.num_classes - 1
    primaries = np.repeat(np.arange(1, fg + 1), spec.samples_per_class)
    rng.shuffle(primaries)
    images, labels = [], []
    for primary in primaries:
        extra = int(rng.integers(0, spec.max_instances))
        classes = [int(c) for c in rng.integers(1, fg + 1, extra)] + [int(primary)]
        img, lab = render(spec, rng, classes)
        images.append(img)
        labels.append(lab)
    n = len(primaries)
    n_train = int(round(0.8 * n))
    return np.stack(images), np.stack(labels), list(range(n_train)), list(range(n_train, n))


def generate(spec: SynthSpec, out_dir) -> Path:
    """Write ``images/``, ``labels/`` and ``manifest.json`` under ``out_dir``."""
    out = Path(out_dir)
    images, labels, train, val = generate_arrays(spec)
    try:
        (out / "images").mkdir(parents=True, exist_ok=True)
        (out / "labels").mkdir(parents=True, exist_ok=True)
        for i in range(len(images)):
            write_ppm(out / "images" / f"{i:05d}.ppm", images[i])
            write_pgm(out / "labels" / f"{i:05d}.pgm", labels[i])
        manifest = {
            "format": "clora-synth-v1",
            "spec": spec.to_dict(),
            "num_classes": spec.num_classes,
            "class_names": class_names(spec),
            "num_samples": len(images),
            "splits": {"train": train, "val": val},
        }
        (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    except OSError as exc:
        raise DataError(f"cannot write dataset to {out}: {exc}") from exc
    return out


def class_histogram(labels: np.ndarray, num_classes: int) -> np.ndarray:
    """Pixel count per class id (ignore pixels dropped)."""
    flat = labels.reshape(-1)
    flat = flat[flat != 255]
    return np.bincount(flat, minlength=num_classes)[:num_classes]
