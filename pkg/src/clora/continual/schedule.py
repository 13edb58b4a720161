from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from ..data.pnm import IGNORE
from ..errors import ScheduleError

JOINT = "joint"


@dataclass(frozen=True)
class Step:
    classes: tuple[int, ...]
    dataset_id: int = 0


@dataclass(frozen=True)
class TaskSchedule:
    total_classes: int
    steps: tuple[Step, ...]
    name: str

    @property
    def num_steps(self) -> int:
        return len(self.steps)

    def seen_before(self, t: int) -> tuple[int, ...]:
        """Foreground classes introduced in steps ``0..t-1``."""
        return tuple(c for s in self.steps[:t] for c in s.classes)

    def seen_through(self, t: int) -> tuple[int, ...]:
        return self.seen_before(t + 1)

    def default_ranges(self) -> list[str]:
        """Table-style ranges: initial classes incl. background, later classes, All."""
        init_max = max(self.steps[0].classes)
        out = [f"0-{init_max}"]
        if self.num_steps > 1:
            out.append(f"{init_max + 1}-{self.total_classes - 1}")
        out.append("All")
        return out


def build_schedule(spec: str, total_classes: int, dataset_ids=None) -> TaskSchedule:
    """Parse ``"init-inc"`` into contiguous class partitions of ``1..total-1``.

    ``"joint"`` is shorthand for a single step holding every class.
    """
    if total_classes < 2:
        raise ScheduleError(f"need at least one foreground class, got total_classes={total_classes}")
    fg = total_classes - 1
    if spec.strip().lower() == JOINT:
        init, inc = fg, 1
    else:
        m = re.fullmatch(r"\s*(\d+)-(\d+)\s*", spec)
        if not m:
            raise ScheduleError(f"schedule {spec!r} is not of the form 'init-inc'")
        init, inc = int(m.group(1)), int(m.group(2))
    if init < 1 or inc < 1:
        raise ScheduleError(f"schedule {spec!r}: init and inc must be >= 1")
    if init > fg:
        raise ScheduleError(f"schedule {spec!r}: init {init} exceeds {fg} foreground classes")
    if (fg - init) % inc:
        raise ScheduleError(f"schedule {spec!r}: {fg - init} remaining classes not divisible by {inc}")
    parts = [tuple(range(1, init + 1))]
    for start in range(init + 1, fg + 1, inc):
        parts.append(tuple(range(start, start + inc)))
    ids = list(dataset_ids) if dataset_ids is not None else [0] * len(parts)
    if len(ids) != len(parts):
        raise ScheduleError(f"{len(ids)} dataset ids given for {len(parts)} steps")
    steps = tuple(Step(p, int(d)) for p, d in zip(parts, ids))
    return TaskSchedule(total_classes, steps, spec.strip())


def remap_labels(labels: np.ndarray, current_classes, ignore: int = IGNORE) -> np.ndarray:
    """Keep ``current_classes`` and the ignore id; everything else becomes background 0."""
    labels = np.asarray(labels)
    keep = np.isin(labels, np.asarray(list(current_classes), dtype=labels.dtype)) | (labels == ignore)
    return np.where(keep, labels, 0).astype(labels.dtype)


def step_indices(labels: np.ndarray, candidates, classes, exclude=()) -> np.ndarray:
    """Images among ``candidates`` showing any of ``classes`` and none of ``exclude``."""
    candidates = np.asarray(candidates, dtype=np.int64)
    sub = labels[candidates].reshape(len(candidates), -1)
    has = np.isin(sub, list(classes)).any(axis=1)
    if len(exclude):
        has &= ~np.isin(sub, list(exclude)).any(axis=1)
    return candidates[has]
