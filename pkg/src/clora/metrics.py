"""Segmentation and efficiency metrics.

Confusion matrices are rows = ground truth, columns = prediction. IoU-based
scores are percentages; classes whose union is empty are left out of means.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _kernels as K
from .errors import ContractError, DataError
from .data.pnm import IGNORE


class ConfusionMatrix:
    def __init__(self, class_count: int, counts: np.ndarray | None = None):
        self.class_count = int(class_count)
        self.counts = np.zeros((class_count, class_count), dtype=np.int64) if counts is None else counts

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if other.class_count != self.class_count:
            raise ContractError("cannot add confusion matrices of different sizes")
        return ConfusionMatrix(self.class_count, self.counts + other.counts)

    def __eq__(self, other) -> bool:
        return isinstance(other, ConfusionMatrix) and np.array_equal(self.counts, other.counts)

    def copy(self) -> "ConfusionMatrix":
        return ConfusionMatrix(self.class_count, self.counts.copy())


def accumulate(cm: ConfusionMatrix, pred, gt, ignore: int = IGNORE) -> ConfusionMatrix:
    """Count every non-ignored pixel into ``cm`` (in place) and return it."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise DataError(f"prediction shape {pred.shape} != ground truth shape {gt.shape}")
    bad = K.confusion_accumulate(cm.counts, gt.reshape(-1).astype(np.int64),
                                 pred.reshape(-1).astype(np.int64), ignore)
    if bad >= 0:
        raise DataError(f"label id {bad} outside [0, {cm.class_count})")
    return cm


def per_class_iou(cm: ConfusionMatrix) -> np.ndarray:
    """IoU per class in [0, 1]; NaN where the union is empty."""
    c = cm.counts.astype(np.float64)
    tp = np.diag(c)
    union = c.sum(axis=0) + c.sum(axis=1) - tp
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(union > 0, tp / union, np.nan)


def miou(cm: ConfusionMatrix, class_range) -> float | None:
    """Mean IoU (percent) over ``class_range``; ``None`` when every class in it is absent."""
    ids = list(class_range)
    if not ids:
        raise ContractError("class range is empty")
    iou = per_class_iou(cm)[ids]
    iou = iou[~np.isnan(iou)]
    if iou.size == 0:
        return None
    return float(100.0 * iou.mean())


def parse_range(text: str, num_classes: int) -> list[int]:
    """``"All"`` or ``"a-b"`` (inclusive) or a single id."""
    if text.lower() == "all":
        return list(range(num_classes))
    lo, _, hi = text.partition("-")
    lo, hi = int(lo), int(hi or lo)
    if not 0 <= lo <= hi < num_classes:
        raise ContractError(f"range {text!r} outside 0..{num_classes - 1}")
    return list(range(lo, hi + 1))


def forget_score(jt_miou_all: float, method_miou_all: float) -> float:
    """Joint-training mIoU minus the method's final mIoU, rounded to table precision."""
    if not (math.isfinite(jt_miou_all) and math.isfinite(method_miou_all)):
        raise ContractError("forget score needs finite inputs")
    return round(jt_miou_all - method_miou_all, 10)


@dataclass(frozen=True)
class NetScoreInput:
    a_n: float            # final all-class mIoU, percent
    p_n: float            # parameters, millions
    m_n: float            # training MACs, millions
    alpha: float = 2.0
    beta: float = 0.5
    gamma: float = 0.5

    def __post_init__(self):
        if not self.p_n > 0 or not self.m_n > 0:
            raise ContractError(f"p_N and m_N must be positive, got {self.p_n}, {self.m_n}")
        if not 0 < self.a_n <= 100:
            raise ContractError(f"a_N must lie in (0, 100], got {self.a_n}")


def netscore(inp: NetScoreInput) -> float:
    """20 * log10(a^alpha / (p^beta * m^gamma)), evaluated in log space."""
    return 20.0 * (inp.alpha * math.log10(inp.a_n)
                   - inp.beta * math.log10(inp.p_n)
                   - inp.gamma * math.log10(inp.m_n))


def averaged_params(initial_step_params: float, incremental_step_params: float) -> float:
    """Mean of the two parameter counts, in millions."""
    if initial_step_params <= 0 or incremental_step_params <= 0:
        raise ContractError("parameter counts must be positive")
    return (initial_step_params + incremental_step_params) / 2.0 / 1e6


def pareto_front(points):
    """Non-dominated ``(params, miou, label)`` points, sorted by params ascending.

    Lower params and higher mIoU are better; a point is dominated when another
    is no worse on both and strictly better on one.
    """
    pts = list(points)
    if not pts:
        return []
    cost = np.array([p[0] for p in pts], dtype=np.float64)
    score = np.array([p[1] for p in pts], dtype=np.float64)
    keep = K.pareto_mask(cost, score)
    front = [pts[i] for i in np.flatnonzero(keep)]
    return sorted(front, key=lambda p: (p[0], -p[1]))


UNITS = {
    "a_N": "percent mIoU over all classes after the last step",
    "p_N": "millions of trainable parameters, mean of initial and incremental steps",
    "m_N": "millions of MACs, total over all training steps (forward + 2x backward)",
}

CSV_COLUMNS = [
    "mode", "schedule", "seed", "rank", "miou_all", "fs", "jt_miou_all",
    "trainable_initial", "trainable_incremental", "total_params", "trainable_fraction",
    "p_n_millions", "m_n_millions", "netscore", "kd_weight", "kd_temperature", "ranges",
]


@dataclass
class MetricsReport:
    mode: str
    schedule: str
    seed: int
    rank: int | None
    ranges: dict[str, float | None]
    per_class_iou: list[float | None]
    step_miou_all: list[float | None]
    fs: float | None
    jt_miou_all: float | None
    trainable_initial: int
    trainable_incremental: int
    total_params: int
    p_n_millions: float
    m_n_millions: float
    netscore: float | None
    kd_weight: float
    kd_temperature: float
    netscore_exponents: dict[str, float] = field(default_factory=lambda: {"alpha": 2.0, "beta": 0.5, "gamma": 0.5})
    units: dict[str, str] = field(default_factory=lambda: dict(UNITS))
    config: dict = field(default_factory=dict)

    @property
    def miou_all(self) -> float | None:
        return self.ranges.get("All")

    @property
    def trainable_fraction(self) -> float:
        return self.trainable_incremental / self.total_params if self.total_params else 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["miou_all"] = self.miou_all
        d["trainable_fraction"] = self.trainable_fraction
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        d = dict(d)
        d.pop("miou_all", None)
        d.pop("trainable_fraction", None)
        return cls(**d)

    def csv_row(self) -> list:
        d = self.to_dict()
        d["ranges"] = ";".join(f"{k}={'' if v is None else f'{v:.4f}'}" for k, v in self.ranges.items())
        return [d[c] for c in CSV_COLUMNS]

    def to_csv(self, header: bool = True) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if header:
            w.writerow(CSV_COLUMNS)
        w.writerow(self.csv_row())
        return buf.getvalue()
