"""Per-task expert modules and naive merging of their predictions.

Each expert knows only its own task's classes. Merging concatenates all
experts' foreground logits with one shared background logit (the mean of the
experts' background logits), applies softmax, and takes the argmax. Nothing
calibrates one expert against another, so visually similar classes learnt by
different experts collide.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import functional as F
from ..autodiff import no_grad
from ..data.dataset import SegDataset, to_input
from ..errors import ContractError
from ..nn import ModelSpec
from .engine import TrainConfig, new_state, predict, run_experiment, train_task
from .modes import TrainMode
from .schedule import build_schedule, step_indices


def merge_task_predictions(per_task_logits) -> np.ndarray:
    """Concatenate per-task logits ``[B, C_i, H, W]`` and return per-pixel labels ``[B, H, W]``.

    Output ids follow concatenation order: 0 is background, then each task's
    foreground channels in turn.
    """
    logits = [np.asarray(getattr(t, "data", t), dtype=np.float64) for t in per_task_logits]
    if not logits:
        raise ContractError("merge_task_predictions needs at least one task output")
    base = logits[0].shape
    for arr in logits:
        if arr.ndim != 4 or arr.shape[0] != base[0] or arr.shape[2:] != base[2:] or arr.shape[1] < 1:
            raise ContractError(f"incompatible task logits {[a.shape for a in logits]}")
    bg = np.mean([arr[:, :1] for arr in logits], axis=0)
    merged = np.concatenate([bg] + [arr[:, 1:] for arr in logits], axis=1)
    with no_grad():
        probs = F.softmax(merged, axis=1).data
    return probs.argmax(axis=1)


def _local_view(data: SegDataset, classes) -> SegDataset:
    lut = np.zeros(256, dtype=np.uint8)
    lut[255] = 255
    for i, c in enumerate(classes):
        lut[c] = i + 1
    return SegDataset(data.images, lut[data.labels], data.splits, 1 + len(classes),
                      ["background", *(data.class_names[c] for c in classes if c < len(data.class_names))])


def train_experts(data: SegDataset, schedule_spec: str, cfg: TrainConfig, seed: int = 0,
                  model_spec: ModelSpec | None = None, disjoint: bool = True):
    """One adapter+classifier expert per step, each trained alone on its own classes.

    With ``disjoint`` an expert only sees images free of other steps' classes.
    All experts start from the same seeded base encoder.
    """
    schedule = build_schedule(schedule_spec, data.num_classes)
    experts = []
    for t, step in enumerate(schedule.steps):
        others = [c for s in schedule.steps if s is not step for c in s.classes]
        idx = step_indices(data.labels, data.split("train"), step.classes, others if disjoint else ())
        local = _local_view(data, step.classes)
        state = new_state(TrainMode.CLORA_JT, build_schedule("joint", local.num_classes), model_spec, seed)
        train_task(state, TrainMode.CLORA_JT, local, cfg, indices=idx)
        experts.append(state.model)
    return schedule, experts


def expert_logits(experts, images_u8: np.ndarray, batch_size: int = 32) -> list[np.ndarray]:
    outs = [[] for _ in experts]
    with no_grad():
        for start in range(0, len(images_u8), batch_size):
            x = to_input(images_u8[start:start + batch_size])
            for i, m in enumerate(experts):
                outs[i].append(m(x).data)
    return [np.concatenate(o) for o in outs]


@dataclass
class ConflictResult:
    twin_classes: tuple[int, int]
    twin_pixels: int
    expert_error: float      # merged experts: fraction of twin pixels labelled wrongly
    expert_conflict: float   # twin pixels where two experts both claim a foreground class
    clora_error: float       # single sequential CLORA model on the same pixels


def conflict_demo(data: SegDataset, schedule_spec: str, twin: tuple[int, int], cfg: TrainConfig,
                  seed: int = 0, model_spec: ModelSpec | None = None) -> ConflictResult:
    """Compare merged per-task experts with one CLORA model on twin-class pixels of the val split."""
    schedule, experts = train_experts(data, schedule_spec, cfg, seed, model_spec)
    val = data.split("val")
    gt = data.labels[val]
    twin_mask = np.isin(gt, list(twin))
    n = int(twin_mask.sum())
    if n == 0:
        raise ContractError("validation split has no twin-class pixels")

    logits = expert_logits(experts, data.images[val])
    merged = merge_task_predictions(logits)
    # global ids of each expert's own argmax
    claims = []
    for step, lg in zip(schedule.steps, logits):
        ids = np.concatenate([[0], step.classes])
        claims.append(ids[lg.argmax(axis=1)])
    claims = np.stack(claims)
    n_fg_claims = (claims > 0).sum(axis=0)
    conflict = float(((n_fg_claims >= 2) & twin_mask).sum() / n)

    result = run_experiment(TrainMode.CLORA, schedule_spec, data, cfg, seed=seed,
                            model_spec=model_spec, jt_miou_all=None)
    pred = predict(result.state.model, data.images[val])
    return ConflictResult(
        twin_classes=tuple(twin),
        twin_pixels=n,
        expert_error=float((merged[twin_mask] != gt[twin_mask]).mean()),
        expert_conflict=conflict,
        clora_error=float((pred[twin_mask] != gt[twin_mask]).mean()),
    )
