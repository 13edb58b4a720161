"""Pixel losses for class-incremental segmentation.

Logits are ``[B, C, H, W]`` with channel index == class id. Every loss
averages over non-ignored pixels and returns 0 when there are none.
"""

from __future__ import annotations

import numpy as np

from ..autodiff import Tensor
from ..autodiff import functional as F
from ..data.pnm import IGNORE
from ..errors import DataError, ShapeError


def _valid_mask(labels: np.ndarray, channels: int, ignore: int) -> np.ndarray:
    valid = labels != ignore
    if valid.any() and int(labels[valid].max()) >= channels:
        raise DataError(f"label id {int(labels[valid].max())} >= {channels} logit channels")
    return valid


def _onehot(labels: np.ndarray, valid: np.ndarray, channels: int) -> np.ndarray:
    lab = np.where(valid, labels, 0).astype(np.int64)
    out = np.zeros((lab.shape[0], channels) + lab.shape[1:])
    np.put_along_axis(out, lab[:, None], 1.0, axis=1)
    return out


def _masked_mean(per_pixel: Tensor, mask: np.ndarray) -> Tensor:
    n = int(mask.sum())
    return (per_pixel * mask.astype(np.float64)).sum() * (1.0 / max(n, 1))


def cross_entropy(logits: Tensor, labels: np.ndarray, ignore: int = IGNORE) -> Tensor:
    """Plain per-pixel softmax cross-entropy."""
    labels = np.asarray(labels)
    valid = _valid_mask(labels, logits.shape[1], ignore)
    logp = F.log_softmax(logits, axis=1)
    picked = (logp * _onehot(labels, valid, logits.shape[1])).sum(axis=1)
    return -_masked_mean(picked, valid)


def task_ce_loss(student_logits: Tensor, labels: np.ndarray, old_classes=(), ignore: int = IGNORE) -> Tensor:
    """Cross-entropy where background-labelled pixels are credited with background plus old-class mass."""
    labels = np.asarray(labels)
    c = student_logits.shape[1]
    if labels.shape != (student_logits.shape[0],) + student_logits.shape[2:]:
        raise ShapeError(f"labels {labels.shape} do not match logits {student_logits.shape}")
    valid = _valid_mask(labels, c, ignore)
    lse_all = F.logsumexp(student_logits, axis=1)
    picked = (student_logits * _onehot(labels, valid, c)).sum(axis=1)
    old = sorted(set(old_classes))
    if old:
        if old[-1] >= c or old[0] < 1:
            raise ShapeError(f"old classes {old} outside logit channels 1..{c - 1}")
        is_bg = (valid & (labels == 0)).astype(np.float64)
        lse_bg = F.logsumexp(F.take(student_logits, [0] + old, axis=1), axis=1)
        picked = picked * (1.0 - is_bg) + lse_bg * is_bg
    return -_masked_mean(picked - lse_all, valid)


def _kd_setup(student_logits: Tensor, teacher_logits, new_classes, mask):
    t = teacher_logits.data if isinstance(teacher_logits, Tensor) else np.asarray(teacher_logits, dtype=np.float64)
    cs, ct = student_logits.shape[1], t.shape[1]
    new = sorted(set(new_classes))
    if (t.shape[0],) + t.shape[2:] != (student_logits.shape[0],) + student_logits.shape[2:]:
        raise ShapeError(f"teacher logits {t.shape} vs student logits {student_logits.shape}")
    if ct > cs or new != list(range(ct, cs)):
        raise ShapeError(
            f"student channels ({cs}) must be teacher channels ({ct}) plus new classes {new}"
        )
    if mask is None:
        mask = np.ones((t.shape[0],) + t.shape[2:], dtype=bool)
    return t, new, ct, np.asarray(mask, dtype=bool)


def unbiased_kd_loss(student_logits: Tensor, teacher_logits, new_classes=(), temperature: float = 1.0,
                     mask: np.ndarray | None = None) -> Tensor:
    """Distillation against the teacher after folding new-class probability into background.

    Per pixel: p = softmax(teacher / T) over background and old classes; the
    student's softmax(student / T) has its background and new-class mass
    summed into one background entry; the loss is ``-sum_c p(c) log q(c)``.
    ``mask`` selects the pixels that count (default: all).
    """
    t, new, ct, mask = _kd_setup(student_logits, teacher_logits, new_classes, mask)
    z = student_logits * (1.0 / temperature) if temperature != 1.0 else student_logits
    tz = t / temperature
    p = np.exp(tz - tz.max(axis=1, keepdims=True))
    p /= p.sum(axis=1, keepdims=True)
    lse_all = F.logsumexp(z, axis=1)
    if new:
        log_bg = F.logsumexp(F.take(z, [0] + new, axis=1), axis=1)
    else:
        log_bg = F.take(z, [0], axis=1).reshape(lse_all.shape)
    cross = log_bg * p[:, 0]
    if ct > 1:
        cross = cross + (F.take(z, list(range(1, ct)), axis=1) * p[:, 1:]).sum(axis=1)
    # sum_c p(c) = 1, so the normaliser enters once
    return -_masked_mean(cross - lse_all, mask)


def standard_kd_loss(student_logits: Tensor, teacher_logits, temperature: float = 1.0,
                     mask: np.ndarray | None = None) -> Tensor:
    """``-sum_c softmax(t/T)_c log softmax(s/T)_c`` with identical channel sets."""
    t, _, _, mask = _kd_setup(student_logits, teacher_logits, (), mask)
    tz = t / temperature
    p = np.exp(tz - tz.max(axis=1, keepdims=True))
    p /= p.sum(axis=1, keepdims=True)
    logq = F.log_softmax(student_logits * (1.0 / temperature), axis=1)
    return -_masked_mean((logq * p).sum(axis=1), mask)
