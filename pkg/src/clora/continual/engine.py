"""Class-incremental training driver.

``train_task`` runs one step of a schedule under a ``TrainMode``;
``run_experiment`` chains the steps, evaluates, and assembles a
``MetricsReport``.
"""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .. import lora
from ..autodiff import SGD, SgdConfig, Tensor, backward, no_grad
from ..data.checkpoint import save_checkpoint
from ..data.dataset import SegDataset, to_input
from ..errors import ConfigError, NumericError
from ..metrics import (
    ConfusionMatrix,
    MetricsReport,
    NetScoreInput,
    accumulate,
    averaged_params,
    forget_score,
    miou,
    netscore,
    parse_range,
    per_class_iou,
)
from ..nn import ModelSpec, SegModel, count_macs, count_params, extend_classifier
from ..rng import stream
from .losses import cross_entropy, task_ce_loss, unbiased_kd_loss
from .modes import TrainMode
from .schedule import TaskSchedule, build_schedule, remap_labels, step_indices

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LossConfig:
    kd_weight: float = 10.0
    kd_temperature: float = 1.0
    loss_hook: str = "mib"

    def __post_init__(self):
        if self.kd_weight < 0:
            raise ConfigError("loss.kd_weight: must be >= 0")
        if not self.kd_temperature > 0:
            raise ConfigError("loss.kd_temperature: must be > 0")
        if self.loss_hook not in LOSS_HOOKS:
            raise ConfigError(f"loss.loss_hook: unknown strategy {self.loss_hook!r}")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 12
    batch_size: int = 6
    lr_initial: float = 0.04
    lr_incremental: float = 0.005
    lr_incremental_small: float = 0.001
    small_increment_max: int = 1
    momentum: float = 0.9
    weight_decay: float = 0.0
    rank: int = 8
    lora_scaling: float = 1.0
    lora_init_std: float = 0.02
    hflip: bool = False
    loss: LossConfig = field(default_factory=LossConfig)

    def lr_for(self, t: int, n_new: int) -> float:
        if t == 0:
            return self.lr_initial
        return self.lr_incremental_small if n_new <= self.small_increment_max else self.lr_incremental


# loss hooks: (logits, labels, teacher logits or None, old classes, new classes, cfg) -> (loss, parts)

def _hook_none(logits, labels, teacher, old, new, cfg):
    ce = cross_entropy(logits, labels)
    return ce, {"ce": ce.item()}


def _hook_mib(logits, labels, teacher, old, new, cfg):
    ce = task_ce_loss(logits, labels, old)
    parts = {"ce": ce.item()}
    if teacher is None or cfg.loss.kd_weight == 0:
        return ce, parts
    kd = unbiased_kd_loss(logits, teacher, new, cfg.loss.kd_temperature, mask=labels != 255)
    parts["kd"] = kd.item()
    return ce + kd * cfg.loss.kd_weight, parts


LOSS_HOOKS = {"none": _hook_none, "mib": _hook_mib}


@dataclass
class IncrementalState:
    model: SegModel
    schedule: TaskSchedule
    mode: TrainMode
    seed: int = 0
    t: int = 0
    teacher: SegModel | None = None
    seen: tuple[int, ...] = ()
    adapters: lora.AdapterSet | None = None
    adapter_history: list = field(default_factory=list)
    log: list[dict] = field(default_factory=list)
    trainable_per_step: list[int] = field(default_factory=list)
    train_macs: float = 0.0

    @property
    def done(self) -> bool:
        return self.t >= self.schedule.num_steps


def new_state(mode, schedule: TaskSchedule, spec: ModelSpec | None = None, seed: int = 0) -> IncrementalState:
    mode = TrainMode.parse(mode)
    if mode.joint and schedule.num_steps != 1:
        raise ConfigError(f"mode {mode.value} trains jointly and needs a single-step schedule, "
                          f"got {schedule.name!r} with {schedule.num_steps} steps")
    spec = spec or ModelSpec()
    spec = replace(spec, num_classes=1 + len(schedule.steps[0].classes))
    return IncrementalState(SegModel(spec, seed), schedule, mode, seed)


def _configure_trainable(state: IncrementalState, cfg: TrainConfig) -> None:
    model, mode = state.model, state.mode
    if mode.uses_lora:
        if state.adapters is None:
            state.adapters = lora.create_adapters(model, cfg.rank, stream_seed(state.seed, "lora", 0),
                                                  scaling=cfg.lora_scaling, init_std=cfg.lora_init_std)
            state.adapter_history.append(state.adapters)
        model.freeze_encoder()
    elif mode.decoder_only:
        model.set_trainable(model.is_decoder_param)
    else:
        model.set_trainable(lambda name: True)


def stream_seed(seed: int, *names) -> int:
    return int(stream(seed, *names).integers(0, 2**31 - 1))


def teacher_logits(teacher: SegModel, x: np.ndarray) -> np.ndarray:
    with no_grad():
        return teacher(x).data


def train_task(state: IncrementalState, mode, data: SegDataset, cfg: TrainConfig,
               indices=None, on_epoch=None) -> IncrementalState:
    """Train step ``state.t`` of the schedule and advance the state.

    ``indices`` restricts training to those images of ``data`` (default: the
    train-split images showing a class of the current step). Labels are
    remapped to the step's classes here.
    """
    mode = TrainMode.parse(mode)
    if mode is not state.mode:
        raise ConfigError(f"state was built for {state.mode.value}, not {mode.value}")
    if state.done:
        raise ConfigError("schedule already finished")
    t = state.t
    step = state.schedule.steps[t]
    model = state.model
    new = tuple(step.classes)
    old = state.seen

    distill = mode.distills and cfg.loss.loss_hook != "none"
    state.teacher = None
    if t >= 1:
        if distill:
            state.teacher = model.clone()
            state.teacher.set_trainable(lambda name: False)
        extend_classifier(model, len(new))
    _configure_trainable(state, cfg)

    if indices is None:
        indices = step_indices(data.labels, data.split("train"), new)
    indices = np.asarray(indices, dtype=np.int64)
    labels = remap_labels(data.labels[indices], new)
    inputs = to_input(data.images[indices])

    params = model.parameters(trainable_only=True)
    lr = cfg.lr_for(t, len(new))
    opt = SGD(params, SgdConfig(lr, cfg.momentum, cfg.weight_decay))
    hook = LOSS_HOOKS[cfg.loss.loss_hook if distill else "none"]
    rng = stream(state.seed, "shuffle", t)
    state.trainable_per_step.append(count_params(model, trainable_only=True))
    state.train_macs += cfg.epochs * len(indices) * count_macs(model, 1, "training")

    for epoch in range(cfg.epochs):
        order = rng.permutation(len(indices))
        sums: dict[str, float] = {}
        batches = 0
        for start in range(0, len(order), cfg.batch_size):
            b = order[start:start + cfg.batch_size]
            x, y = inputs[b], labels[b]
            if cfg.hflip:
                flip = rng.random(len(b)) < 0.5
                x = np.where(flip[:, None, None, None], x[..., ::-1], x)
                y = np.where(flip[:, None, None], y[..., ::-1], y)
            tl = teacher_logits(state.teacher, x) if state.teacher is not None else None
            logits = model(x)
            loss, parts = hook(logits, y, tl, old, new, cfg)
            value = loss.item()
            if not np.isfinite(value):
                raise NumericError(f"non-finite loss at step {t}, epoch {epoch}")
            backward(loss)
            opt.step()
            parts["loss"] = value
            for k, v in parts.items():
                sums[k] = sums.get(k, 0.0) + v
            batches += 1
        entry = {"step": t, "epoch": epoch, "lr": lr, "images": int(len(indices))}
        entry.update({k: v / max(batches, 1) for k, v in sorted(sums.items())})
        state.log.append(entry)
        if on_epoch is not None:
            on_epoch(entry)

    if mode.reinit_each_task:
        state.adapters = lora.reinit(model, state.adapters, stream_seed(state.seed, "lora", t + 1))
        state.adapter_history.append(state.adapters)
    state.seen = old + new
    state.t = t + 1
    return state


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("CLORA_THREADS", "1")))
    except ValueError:
        return 1


def predict(model: SegModel, images_u8: np.ndarray, batch_size: int = 32) -> np.ndarray:
    out = []
    with no_grad():
        for start in range(0, len(images_u8), batch_size):
            logits = model(to_input(images_u8[start:start + batch_size])).data
            out.append(logits.argmax(axis=1).astype(np.uint8))
    return np.concatenate(out) if out else np.zeros((0,) + images_u8.shape[1:3], np.uint8)


def evaluate(model: SegModel, data: SegDataset, indices=None, seen=None, threads: int | None = None,
             batch_size: int = 32) -> ConfusionMatrix:
    """Confusion matrix over ``indices`` (default: val split).

    With ``seen`` given, ground-truth classes outside it count as background.
    Work is split across ``CLORA_THREADS`` threads; per-thread matrices are
    summed in chunk order.
    """
    idx = data.split("val") if indices is None else np.asarray(indices, dtype=np.int64)
    gt = data.labels[idx]
    if seen is not None:
        gt = remap_labels(gt, seen)
    n = threads or _threads()
    chunks = [c for c in np.array_split(np.arange(len(idx)), n) if len(c)]

    def work(chunk):
        cm = ConfusionMatrix(data.num_classes)
        return accumulate(cm, predict(model, data.images[idx[chunk]], batch_size), gt[chunk])

    if len(chunks) <= 1:
        parts = [work(c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            parts = list(pool.map(work, chunks))
    total = ConfusionMatrix(data.num_classes)
    for p in parts:
        total = total + p
    return total


@dataclass
class ExperimentResult:
    report: MetricsReport
    state: IncrementalState
    confusion: ConfusionMatrix
    step_log: list[dict]


def run_experiment(mode, schedule_spec: str, datasets, cfg: TrainConfig, *, seed: int = 0,
                   model_spec: ModelSpec | None = None, dataset_ids=None, ranges=None,
                   jt_miou_all: float | str | None = "auto", out_dir=None,
                   config_echo: dict | None = None) -> ExperimentResult:
    """Run every step of ``schedule_spec`` and build the final report.

    ``datasets`` is one ``SegDataset`` or a list indexed by per-step dataset
    id; evaluation always uses the first. ``jt_miou_all="auto"`` trains the
    matching joint baseline to obtain the forget score; a number uses it as
    given; ``None`` leaves the score empty.
    """
    mode = TrainMode.parse(mode)
    if isinstance(datasets, SegDataset):
        datasets = [datasets]
    eval_data = datasets[0]
    schedule = build_schedule(schedule_spec, eval_data.num_classes, dataset_ids)
    for s in schedule.steps:
        if not 0 <= s.dataset_id < len(datasets):
            raise ConfigError(f"dataset id {s.dataset_id} has no dataset")
    state = new_state(mode, schedule, model_spec, seed)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        (out / "checkpoints").mkdir(parents=True, exist_ok=True)
        steps_file = (out / "steps.jsonl").open("w")
    else:
        steps_file = None

    def on_epoch(entry):
        if steps_file is not None:
            steps_file.write(json.dumps(entry, sort_keys=True) + "\n")
            steps_file.flush()

    step_miou = []
    try:
        for t, step in enumerate(schedule.steps):
            train_task(state, mode, datasets[step.dataset_id], cfg, on_epoch=on_epoch)
            cm = evaluate(state.model, eval_data, seen=state.seen)
            m = miou(cm, [0, *state.seen])
            step_miou.append(m)
            log.info("step %d done: mIoU(seen)=%s", t, m)
            if not np.all(np.isfinite(state.model.layers["decoder"].weight.data)):
                raise NumericError(f"non-finite classifier weights after step {t}")
            if out is not None:
                save_checkpoint(state.model, state.adapters if state.mode.uses_lora else None,
                                out / "checkpoints" / f"step_{t}.clra")
    finally:
        if steps_file is not None:
            steps_file.close()

    cm = evaluate(state.model, eval_data)
    names = ranges or schedule.default_ranges()
    range_vals = {r: miou(cm, parse_range(r, eval_data.num_classes)) for r in names}
    if "All" not in range_vals:
        range_vals["All"] = miou(cm, range(eval_data.num_classes))
    a_n = range_vals["All"]

    if jt_miou_all == "auto":
        if mode.joint:
            jt_miou_all = a_n
        else:
            ref = run_experiment(mode.joint_reference, "joint", datasets[:1], cfg, seed=seed,
                                 model_spec=model_spec, jt_miou_all=None)
            jt_miou_all = ref.report.miou_all
    fs = forget_score(jt_miou_all, a_n) if (jt_miou_all is not None and a_n is not None) else None

    trainable_initial = state.trainable_per_step[0]
    trainable_inc = state.trainable_per_step[-1] if len(state.trainable_per_step) > 1 else trainable_initial
    p_n = averaged_params(trainable_initial, trainable_inc)
    m_n = state.train_macs / 1e6
    score = netscore(NetScoreInput(a_n, p_n, m_n)) if a_n else None
    iou = per_class_iou(cm)
    report = MetricsReport(
        mode=mode.value,
        schedule=schedule.name,
        seed=seed,
        rank=cfg.rank if mode.uses_lora else None,
        ranges=range_vals,
        per_class_iou=[None if np.isnan(v) else float(100 * v) for v in iou],
        step_miou_all=step_miou,
        fs=fs,
        jt_miou_all=jt_miou_all,
        trainable_initial=trainable_initial,
        trainable_incremental=trainable_inc,
        total_params=count_params(state.model),
        p_n_millions=p_n,
        m_n_millions=m_n,
        netscore=score,
        kd_weight=cfg.loss.kd_weight,
        kd_temperature=cfg.loss.kd_temperature,
        config=config_echo if config_echo is not None else {"train": asdict(cfg)},
    )
    return ExperimentResult(report, state, cm, state.log)
