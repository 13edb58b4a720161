"""Shared checks used by both the unit tests and the acceptance run."""

import numpy as np

from clora.continual import TrainMode, build_schedule, new_state, train_task


def expected_trainable(mode: TrainMode, names) -> set[str]:
    names = set(names)
    if mode in (TrainMode.FT, TrainMode.MIB, TrainMode.JT):
        return names
    if mode is TrainMode.MIB_TL:
        return {n for n in names if n.startswith("decoder.")}
    out = {n for n in names if n.startswith(("lora.", "decoder."))}
    if mode is TrainMode.CLORA_REINIT:
        # adapters are folded into q/v at the end of every task
        out |= {n for n in names if n.endswith(("attn.q.W", "attn.v.W"))}
    return out


def snapshot(model) -> dict:
    return {n: (p, p.data.copy()) for n, p in model.named_parameters()}


def changed_parameters(before: dict, model) -> set[str]:
    """Names whose values moved or whose tensor was replaced."""
    changed = set()
    for name, p in model.named_parameters():
        tensor, old = before.get(name, (None, None))
        if tensor is not p or old.shape != p.shape or not np.array_equal(old, p.data):
            changed.add(name)
    return changed


def freezing_report(mode, data, cfg, model_spec, seed=0):
    """Run every step of a short schedule and diff each step's changed set against the contract.

    Returns a list of ``(step, changed, expected)`` triples.
    """
    mode = TrainMode.parse(mode)
    schedule = build_schedule("joint" if mode.joint else "3-2", data.num_classes)
    state = new_state(mode, schedule, model_spec, seed)
    out = []
    while not state.done:
        t = state.t
        before = snapshot(state.model)
        train_task(state, mode, data, cfg)
        names = [n for n, _ in state.model.named_parameters()]
        out.append((t, changed_parameters(before, state.model), expected_trainable(mode, names)))
    return out
