import hashlib
import json

import numpy as np
import pytest

from _contracts import freezing_report
from clora.continual import (LossConfig, TrainConfig, TrainMode, build_schedule, evaluate,
                             merge_task_predictions, new_state, run_experiment, train_task)
from clora.errors import ConfigError, ContractError
from clora.nn import count_params


@pytest.mark.parametrize("mode", list(TrainMode))
def test_freezing_contract(mode, small_data, small_model_spec, quick_cfg):
    for step, changed, expected in freezing_report(mode, small_data, quick_cfg, small_model_spec):
        assert changed == expected, (step, sorted(changed ^ expected)[:6])


def test_clora_step0_trainable_set(small_data, small_model_spec, quick_cfg):
    state = new_state("CLORA", build_schedule("3-2", 6), small_model_spec)
    train_task(state, "CLORA", small_data, quick_cfg)
    trainable = {n for n, p in state.model.named_parameters() if p.requires_grad}
    assert trainable == {n for n, _ in state.model.named_parameters() if n.startswith(("lora.", "decoder."))}


def test_joint_mode_rejects_multistep():
    with pytest.raises(ConfigError):
        new_state("JT", build_schedule("15-5", 21))
    with pytest.raises(ConfigError):
        new_state(TrainMode.CLORA_JT, build_schedule("3-1", 6))


def test_mode_mismatch_and_finished(small_data, small_model_spec, quick_cfg):
    state = new_state("FT", build_schedule("joint", 6), small_model_spec)
    with pytest.raises(ConfigError):
        train_task(state, "MIB", small_data, quick_cfg)
    train_task(state, "FT", small_data, quick_cfg)
    with pytest.raises(ConfigError):
        train_task(state, "FT", small_data, quick_cfg)


def _checksum(model):
    h = hashlib.sha256()
    for name, p in model.named_parameters():
        h.update(name.encode())
        h.update(p.data.tobytes())
    return h.hexdigest()


def test_teacher_immutable_and_gradient_free(small_data, small_model_spec):
    cfg = TrainConfig(epochs=2, batch_size=4, rank=2)
    state = new_state("CLORA", build_schedule("3-2", 6), small_model_spec)
    train_task(state, "CLORA", small_data, cfg)
    seen = []

    def probe(entry):
        seen.append(_checksum(state.teacher))
        assert all(not p.requires_grad for p in state.teacher.parameters())

    train_task(state, "CLORA", small_data, cfg, on_epoch=probe)
    assert state.teacher is not None and len(seen) == 2 and len(set(seen)) == 1
    assert state.teacher.spec.num_classes == 4 and state.model.spec.num_classes == 6


def test_teacher_only_when_distilling(small_data, small_model_spec, quick_cfg):
    for mode, expect in [("FT", False), ("CLORA_FT", False), ("MIB", True), ("CLORA", True)]:
        state = new_state(mode, build_schedule("3-2", 6), small_model_spec)
        assert state.teacher is None
        train_task(state, mode, small_data, quick_cfg)
        assert state.teacher is None
        train_task(state, mode, small_data, quick_cfg)
        assert (state.teacher is not None) == expect, mode


def test_single_adapter_continuity(small_data, small_model_spec, quick_cfg):
    state = new_state("CLORA", build_schedule("3-1", 6), small_model_spec)
    train_task(state, "CLORA", small_data, quick_cfg)
    first = state.adapters
    storage = {n: (a.A, a.B) for n, a in first.adapters.items()}
    while not state.done:
        train_task(state, "CLORA", small_data, quick_cfg)
    assert state.adapters is first and len(state.adapter_history) == 1
    for n, a in state.adapters.adapters.items():
        assert a.A is storage[n][0] and a.B is storage[n][1]
        assert state.model.layers[n].adapter is a


def test_reinit_creates_fresh_adapters_each_task(small_data, small_model_spec, quick_cfg):
    state = new_state("CLORA_REINIT", build_schedule("3-1", 6), small_model_spec)
    while not state.done:
        train_task(state, "CLORA_REINIT", small_data, quick_cfg)
    assert len(state.adapter_history) == 1 + 3
    assert len({id(a) for a in state.adapter_history}) == 4


def test_clora_fraction_below_ten_percent_of_ft():
    from clora.lora import create_adapters
    from clora.nn import ModelSpec, SegModel

    model = SegModel(ModelSpec())
    full = count_params(model)
    create_adapters(model, 8, seed=0)
    assert count_params(model, trainable_only=True) < 0.1 * full


def test_loss_hook_validation():
    with pytest.raises(ConfigError):
        LossConfig(loss_hook="sats")
    with pytest.raises(ConfigError):
        LossConfig(kd_weight=-1)


def test_nan_watchdog(small_data, small_model_spec):
    from clora.errors import NumericError

    cfg = TrainConfig(epochs=1, batch_size=4, lr_initial=1e200)
    state = new_state("FT", build_schedule("joint", 6), small_model_spec)
    with np.errstate(all="ignore"), pytest.raises(NumericError):
        train_task(state, "FT", small_data, cfg)


def test_evaluate_threads_agree(small_data, small_model_spec, quick_cfg, monkeypatch):
    state = new_state("FT", build_schedule("joint", 6), small_model_spec)
    train_task(state, "FT", small_data, quick_cfg)
    one = evaluate(state.model, small_data, threads=1)
    monkeypatch.setenv("CLORA_THREADS", "3")
    three = evaluate(state.model, small_data)
    assert one == three and one.total == (small_data.labels[small_data.split("val")] != 255).sum()


def test_run_experiment_report(small_data, small_model_spec, quick_cfg, tmp_path):
    res = run_experiment("CLORA", "3-1", small_data, quick_cfg, seed=1, model_spec=small_model_spec,
                         out_dir=tmp_path)
    r = res.report
    assert set(r.ranges) == {"0-3", "4-5", "All"}
    assert r.fs is not None and r.jt_miou_all is not None
    assert r.fs == pytest.approx(r.jt_miou_all - r.miou_all, abs=1e-9)
    assert 0 < r.trainable_fraction < 0.5 and r.rank == 2
    assert len(r.step_miou_all) == 3
    assert sorted(p.name for p in (tmp_path / "checkpoints").iterdir()) == [f"step_{i}.clra" for i in range(3)]
    lines = [json.loads(x) for x in (tmp_path / "steps.jsonl").read_text().splitlines()]
    assert [x["step"] for x in lines] == [0, 1, 2] and all("loss" in x and "lr" in x for x in lines)
    assert r.netscore is not None


def test_run_is_deterministic(small_data, small_model_spec, quick_cfg):
    a = run_experiment("MIB", "3-2", small_data, quick_cfg, seed=5, model_spec=small_model_spec, jt_miou_all=None)
    b = run_experiment("MIB", "3-2", small_data, quick_cfg, seed=5, model_spec=small_model_spec, jt_miou_all=None)
    assert a.report.to_json() == b.report.to_json()
    for (n, p), (_, q) in zip(a.state.model.named_parameters(), b.state.model.named_parameters()):
        assert p.data.tobytes() == q.data.tobytes(), n


def test_lr_rule():
    cfg = TrainConfig()
    assert cfg.lr_for(0, 15) == 0.04
    assert cfg.lr_for(1, 1) == 0.001
    assert cfg.lr_for(1, 5) == 0.005


# prediction merging

def test_merge_single_task_is_argmax(rng):
    logits = rng.normal(size=(2, 4, 3, 3))
    assert np.array_equal(merge_task_predictions([logits]), logits.argmax(axis=1))


def test_merge_conflict_goes_to_larger_logit():
    a = np.zeros((1, 2, 1, 1))
    b = np.zeros((1, 2, 1, 1))
    a[0, 1] = 3.0   # task A: its class (merged id 1)
    b[0, 1] = 5.0   # task B: its class (merged id 2)
    assert merge_task_predictions([a, b])[0, 0, 0] == 2
    b[0, 1] = 1.0
    assert merge_task_predictions([a, b])[0, 0, 0] == 1


def test_merge_empty():
    with pytest.raises(ContractError):
        merge_task_predictions([])
