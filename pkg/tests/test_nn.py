import numpy as np
import pytest

from clora.autodiff import SGD, SgdConfig, Tensor, backward
from clora.autodiff import functional as F
from clora.continual import build_schedule
from clora.errors import ContractError, ShapeError
from clora.lora import create_adapters
from clora.nn import (Linear, ModelSpec, SegModel, count_macs, count_params, extend_classifier,
                      forward_segmentation, linear_macs, mac_breakdown)


def test_output_shape():
    model = SegModel(ModelSpec(num_classes=6))
    x = np.random.default_rng(0).normal(size=(2, 3, 32, 32))
    assert forward_segmentation(model, x).shape == (2, 6, 32, 32)


def test_zero_image_zero_decoder_gives_zero_logits():
    model = SegModel(ModelSpec())
    out = model(np.zeros((1, 3, 32, 32)))
    assert np.all(out.data == 0.0)


def test_wrong_spatial_size(tiny_spec):
    with pytest.raises(ShapeError):
        SegModel(tiny_spec)(np.zeros((1, 3, 12, 12)))


@pytest.mark.parametrize("bad", [dict(image_size=30), dict(embed_dim=10, num_heads=4), dict(num_classes=0)])
def test_spec_invariants(bad):
    with pytest.raises(ContractError):
        ModelSpec(**bad)


def test_zero_b_adapter_is_invisible(tiny_spec, rng):
    model = SegModel(tiny_spec, seed=2)
    model.layers["decoder"].weight.data = rng.normal(size=model.layers["decoder"].weight.shape)
    x = rng.normal(size=(2, 3, 8, 8))
    before = model(x).data
    create_adapters(model, 2, seed=5)
    assert np.max(np.abs(model(x).data - before)) == 0.0


def test_extend_classifier_preserves_rows(rng):
    model = SegModel(ModelSpec(image_size=8, embed_dim=8, num_heads=2, num_layers=1, num_classes=16))
    dec = model.layers["decoder"]
    dec.weight.data = rng.normal(size=dec.weight.shape)
    dec.bias.data = rng.normal(size=dec.bias.shape)
    x = rng.normal(size=(2, 3, 8, 8))
    w, b, before = dec.weight.data.copy(), dec.bias.data.copy(), model(x).data
    extend_classifier(model, 5)
    dec = model.layers["decoder"]
    assert dec.d_out == 21 and model.spec.num_classes == 21
    assert np.array_equal(dec.weight.data[:, :16], w) and np.array_equal(dec.bias.data[:16], b)
    assert np.array_equal(model(x).data[:, :16], before)


def test_extend_classifier_zero():
    with pytest.raises(ContractError):
        extend_classifier(SegModel(ModelSpec(image_size=8, embed_dim=8, num_heads=2, num_layers=1)), 0)


def test_extension_widths_follow_schedule():
    sched = build_schedule("5-3", 21)
    model = SegModel(ModelSpec(image_size=8, embed_dim=8, num_heads=2, num_layers=1,
                               num_classes=1 + len(sched.steps[0].classes)))
    widths = [model.spec.num_classes]
    for step in sched.steps[1:]:
        extend_classifier(model, len(step.classes))
        widths.append(model.spec.num_classes)
    assert sched.num_steps == 6
    assert widths == [6, 9, 12, 15, 18, 21]


def test_linear_param_count():
    layer = Linear("l", Tensor(np.zeros((64, 64))), Tensor(np.zeros(64)))
    assert sum(p.size for _, p in layer.parameters()) == 4160


def _enumeration_oracle(spec: ModelSpec) -> int:
    d, h, P = spec.embed_dim, spec.hidden_dim, spec.patch_dim
    per_block = 4 * (d * d + d) + (d * h + h) + (h * d + d) + 2 * 2 * d
    return (P * d + d) + spec.num_patches * d + spec.num_layers * per_block + 2 * d + (d * spec.num_classes + spec.num_classes)


def test_full_model_param_count_matches_oracle():
    spec = ModelSpec()
    model = SegModel(spec)
    assert count_params(model) == _enumeration_oracle(spec) == sum(p.size for _, p in model.named_parameters())


def test_frozen_encoder_counts_only_decoder():
    model = SegModel(ModelSpec())
    model.set_trainable(model.is_decoder_param)
    d = model.layers["decoder"]
    assert count_params(model, trainable_only=True) == d.weight.size + d.bias.size


def test_trainable_plus_frozen_is_total(tiny_spec):
    model = SegModel(tiny_spec)
    create_adapters(model, 2, seed=0)
    assert count_params(model, True) + count_params(model, frozen_only=True) == count_params(model)


def test_single_linear_macs():
    assert linear_macs(64, 64, 64) == 262144


def test_training_macs_triple_and_batch_linear(tiny_spec):
    model = SegModel(tiny_spec)
    fwd = count_macs(model)
    assert count_macs(model, phase="training") == 3 * fwd
    assert count_macs(model, batch=2) == 2 * fwd
    assert sum(mac_breakdown(model).values()) == fwd


def test_frozen_params_unchanged_by_step(tiny_spec, rng):
    model = SegModel(tiny_spec)
    create_adapters(model, 2, seed=1)
    before = {n: p.data.copy() for n, p in model.named_parameters()}
    frozen = {n for n, p in model.named_parameters() if not p.requires_grad}
    x = rng.normal(size=(2, 3, 8, 8))
    for _ in range(2):
        loss = F.sum(model(x) * Tensor(rng.normal(size=(2, 3, 8, 8))))
        backward(loss)
        SGD(model.parameters(trainable_only=True), SgdConfig(0.1)).step()
    for name, p in model.named_parameters():
        if name in frozen:
            assert np.array_equal(p.data, before[name]), name
    assert any(not np.array_equal(p.data, before[n]) for n, p in model.named_parameters() if n not in frozen)


def test_full_segmentation_loss_gradient(tiny_spec, rng):
    from clora.autodiff import grad_check
    from clora.continual import task_ce_loss

    model = SegModel(tiny_spec, seed=4)
    labels = rng.integers(0, 3, (1, 8, 8))
    dec = model.layers["decoder"]

    def f(w):
        dec.weight = w
        return task_ce_loss(model(x), labels, old_classes=(1,))

    x = rng.normal(size=(1, 3, 8, 8))
    assert grad_check(f, rng.normal(size=dec.weight.shape)) < 1e-5


def test_clone_is_independent(tiny_spec, rng):
    model = SegModel(tiny_spec)
    twin = model.clone()
    model.layers["decoder"].weight.data += 1.0
    assert not np.array_equal(twin.layers["decoder"].weight.data, model.layers["decoder"].weight.data)
