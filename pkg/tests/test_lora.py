import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clora.autodiff import Tensor, backward
from clora.autodiff import functional as F
from clora.errors import ContractError
from clora.lora import LoRAAdapter, create_adapters, lora_forward, lora_param_count, merge, reinit
from clora.nn import Linear, ModelSpec, SegModel, count_params


def _model(spec, seed=0):
    model = SegModel(spec, seed)
    dec = model.layers["decoder"]
    dec.weight.data = np.random.default_rng(seed + 100).normal(size=dec.weight.shape)
    return model


def _randomize(adapters, rng, scale=0.3):
    for a in adapters.adapters.values():
        a.B.data = rng.normal(0, scale, a.B.shape)


def test_desk_model_gets_eight_adapters():
    adapters = create_adapters(SegModel(ModelSpec()), 8, seed=0)
    assert len(adapters) == 8
    assert all(n.endswith(("attn.q", "attn.v")) for n in adapters.adapters)


def test_creation_state(tiny_spec):
    model = SegModel(tiny_spec)
    weights = {n: l.weight.data.copy() for n, l in model.layers.items()}
    adapters = create_adapters(model, 2, seed=0)
    for a in adapters.adapters.values():
        assert np.all(a.B.data == 0) and np.std(a.A.data) > 0
    for n, layer in model.layers.items():
        assert np.array_equal(layer.weight.data, weights[n])
        assert layer.weight.requires_grad == (n == "decoder")


def test_rank_too_large(tiny_spec):
    with pytest.raises(ContractError):
        create_adapters(SegModel(tiny_spec), 9, seed=0)
    with pytest.raises(ContractError):
        create_adapters(SegModel(tiny_spec), 0, seed=0)


def test_param_count_additivity():
    adapters = create_adapters(SegModel(ModelSpec()), 8, seed=0)
    per = {a.num_params() for a in adapters.adapters.values()}
    assert per == {1024}
    assert lora_param_count(adapters) == 8 * 1024 == 8192


def test_fraction_against_enumeration():
    model = SegModel(ModelSpec())
    adapters = create_adapters(model, 8, seed=0)
    base = sum(p.size for n, p in model.named_parameters() if not n.startswith("lora."))
    assert count_params(model) == base + 8192
    assert lora_param_count(adapters) / count_params(model) == 8192 / (base + 8192)


def test_single_adapter_count():
    a = LoRAAdapter("x", 8, Tensor(np.zeros((64, 8))), Tensor(np.zeros((8, 64))))
    assert a.num_params() == 1024


def test_hand_example():
    layer = Linear("l", Tensor(np.eye(2)), Tensor(np.zeros(2)))
    layer.adapter = LoRAAdapter("l", 1, Tensor([[1.0], [0.0]]), Tensor([[0.5, 0.0]]))
    assert np.allclose(layer.adapter.delta_weight(), [[0.5, 0], [0, 0]])
    assert lora_forward(layer, Tensor([[1.0, 1.0]])).data.tolist() == [[1.5, 1.0]]


def test_no_adapter_is_plain_linear(rng):
    layer = Linear("l", Tensor(rng.normal(size=(3, 4))), Tensor(rng.normal(size=4)))
    x = rng.normal(size=(2, 3))
    assert np.array_equal(lora_forward(layer, Tensor(x)).data, x @ layer.weight.data + layer.bias.data)


def test_dense_oracle(rng):
    w, b = rng.normal(size=(16, 12)), rng.normal(size=12)
    A, B = rng.normal(size=(16, 4)), rng.normal(size=(4, 12))
    layer = Linear("l", Tensor(w), Tensor(b))
    layer.adapter = LoRAAdapter("l", 4, Tensor(A), Tensor(B), scaling=0.7)
    x = rng.normal(size=(5, 16))
    dense = x @ (w + 0.7 * A @ B) + b
    assert np.max(np.abs(lora_forward(layer, Tensor(x)).data - dense)) <= 1e-10


def test_gradients_reach_only_factors(tiny_spec, rng):
    model = _model(tiny_spec)
    adapters = create_adapters(model, 2, seed=0)
    _randomize(adapters, rng)
    backward(F.sum(model(rng.normal(size=(2, 3, 8, 8))) * Tensor(rng.normal(size=(2, 3, 8, 8)))))
    q = model.layers["block0.attn.q"]
    assert not q.weight.requires_grad and np.all(q.weight.grad is None or q.weight.grad == 0)
    a = adapters.adapters["block0.attn.q"]
    assert np.abs(a.A.grad).sum() > 0 and np.abs(a.B.grad).sum() > 0


def test_merge_equivalence(tiny_spec, rng):
    model = _model(tiny_spec)
    adapters = create_adapters(model, 2, seed=0)
    _randomize(adapters, rng)
    xs = [rng.normal(size=(1, 3, 8, 8)) for _ in range(10)]
    before = [model(x).data for x in xs]
    merge(model, adapters)
    assert all(l.adapter is None for l in model.layers.values())
    assert not any(n.startswith("lora.") for n, _ in model.named_parameters())
    for x, ref in zip(xs, before):
        assert np.max(np.abs(model(x).data - ref)) <= 1e-9


def test_merge_zero_b_keeps_weights_bitwise(tiny_spec):
    model = SegModel(tiny_spec)
    adapters = create_adapters(model, 2, seed=0)
    q = model.layers["block0.attn.q"].weight.data.copy()
    merge(model, adapters)
    assert np.array_equal(model.layers["block0.attn.q"].weight.data, q)


def test_double_merge(tiny_spec):
    model = SegModel(tiny_spec)
    adapters = create_adapters(model, 2, seed=0)
    merge(model, adapters)
    with pytest.raises(ContractError):
        merge(model, adapters)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**16))
def test_rank_bound(r, seed):
    rng = np.random.default_rng(seed)
    model = SegModel(ModelSpec(image_size=8, embed_dim=8, num_heads=2, num_layers=1))
    adapters = create_adapters(model, r, seed=seed)
    _randomize(adapters, rng)
    for a in adapters.adapters.values():
        s = np.linalg.svd(a.delta_weight(), compute_uv=False)
        assert np.all(s[r:] <= 1e-10 * s[0])


def test_param_count_strictly_monotone_in_rank():
    counts = [lora_param_count(create_adapters(SegModel(ModelSpec(num_layers=1)), r, seed=0)) for r in range(1, 9)]
    assert all(a < b for a, b in zip(counts, counts[1:]))


def test_reinit_preserves_forward_and_moves_base(tiny_spec, rng):
    model = _model(tiny_spec)
    original = model.layers["block0.attn.q"].weight.data.copy()
    adapters = create_adapters(model, 2, seed=0)
    _randomize(adapters, rng)
    x = rng.normal(size=(2, 3, 8, 8))
    before = model(x).data
    fresh = reinit(model, adapters, seed=1)
    assert fresh is not adapters and len(fresh) == len(adapters)
    assert all(np.all(a.B.data == 0) for a in fresh.adapters.values())
    assert np.max(np.abs(model(x).data - before)) <= 1e-9
    assert not np.array_equal(model.layers["block0.attn.q"].weight.data, original)


def test_two_reinit_cycles_equal_summed_deltas(tiny_spec, rng):
    model = _model(tiny_spec)
    oracle = model.clone()
    adapters = create_adapters(model, 2, seed=0)
    summed = {n: np.zeros_like(model.layers[n].weight.data) for n in adapters.adapters}
    for cycle in range(2):
        _randomize(adapters, rng)
        for n, a in adapters.adapters.items():
            summed[n] += a.delta_weight()
        adapters = reinit(model, adapters, seed=cycle + 1)
    for n, d in summed.items():
        oracle.layers[n].weight.data = oracle.layers[n].weight.data + d
    for _ in range(3):
        x = rng.normal(size=(1, 3, 8, 8))
        assert np.max(np.abs(model(x).data - oracle(x).data)) <= 1e-9
