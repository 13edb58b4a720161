"""Low-rank adapters on the attention query/value projections.

An adapter adds ``s * (x @ A) @ B`` to its layer's output: ``A`` [d_in, r]
projects down to rank ``r`` and ``B`` [r, d_out] projects back up, so the
dense update is ``dW = s * A @ B`` in the layer's ``[d_in, d_out]`` weight
layout. ``A`` starts Gaussian and ``B`` starts at zero, making a fresh
adapter an exact no-op.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor
from .errors import ContractError
from .nn import Linear, SegModel
from .rng import stream

DEFAULT_TARGETS = ("attn.q", "attn.v")
INIT_STD = 0.02


@dataclass(eq=False)
class LoRAAdapter:
    target_name: str
    rank: int
    A: Tensor
    B: Tensor
    scaling: float = 1.0

    def __post_init__(self):
        self.A.name = f"lora.{self.target_name}.A"
        self.B.name = f"lora.{self.target_name}.B"

    def delta(self, x: Tensor) -> Tensor:
        out = (x @ self.A) @ self.B
        return out if self.scaling == 1.0 else out * self.scaling

    def delta_weight(self) -> np.ndarray:
        return self.scaling * (self.A.data @ self.B.data)

    def num_params(self) -> int:
        return self.A.size + self.B.size

    def named_parameters(self):
        return [(self.A.name, self.A), (self.B.name, self.B)]


@dataclass(eq=False)
class AdapterSet:
    adapters: dict[str, LoRAAdapter]
    rank: int
    scaling: float = 1.0
    targets: tuple[str, ...] = DEFAULT_TARGETS
    init_std: float = INIT_STD
    merged: bool = field(default=False)

    def parameters(self) -> list[Tensor]:
        return [t for a in self.adapters.values() for t in (a.A, a.B)]

    def __len__(self) -> int:
        return len(self.adapters)


def target_layers(model: SegModel, targets=DEFAULT_TARGETS) -> list[str]:
    return [name for name in model.layers if any(name.endswith("." + t) for t in targets)]


def create_adapters(model: SegModel, rank: int, seed: int, *, scaling: float = 1.0,
                    init_std: float = INIT_STD, targets=DEFAULT_TARGETS) -> AdapterSet:
    """Attach one fresh adapter per targeted projection and freeze the encoder."""
    names = target_layers(model, targets)
    if rank < 1:
        raise ContractError(f"rank must be >= 1, got {rank}")
    for name in names:
        layer = model.layers[name]
        if rank > min(layer.d_in, layer.d_out):
            raise ContractError(f"rank {rank} exceeds min dims {layer.weight.shape} of {name}")
        if layer.adapter is not None:
            raise ContractError(f"{name} already carries an adapter")
    rng = stream(seed, "lora")
    adapters = {}
    for name in names:
        layer = model.layers[name]
        a = Tensor(rng.normal(0.0, init_std, (layer.d_in, rank)), requires_grad=True)
        b = Tensor(np.zeros((rank, layer.d_out)), requires_grad=True)
        layer.adapter = adapters[name] = LoRAAdapter(name, rank, a, b, scaling)
    model.freeze_encoder()
    return AdapterSet(adapters, rank, scaling, tuple(targets), init_std)


def lora_forward(layer: Linear, x: Tensor) -> Tensor:
    """``x @ W + b`` plus the adapter contribution when one is attached."""
    return layer(x)


def merge(model: SegModel, adapters: AdapterSet) -> SegModel:
    """Fold every adapter into its base weight and detach it."""
    if adapters.merged:
        raise ContractError("adapter set already merged")
    for name, adapter in adapters.adapters.items():
        layer = model.layers[name]
        if layer.adapter is not adapter:
            raise ContractError(f"adapter for {name} is not attached to this model")
    for name, adapter in adapters.adapters.items():
        layer = model.layers[name]
        layer.weight.data = layer.weight.data + adapter.delta_weight()
        layer.adapter = None
    adapters.merged = True
    return model


def reinit(model: SegModel, adapters: AdapterSet, seed: int) -> AdapterSet:
    """Merge the current adapters into the base weights, then start fresh ones."""
    merge(model, adapters)
    return create_adapters(model, adapters.rank, seed, scaling=adapters.scaling,
                           init_std=adapters.init_std, targets=adapters.targets)


def lora_param_count(adapters: AdapterSet) -> int:
    return int(sum(a.rank * (a.A.shape[0] + a.B.shape[1]) for a in adapters.adapters.values()))
