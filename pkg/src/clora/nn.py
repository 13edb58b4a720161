"""Desk-scale ViT segmentation network and its parameter / MAC accounting.

Layout: patch embedding -> ``num_layers`` pre-norm transformer blocks with
separate ``q``, ``k``, ``v`` and ``proj`` linears -> final LayerNorm -> a 1x1
convolution classifier on the patch grid, upsampled to pixels by nearest
neighbour. Linear weights are stored ``[d_in, d_out]`` so ``y = x @ W + b``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .autodiff import Tensor
from .autodiff import functional as F
from .errors import ContractError, ShapeError
from .rng import stream

DECODER = "decoder"


@dataclass(frozen=True)
class ModelSpec:
    image_size: int = 32
    patch_size: int = 4
    embed_dim: int = 64
    num_heads: int = 4
    num_layers: int = 4
    mlp_ratio: int = 2
    num_classes: int = 6
    in_channels: int = 3

    def __post_init__(self):
        if self.image_size <= 0 or self.patch_size <= 0 or self.image_size % self.patch_size:
            raise ContractError(f"image_size {self.image_size} not divisible by patch_size {self.patch_size}")
        if self.embed_dim <= 0 or self.num_heads <= 0 or self.embed_dim % self.num_heads:
            raise ContractError(f"embed_dim {self.embed_dim} not divisible by num_heads {self.num_heads}")
        if self.num_classes < 1:
            raise ContractError("num_classes must be >= 1")
        if self.num_layers < 0 or self.mlp_ratio < 1 or self.in_channels < 1:
            raise ContractError("num_layers >= 0, mlp_ratio >= 1 and in_channels >= 1 required")

    @property
    def grid(self) -> int:
        return self.image_size // self.patch_size

    @property
    def num_patches(self) -> int:
        return self.grid * self.grid

    @property
    def patch_dim(self) -> int:
        return self.in_channels * self.patch_size * self.patch_size

    @property
    def hidden_dim(self) -> int:
        return self.embed_dim * self.mlp_ratio


class Linear:
    """Affine map with an optional low-rank adapter slot.

    With an adapter attached the output is ``x @ W + b + adapter.delta(x)``.
    """

    def __init__(self, name: str, weight: Tensor, bias: Tensor):
        self.name = name
        self.weight = weight
        self.bias = bias
        self.adapter = None
        weight.name = f"{name}.W"
        bias.name = f"{name}.b"

    @property
    def d_in(self) -> int:
        return self.weight.shape[0]

    @property
    def d_out(self) -> int:
        return self.weight.shape[1]

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.d_in:
            raise ShapeError(f"{self.name}: input {x.shape} does not match weight {self.weight.shape}")
        out = x @ self.weight + self.bias
        if self.adapter is not None:
            out = out + self.adapter.delta(x)
        return out

    def parameters(self):
        return [(self.weight.name, self.weight), (self.bias.name, self.bias)]


class SegModel:
    def __init__(self, spec: ModelSpec, seed: int = 0):
        self.spec = spec
        rng = stream(seed, "init")
        d, h = spec.embed_dim, spec.hidden_dim
        self.layers: dict[str, Linear] = {}
        self.norms: dict[str, tuple[Tensor, Tensor]] = {}

        def linear(name, d_in, d_out, zero=False):
            w = np.zeros((d_in, d_out)) if zero else rng.normal(0.0, 1.0 / math.sqrt(d_in), (d_in, d_out))
            layer = Linear(name, Tensor(w, requires_grad=True), Tensor(np.zeros(d_out), requires_grad=True))
            self.layers[name] = layer
            return layer

        def norm(name):
            self.norms[name] = (Tensor(np.ones(d), requires_grad=True, name=f"{name}.gamma"),
                                Tensor(np.zeros(d), requires_grad=True, name=f"{name}.beta"))

        linear("patch_embed", spec.patch_dim, d)
        self.pos_embed = Tensor(rng.normal(0.0, 0.02, (spec.num_patches, d)), requires_grad=True, name="pos_embed")
        for i in range(spec.num_layers):
            norm(f"block{i}.ln1")
            for part in ("q", "k", "v", "proj"):
                linear(f"block{i}.attn.{part}", d, d)
            norm(f"block{i}.ln2")
            linear(f"block{i}.mlp.fc1", d, h)
            linear(f"block{i}.mlp.fc2", h, d)
        norm("norm")
        linear(DECODER, d, spec.num_classes, zero=True)

    # parameter views

    def named_parameters(self, include_adapters: bool = True) -> list[tuple[str, Tensor]]:
        out = [("pos_embed", self.pos_embed)]
        for layer in self.layers.values():
            out.extend(layer.parameters())
        for gamma, beta in self.norms.values():
            out.append((gamma.name, gamma))
            out.append((beta.name, beta))
        if include_adapters:
            for layer in self.layers.values():
                if layer.adapter is not None:
                    out.extend(layer.adapter.named_parameters())
        return out

    def parameters(self, trainable_only: bool = False) -> list[Tensor]:
        return [p for _, p in self.named_parameters() if p.requires_grad or not trainable_only]

    def is_decoder_param(self, name: str) -> bool:
        return name.startswith(DECODER + ".")

    def frozen_mask(self) -> dict[str, bool]:
        return {name: not p.requires_grad for name, p in self.named_parameters()}

    def set_trainable(self, predicate) -> None:
        """Mark every parameter whose name satisfies ``predicate`` trainable, the rest frozen."""
        for name, p in self.named_parameters():
            want = bool(predicate(name))
            if p.requires_grad != want:
                p.set_requires_grad(want)

    def freeze_encoder(self) -> None:
        """Freeze everything except the classifier and attached adapters."""
        self.set_trainable(lambda n: self.is_decoder_param(n) or n.startswith("lora."))

    def adapters(self):
        return {name: l.adapter for name, l in self.layers.items() if l.adapter is not None}

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: p.data for name, p in self.named_parameters()}

    def clone(self) -> "SegModel":
        """Independent copy (parameters, trainability, and adapters)."""
        from .lora import LoRAAdapter

        other = SegModel.__new__(SegModel)
        other.spec = self.spec

        def cp(t):
            c = Tensor(t.data.copy(), requires_grad=t.requires_grad, name=t.name)
            return c

        other.pos_embed = cp(self.pos_embed)
        other.layers = {}
        for name, layer in self.layers.items():
            new = Linear(name, cp(layer.weight), cp(layer.bias))
            if layer.adapter is not None:
                a = layer.adapter
                new.adapter = LoRAAdapter(a.target_name, a.rank, cp(a.A), cp(a.B), a.scaling)
            other.layers[name] = new
        other.norms = {k: (cp(g), cp(b)) for k, (g, b) in self.norms.items()}
        return other

    # forward

    def features(self, images: Tensor) -> Tensor:
        spec = self.spec
        if images.ndim != 4 or images.shape[1:] != (spec.in_channels, spec.image_size, spec.image_size):
            raise ShapeError(
                f"expected images [B, {spec.in_channels}, {spec.image_size}, {spec.image_size}], got {images.shape}"
            )
        b = images.shape[0]
        g, p, d = spec.grid, spec.patch_size, spec.embed_dim
        nh = spec.num_heads
        dh = d // nh
        n = spec.num_patches
        x = images.reshape(b, spec.in_channels, g, p, g, p).transpose(0, 2, 4, 1, 3, 5)
        x = x.reshape(b, n, spec.patch_dim)
        x = self.layers["patch_embed"](x) + self.pos_embed
        scale = 1.0 / math.sqrt(dh)
        for i in range(spec.num_layers):
            gamma, beta = self.norms[f"block{i}.ln1"]
            h = F.layer_norm(x, gamma, beta)
            q = self.layers[f"block{i}.attn.q"](h).reshape(b, n, nh, dh).transpose(0, 2, 1, 3)
            k = self.layers[f"block{i}.attn.k"](h).reshape(b, n, nh, dh).transpose(0, 2, 3, 1)
            v = self.layers[f"block{i}.attn.v"](h).reshape(b, n, nh, dh).transpose(0, 2, 1, 3)
            att = F.softmax((q @ k) * scale, axis=-1)
            o = (att @ v).transpose(0, 2, 1, 3).reshape(b, n, d)
            x = x + self.layers[f"block{i}.attn.proj"](o)
            gamma, beta = self.norms[f"block{i}.ln2"]
            h = F.layer_norm(x, gamma, beta)
            x = x + self.layers[f"block{i}.mlp.fc2"](F.gelu(self.layers[f"block{i}.mlp.fc1"](h)))
        gamma, beta = self.norms["norm"]
        return F.layer_norm(x, gamma, beta)

    def forward(self, images) -> Tensor:
        if not isinstance(images, Tensor):
            images = Tensor._wrap(np.asarray(images, dtype=np.float64), False)
        spec = self.spec
        b, g = images.shape[0], spec.grid
        feats = self.features(images)
        logits = self.layers[DECODER](feats)  # [B, N, C]
        logits = logits.reshape(b, g, g, spec.num_classes).transpose(0, 3, 1, 2)
        return F.upsample_nearest(logits, spec.patch_size)

    __call__ = forward


def forward_segmentation(model: SegModel, images) -> Tensor:
    return model.forward(images)


def extend_classifier(model: SegModel, new_class_count: int) -> SegModel:
    """Append ``new_class_count`` zero-initialised output channels to the classifier."""
    if new_class_count < 1:
        raise ContractError(f"new_class_count must be >= 1, got {new_class_count}")
    dec = model.layers[DECODER]
    w, b = dec.weight, dec.bias
    trainable = w.requires_grad
    new_w = np.concatenate([w.data, np.zeros((w.shape[0], new_class_count))], axis=1)
    new_b = np.concatenate([b.data, np.zeros(new_class_count)])
    model.layers[DECODER] = Linear(DECODER, Tensor(new_w, requires_grad=trainable),
                                   Tensor(new_b, requires_grad=b.requires_grad))
    model.spec = replace(model.spec, num_classes=model.spec.num_classes + new_class_count)
    return model


def count_params(model: SegModel, trainable_only: bool = False, *, frozen_only: bool = False) -> int:
    total = 0
    for _, p in model.named_parameters():
        if trainable_only and not p.requires_grad:
            continue
        if frozen_only and p.requires_grad:
            continue
        total += p.size
    return int(total)


def linear_macs(tokens: int, d_in: int, d_out: int) -> int:
    return tokens * d_in * d_out


def attention_macs(tokens: int, dim: int) -> int:
    """QK^T plus AV summed over heads: each is tokens^2 * head_dim per head."""
    return 2 * tokens * tokens * dim


def conv1x1_macs(pixels: int, c_in: int, c_out: int) -> int:
    return pixels * c_in * c_out


def mac_breakdown(model: SegModel) -> dict[str, int]:
    """Forward MACs for one image, per layer (elementwise ops are not counted)."""
    spec = model.spec
    n = spec.num_patches
    out = {}
    for name, layer in model.layers.items():
        if name == DECODER:
            out[name] = conv1x1_macs(n, layer.d_in, layer.d_out)
        else:
            out[name] = linear_macs(n, layer.d_in, layer.d_out)
        if layer.adapter is not None:
            r = layer.adapter.rank
            out[f"lora.{name}"] = linear_macs(n, layer.d_in, r) + linear_macs(n, r, layer.d_out)
    for i in range(spec.num_layers):
        out[f"block{i}.attn.scores"] = attention_macs(n, spec.embed_dim)
    return out


def count_macs(model: SegModel, batch: int = 1, phase: str = "forward") -> int:
    """Analytic MAC count; the training phase is forward plus two equal-cost backward passes."""
    if phase not in ("forward", "training"):
        raise ContractError(f"phase must be 'forward' or 'training', got {phase!r}")
    fwd = sum(mac_breakdown(model).values()) * batch
    return 3 * fwd if phase == "training" else fwd
