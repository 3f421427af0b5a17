"""Latent codes, anchors on the coordinate axis, and the interpolation between them.

Anchors are style-space codes pinned to positions on the horizontal axis. A
frame generated between two anchors uses, at every horizontal position, the
convex combination of the bracketing codes, so moving through image space
moves through latent space at the same rate.
"""

import dataclasses
import json
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .errors import ConfigError, DomainError
from .layers import EqualizedLinear


class MappingNetwork(nn.Module):
    """Fully-connected map from the sampling space z to the style space w.

    Hidden layers use a leaky rectifier; the final layer is purely linear, so
    a depth-1 network whose effective weight is the identity is the identity
    map. Layers are equalized with a 0.01 learning-rate multiplier, so the
    mapping drifts more slowly than the synthesis under the shared optimizer
    settings.
    """

    def __init__(
        self,
        d_z: int = 64,
        d_w: int = 64,
        depth: int = 4,
        hidden: int = 64,
        lr_mult: float = 0.01,
    ):
        super().__init__()
        if depth < 1:
            raise ConfigError("mapping depth must be >= 1")
        self.d_z = d_z
        self.d_w = d_w
        dims = [d_z] + [hidden] * (depth - 1) + [d_w]
        layers = []
        for i in range(depth):
            layers.append(EqualizedLinear(dims[i], dims[i + 1], lr_mult=lr_mult))
            if i + 1 < depth:
                layers.append(nn.LeakyReLU(0.2))
        self.net = nn.Sequential(*layers)

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        if z.shape[-1] != self.d_z:
            raise ConfigError(f"expected z of dimension {self.d_z}, got {z.shape[-1]}")
        return self.net(z)

    @property
    def param_dtype(self) -> torch.dtype:
        return next(self.parameters()).dtype


def interpolate_latent(w_a, w_b, a: float, b: float, x: float):
    """Code at position x between codes w_a (at a) and w_b (at b).

    The weight on w_a is (b - x) / (b - a), so the result is w_a at x == a,
    w_b at x == b, and the elementwise mean at the midpoint. Shifting a, b
    and x by a common constant leaves the output unchanged.
    """
    if a == b:
        raise DomainError(f"degenerate interval: a == b == {a}")
    if a > b:
        raise DomainError(f"interval endpoints out of order: a={a} > b={b}")
    if not (a <= x <= b):
        raise DomainError(f"x={x} outside interpolation interval [{a}, {b}]")
    alpha = (b - x) / (b - a)
    return alpha * w_a + (1.0 - alpha) * w_b


@dataclasses.dataclass
class AnchorTriple:
    """Three style codes at positions -d, 0 and +d on the coordinate axis.

    Each code is either a plain (d_w,) vector or a (num_layers, d_w) per-layer
    assignment produced by :func:`style_mix`.
    """

    w_l: torch.Tensor
    w_c: torch.Tensor
    w_r: torch.Tensor
    d: float

    def __post_init__(self):
        dims = {int(t.shape[-1]) for t in (self.w_l, self.w_c, self.w_r)}
        if len(dims) != 1:
            raise ConfigError(f"anchor codes must share one dimension, got {sorted(dims)}")
        for t in (self.w_l, self.w_c, self.w_r):
            if t.ndim not in (1, 2):
                raise ConfigError("anchor codes must be (d_w,) or (layers, d_w)")
            if not torch.isfinite(t).all():
                raise ConfigError("anchor codes must be finite")
        if not self.d > 0:
            raise ConfigError(f"anchor spacing d must be positive, got {self.d}")

    @property
    def d_w(self) -> int:
        return int(self.w_c.shape[-1])

    @property
    def is_mixed(self) -> bool:
        return any(t.ndim == 2 for t in (self.w_l, self.w_c, self.w_r))

    def codes_for_layer(self, layer: int):
        """The (w_l, w_c, w_r) codes consumed by one synthesis layer."""
        out = []
        for t in (self.w_l, self.w_c, self.w_r):
            out.append(t if t.ndim == 1 else t[layer])
        return tuple(out)

    def anchors(self):
        return (self.w_l, self.w_c, self.w_r)


def sample_anchor_triple(mapping: MappingNetwork, d: float, generator: torch.Generator) -> AnchorTriple:
    """Three independent draws from z-space mapped into style space."""
    if not d > 0:
        raise ConfigError(f"anchor spacing d must be positive, got {d}")
    z = torch.randn(3, mapping.d_z, generator=generator, dtype=mapping.param_dtype)
    with torch.no_grad():
        w = mapping(z)
    return AnchorTriple(w[0], w[1], w[2], d)


def style_mix(
    triple: AnchorTriple,
    mix_probability: float,
    generator: torch.Generator,
    mapping: MappingNetwork,
    num_layers: int,
) -> AnchorTriple:
    """Independently, per anchor, replace the styles of a random layer suffix.

    With probability ``mix_probability`` an anchor becomes a (num_layers, d_w)
    per-layer assignment whose layers [split, num_layers) carry a freshly
    sampled code, split drawn uniformly from 1..num_layers-1. Anchors that are
    not mixed keep their plain (d_w,) code.
    """
    if not 0.0 <= mix_probability <= 1.0:
        raise ConfigError(f"mix_probability must be in [0, 1], got {mix_probability}")
    if mix_probability == 0.0:
        return triple
    if num_layers < 2:
        raise ConfigError("style mixing needs at least 2 layers")
    mixed = []
    for w in triple.anchors():
        if w.ndim != 1:
            raise ConfigError("style_mix expects plain (d_w,) anchor codes")
        if torch.rand((), generator=generator).item() < mix_probability:
            split = int(torch.randint(1, num_layers, (), generator=generator))
            z = torch.randn(mapping.d_z, generator=generator, dtype=w.dtype)
            with torch.no_grad():
                fresh = mapping(z)
            layered = w.unsqueeze(0).repeat(num_layers, 1)
            layered[split:] = fresh
            mixed.append(layered)
        else:
            mixed.append(w)
    return AnchorTriple(mixed[0], mixed[1], mixed[2], triple.d)


@dataclasses.dataclass
class AnchorSequence:
    """Ordered anchors at positions origin + i * d, i = 0, 1, 2, ..."""

    anchors: list
    d: float
    origin: float = 0.0

    def __post_init__(self):
        if not self.d > 0:
            raise ConfigError(f"anchor spacing d must be positive, got {self.d}")
        dims = {int(t.shape[-1]) for t in self.anchors} if self.anchors else set()
        if len(dims) > 1:
            raise ConfigError("anchors must share one dimension")

    def __len__(self) -> int:
        return len(self.anchors)

    def position(self, i: int) -> float:
        return self.origin + i * self.d

    def triple_at(self, i: int) -> AnchorTriple:
        """The triple whose left anchor is anchor i."""
        if i < 0 or i + 2 >= len(self.anchors):
            raise DomainError(f"triple at {i} needs anchors {i}..{i + 2}, have {len(self.anchors)}")
        return AnchorTriple(self.anchors[i], self.anchors[i + 1], self.anchors[i + 2], self.d)

    def extend_with(self, mapping: MappingNetwork, generator: torch.Generator, count: int = 1):
        """Append ``count`` fresh anchors drawn through the mapping network."""
        for _ in range(count):
            z = torch.randn(mapping.d_z, generator=generator, dtype=mapping.param_dtype)
            with torch.no_grad():
                self.anchors.append(mapping(z))


ANCHOR_FORMAT_VERSION = 1


def save_anchors(path, seq: AnchorSequence) -> None:
    """Write a manifest (JSON) plus one named array per anchor (NPZ).

    ``<path>.json`` records d_w, d, origin and count; ``<path>.npz`` holds
    arrays named anchor_00000, anchor_00001, ... in order.
    """
    path = Path(path)
    manifest = {
        "format_version": ANCHOR_FORMAT_VERSION,
        "d_w": int(seq.anchors[0].shape[-1]) if seq.anchors else 0,
        "d": seq.d,
        "origin": seq.origin,
        "count": len(seq.anchors),
    }
    path.with_suffix(".json").write_text(json.dumps(manifest, indent=2))
    arrays = {
        f"anchor_{i:05d}": a.detach().cpu().numpy() for i, a in enumerate(seq.anchors)
    }
    np.savez(path.with_suffix(".npz"), **arrays)


def load_anchors(path, dtype: torch.dtype = torch.float32) -> AnchorSequence:
    path = Path(path)
    manifest = json.loads(path.with_suffix(".json").read_text())
    if manifest.get("format_version") != ANCHOR_FORMAT_VERSION:
        raise ConfigError(f"unsupported anchor format: {manifest.get('format_version')}")
    with np.load(path.with_suffix(".npz")) as data:
        anchors = [
            torch.from_numpy(data[f"anchor_{i:05d}"]).to(dtype)
            for i in range(manifest["count"])
        ]
    return AnchorSequence(anchors=anchors, d=manifest["d"], origin=manifest["origin"])
