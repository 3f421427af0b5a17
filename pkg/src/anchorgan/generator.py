"""Patchwise coordinate-conditioned synthesis network.

A frame of width W = 1 coordinate unit is produced as ``grid`` vertical
patches, each a pure function of (anchor codes, anchor spacing d, the patch's
offset from the left anchor, its noise key). Nothing else enters a patch:
convolutions use replicate padding confined to the patch, normalization is
per patch, and the starting constant is tiled periodically so any offset
indexes into it. Shifting the frame offset by one patch width therefore
shifts the output by exactly one patch.

All offsets live on the lattice of patch widths (multiples of W / grid) and
positions are carried as integer patch units internally, so equal positions
are equal bit-for-bit, never merely close.
"""

import dataclasses
import functools
import math

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .coords import PeriodBank, embed_position
from .errors import ConfigError, DomainError
from .latents import AnchorTriple, MappingNetwork
from .layers import EqualizedConv2d, EqualizedLinear

_EPS = 1e-8
_GOLDEN64 = 0x9E3779B97F4A7C15
_MASK64 = (1 << 64) - 1


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclasses.dataclass(frozen=True)
class GeneratorConfig:
    output_resolution: int = 64
    grid: int = 16
    base_resolution: int = 4
    channels: tuple = (128, 128, 64, 64, 32)
    d_z: int = 64
    d_w: int = 64
    mapping_depth: int = 4
    mapping_hidden: int = 64
    x_periods: tuple = (1.0, 0.5, 0.25, 0.125)
    y_periods: tuple = (2.0,)
    noise_mode: str = "hash"  # "hash" | "off"
    use_coords: bool = True

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(self.channels))
        object.__setattr__(self, "x_periods", tuple(self.x_periods))
        object.__setattr__(self, "y_periods", tuple(self.y_periods))
        for name in ("output_resolution", "base_resolution", "grid"):
            if not _is_pow2(getattr(self, name)):
                raise ConfigError(f"{name} must be a power of two, got {getattr(self, name)}")
        if self.output_resolution < self.base_resolution:
            raise ConfigError("output_resolution must be >= base_resolution")
        levels = int(math.log2(self.output_resolution // self.base_resolution)) + 1
        if len(self.channels) != levels:
            raise ConfigError(
                f"channels has {len(self.channels)} entries but "
                f"{self.base_resolution}->{self.output_resolution} needs {levels}"
            )
        if self.grid > self.output_resolution:
            raise ConfigError("grid cannot exceed output_resolution")
        if self.grid >= self.base_resolution and self.grid % self.base_resolution != 0:
            raise ConfigError("grid must be a multiple of base_resolution")
        if self.noise_mode not in ("hash", "off"):
            raise ConfigError(f"noise_mode must be 'hash' or 'off', got {self.noise_mode!r}")

    @property
    def num_levels(self) -> int:
        return len(self.channels)

    @property
    def num_style_layers(self) -> int:
        return len(self.channels)

    def resolution(self, level: int) -> int:
        return self.base_resolution << level

    def frame_cols(self, level: int) -> int:
        """Width of the whole frame, in columns, at one level."""
        return max(self.grid, self.resolution(level))

    def patch_cols(self, level: int) -> int:
        return self.frame_cols(level) // self.grid

    @property
    def patch_width_px(self) -> int:
        return self.output_resolution // self.grid

    def x_bank(self) -> PeriodBank:
        return PeriodBank(self.x_periods)

    def y_bank(self) -> PeriodBank:
        return PeriodBank(self.y_periods)


def units_of(value: float, grid: int, what: str = "offset") -> int:
    """Convert a coordinate value to integer patch units (multiples of 1/grid)."""
    m = round(value * grid)
    if abs(m / grid - value) > 1e-9:
        raise DomainError(f"{what}={value} is not a multiple of 1/{grid}")
    return m


@functools.lru_cache(maxsize=8192)
def _noise_block(seed: int, layer: int, col: int, height: int, width: int) -> torch.Tensor:
    k0 = (seed ^ ((layer + 1) * _GOLDEN64)) & _MASK64
    k1 = col & _MASK64
    # dtype must be explicit: plain int lists are converted through float64,
    # which silently merges keys that differ only in low bits
    key = np.array([k0, k1], dtype=np.uint64)
    gen = np.random.Generator(np.random.Philox(key=key))
    block = torch.from_numpy(gen.standard_normal((height, width)))
    block.requires_grad_(False)
    return block


def patch_noise(
    col: int,
    layer: int,
    height: int,
    width: int,
    seed: int = 0,
    mode: str = "hash",
    dtype: torch.dtype = torch.float32,
) -> torch.Tensor:
    """Standard-normal noise strip, a pure function of (col, layer, seed).

    Uses a counter-based bit generator keyed on the identifiers, so the same
    patch column regenerated in any frame context receives identical noise.
    ``mode="off"`` returns zeros.
    """
    if mode == "off":
        return torch.zeros(height, width, dtype=dtype)
    if mode != "hash":
        raise ConfigError(f"unknown noise mode {mode!r}")
    return _noise_block(int(seed), int(layer), int(col), height, width).to(dtype)


@dataclasses.dataclass
class PatchSpec:
    """Everything one patch may depend on."""

    anchors: AnchorTriple
    delta: float
    k: int
    noise_col: int | None = None  # defaults to delta in patch units + k


class Synthesis(nn.Module):
    """The convolutional decoder; consumes per-layer anchor codes directly."""

    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        self.cfg = cfg
        c = cfg.channels
        self.const = nn.Parameter(torch.randn(c[0], cfg.base_resolution, cfg.base_resolution))
        emb_dim = (cfg.x_bank().dim + cfg.y_bank().dim) if cfg.use_coords else 0
        in_channels = [c[0] + emb_dim] + list(c[:-1])
        self.convs = nn.ModuleList(
            EqualizedConv2d(in_channels[i], c[i], kernel_size=3) for i in range(len(c))
        )
        self.affines = nn.ModuleList(
            EqualizedLinear(cfg.d_w, ci, bias_init=1.0) for ci in c
        )
        self.noise_strength = nn.ParameterList(torch.zeros(()) for _ in c)
        self.to_rgb = EqualizedConv2d(c[-1], 3, kernel_size=1)

    def coord_const(self, q_units: torch.Tensor) -> torch.Tensor:
        """Starting block for patches at the given offsets (integer patch units).

        The learned constant is indexed periodically by column, so offsets one
        frame width apart see identical constant channels. With coordinates
        enabled, sine/cosine embeddings of each column's position (and of the
        row positions) are concatenated channel-wise; without them only the
        tiled constant is returned.
        """
        cfg = self.cfg
        base = cfg.base_resolution
        pw0 = cfg.patch_cols(0)
        s0 = cfg.frame_cols(0)
        dtype = self.const.dtype
        q = q_units.reshape(-1).long()
        cols = q.unsqueeze(1) * pw0 + torch.arange(pw0)  # (N, pw0) frame columns
        const_part = self.const[:, :, cols % base].permute(2, 0, 1, 3)  # (N, c0, base, pw0)
        if not cfg.use_coords:
            return const_part
        n = q.shape[0]
        u = cols.to(dtype) / s0  # positions in frame widths, relative to the left anchor
        xemb = embed_position(u, cfg.x_bank())  # (N, pw0, dx)
        xemb = xemb.permute(0, 2, 1).unsqueeze(2).expand(n, -1, base, pw0)
        y = torch.arange(base, dtype=dtype) / base
        yemb = embed_position(y, cfg.y_bank())  # (base, dy)
        yemb = yemb.permute(1, 0).reshape(1, -1, base, 1).expand(n, -1, base, pw0)
        return torch.cat([const_part, xemb, yemb], dim=1)

    def _style_scale(self, x, gamma_l, gamma_c, gamma_r, q_units, d_units, level):
        """Patch-local normalization and per-column style scaling.

        Equivalent to the module-level sa_adain with each patch as its own
        normalization region; column positions come from exact integer units.
        """
        cfg = self.cfg
        pw = cfg.patch_cols(level)
        s_cols = cfg.frame_cols(level)
        var = x.var(dim=(2, 3), keepdim=True, correction=0)
        xn = x / torch.sqrt(var + _EPS)
        cols = q_units.unsqueeze(1) * pw + torch.arange(pw)  # (N, pw)
        cg = cols * cfg.grid
        ds = d_units * s_cols
        t = (cg.to(x.dtype) / ds).unsqueeze(-1)  # u / d, exact rational -> float once
        left = (cg <= ds).unsqueeze(-1)
        gl = gamma_l.unsqueeze(1)
        gc = gamma_c.unsqueeze(1)
        gr = gamma_r.unsqueeze(1)
        # anchored form gl + t*(gc - gl): equal anchor styles collapse to the
        # shared style bit-exactly, for every t
        gamma = torch.where(left, gl + t * (gc - gl), gc + (t - 1.0) * (gr - gc))
        return gamma.transpose(1, 2).unsqueeze(2) * xn  # (N, c, 1, pw) * (N, c, h, pw)

    def forward_patches(self, codes, d_units, q_units, noise_cols, run_seed=0):
        """Forward a batch of patches.

        codes:      (levels, 3, N, d_w) anchor codes per style layer
        d_units:    anchor spacing in patch units (int)
        q_units:    (N,) patch offsets from the left anchor, in patch units
        noise_cols: (N,) noise keys
        returns:    (N, 3, H, patch_width_px)
        """
        cfg = self.cfg
        if 2 * d_units < cfg.grid:
            raise DomainError(f"anchor span 2d={2 * d_units}/{cfg.grid} is narrower than one frame")
        # a patch spans [q, q+1] patch units and must stay inside [0, 2d]
        if bool((q_units < 0).any()) or bool((q_units > 2 * d_units - 1).any()):
            raise DomainError("patch extends outside the anchor span [0, 2d]")
        x = self.coord_const(q_units)
        n = q_units.shape[0]
        for level in range(cfg.num_levels):
            if level > 0:
                scale_w = cfg.patch_cols(level) // cfg.patch_cols(level - 1)
                x = F.interpolate(x, scale_factor=(2, scale_w), mode="nearest")
            x = self.convs[level](F.pad(x, (1, 1, 1, 1), mode="replicate"))
            if cfg.noise_mode == "hash":
                h, w = x.shape[2], x.shape[3]
                noise = torch.stack(
                    [
                        patch_noise(int(c), level, h, w, seed=run_seed, dtype=x.dtype)
                        for c in noise_cols.tolist()
                    ]
                ).unsqueeze(1)
                x = x + self.noise_strength[level] * noise
            gl = self.affines[level](codes[level, 0])
            gc = self.affines[level](codes[level, 1])
            gr = self.affines[level](codes[level, 2])
            x = self._style_scale(x, gl, gc, gr, q_units, d_units, level)
            x = F.leaky_relu(x, 0.2)
        return torch.tanh(self.to_rgb(x))


def _stack_codes(triples, num_layers, center_override=None):
    """Per-layer anchor codes for a batch of triples -> (levels, 3, B, d_w)."""
    per_layer = []
    for layer in range(num_layers):
        rows = [t.codes_for_layer(layer) for t in triples]
        wl = torch.stack([r[0] for r in rows])
        wc = center_override if center_override is not None else torch.stack([r[1] for r in rows])
        wr = torch.stack([r[2] for r in rows])
        per_layer.append(torch.stack([wl, wc, wr]))
    return torch.stack(per_layer)


class Generator(nn.Module):
    """Mapping network plus patchwise synthesis."""

    def __init__(self, cfg: GeneratorConfig, seed: int | None = None):
        super().__init__()
        self.cfg = cfg
        if seed is None:
            self._build()
        else:
            with torch.random.fork_rng():
                torch.manual_seed(seed)
                self._build()

    def _build(self):
        cfg = self.cfg
        self.mapping = MappingNetwork(cfg.d_z, cfg.d_w, cfg.mapping_depth, cfg.mapping_hidden)
        self.synthesis = Synthesis(cfg)

    @property
    def frame_height(self) -> int:
        return self.cfg.output_resolution

    def _placement_units(self, triple: AnchorTriple, delta: float):
        cfg = self.cfg
        d_units = units_of(triple.d, cfg.grid, "anchor spacing d")
        m = units_of(delta, cfg.grid, "delta")
        if 2 * d_units < cfg.grid:
            raise DomainError(f"frame does not fit between anchors: 2d={2 * triple.d} < W=1")
        if not 0 <= m <= 2 * d_units - cfg.grid:
            raise DomainError(
                f"delta={delta} outside [0, {(2 * d_units - cfg.grid) / cfg.grid}]"
            )
        return d_units, m

    def generate_patch(self, spec: PatchSpec, run_seed: int = 0) -> torch.Tensor:
        """One vertical strip, (3, H, H/grid); depends on nothing beyond the spec."""
        cfg = self.cfg
        if not 0 <= spec.k < cfg.grid:
            raise DomainError(f"patch index {spec.k} outside [0, {cfg.grid})")
        d_units, m = self._placement_units(spec.anchors, spec.delta)
        q = torch.tensor([m + spec.k], dtype=torch.long)
        noise_col = spec.noise_col if spec.noise_col is not None else m + spec.k
        cols = torch.tensor([noise_col], dtype=torch.long)
        codes = _stack_codes([spec.anchors], cfg.num_style_layers)
        with torch.no_grad():
            strip = self.synthesis.forward_patches(codes, d_units, q, cols, run_seed)
        return strip[0]

    def generate_frame(
        self,
        triple: AnchorTriple,
        delta: float,
        noise_key_base: int | None = None,
        run_seed: int = 0,
    ) -> torch.Tensor:
        """One frame, (3, H, H): the concatenation of grid independent patches.

        Patch k is computed in isolation (its own forward pass), so the frame
        equals its independently generated patches by construction. Noise keys
        default to the anchor-relative patch offsets; panorama generation
        passes explicit panorama-level keys instead.
        """
        cfg = self.cfg
        _, m = self._placement_units(triple, delta)
        base = noise_key_base if noise_key_base is not None else m
        strips = [
            self.generate_patch(
                PatchSpec(triple, delta, k, noise_col=base + k), run_seed=run_seed
            )
            for k in range(cfg.grid)
        ]
        return torch.cat(strips, dim=-1)

    def synthesize_batch(
        self,
        triples,
        delta_units,
        noise_key_bases=None,
        run_seed: int = 0,
        center_override=None,
    ) -> torch.Tensor:
        """Batched frame synthesis for training; (B, 3, H, W).

        delta_units are integer patch offsets. ``center_override`` replaces
        all layers' center-anchor codes with one differentiable (B, d_w)
        tensor, used by the path-length regularizer.
        """
        cfg = self.cfg
        b = len(triples)
        grid = cfg.grid
        d_units = units_of(triples[0].d, grid, "anchor spacing d")
        for t in triples:
            if t.d != triples[0].d:
                raise ConfigError("all triples in a batch must share d")
        m = torch.as_tensor(delta_units, dtype=torch.long)
        if m.shape != (b,):
            raise ConfigError("delta_units must have one entry per triple")
        k = torch.arange(grid)
        q = (m.unsqueeze(1) + k).reshape(-1)
        if noise_key_bases is None:
            bases = m
        else:
            bases = torch.as_tensor(noise_key_bases, dtype=torch.long)
        cols = (bases.unsqueeze(1) + k).reshape(-1)
        codes = _stack_codes(triples, cfg.num_style_layers, center_override=center_override)
        codes = codes.repeat_interleave(grid, dim=2)
        strips = self.synthesis.forward_patches(codes, d_units, q, cols, run_seed)
        h, pw = strips.shape[-2], strips.shape[-1]
        return strips.reshape(b, grid, 3, h, pw).permute(0, 2, 3, 1, 4).reshape(b, 3, h, grid * pw)
