"""Periodic positional embeddings and frame placement between anchors.

Positions are always anchor-relative: a frame knows its offset delta from the
left anchor of its bracketing triple, never an absolute coordinate. Offsets
are sampled on the discrete lattice of patch widths so that every column
position is an exact rational multiple of the frame width.
"""

import dataclasses
import math

import torch

from .errors import ConfigError, DomainError

TWO_PI = 2.0 * math.pi


@dataclasses.dataclass(frozen=True)
class PeriodBank:
    """A list of periods; each contributes a sine and a cosine channel."""

    periods: tuple

    def __post_init__(self):
        if len(self.periods) == 0:
            raise ConfigError("period bank must contain at least one period")
        if any(p <= 0 for p in self.periods):
            raise ConfigError(f"all periods must be positive, got {self.periods}")

    @property
    def dim(self) -> int:
        return 2 * len(self.periods)


def default_period_bank(d: float) -> PeriodBank:
    """Periods {d, d/2, d/4, d/8}: every channel repeats exactly every d units."""
    return PeriodBank((d, d / 2, d / 4, d / 8))


def embed_position(x, bank: PeriodBank) -> torch.Tensor:
    """Embed positions as interleaved (sin, cos) pairs, one pair per period.

    output[..., 2i]   = sin(2*pi*x / p_i)
    output[..., 2i+1] = cos(2*pi*x / p_i)

    Bounded in [-1, 1] per channel for any finite x.
    """
    x = torch.as_tensor(x)
    if not x.is_floating_point():
        x = x.double()
    if not torch.isfinite(x).all():
        raise DomainError("positions must be finite")
    periods = torch.tensor(tuple(bank.periods), dtype=x.dtype)
    phase = TWO_PI * x.unsqueeze(-1) / periods
    return torch.stack((torch.sin(phase), torch.cos(phase)), dim=-1).flatten(-2)


@dataclasses.dataclass(frozen=True)
class FramePlacement:
    """Where a frame of width `width` sits between the anchors of a triple.

    ``delta`` is the offset of the frame's left border from the left anchor
    (which sits at -d), constrained so the frame lies entirely inside the
    triple's span: 0 <= delta <= 2d - width.
    """

    delta: float
    d: float
    width: float = 1.0
    grid: int = 16

    def __post_init__(self):
        if self.grid < 1:
            raise ConfigError(f"grid must be >= 1, got {self.grid}")
        if self.width <= 0 or self.d <= 0:
            raise ConfigError("width and d must be positive")
        hi = 2.0 * self.d - self.width
        if not (-1e-9 <= self.delta <= hi + 1e-9):
            raise DomainError(f"delta={self.delta} outside [0, {hi}]")


def patch_coordinate(placement: FramePlacement, k: int, column: int, s: int) -> float:
    """Left-edge position of one column, relative to the left anchor.

    At layer resolution s (columns per frame), patch k's column ``column``
    sits at delta + (k * (s / grid) + column) / s * width.
    """
    if s % placement.grid != 0:
        raise ConfigError(f"grid {placement.grid} does not divide layer resolution {s}")
    cols_per_patch = s // placement.grid
    if not 0 <= k < placement.grid:
        raise DomainError(f"patch index {k} outside [0, {placement.grid})")
    if not 0 <= column < cols_per_patch:
        raise DomainError(f"column {column} outside [0, {cols_per_patch})")
    return placement.delta + (k * cols_per_patch + column) / s * placement.width


def offset_candidates(d: float, width: float = 1.0, grid: int = 16):
    """The discrete offsets m * width / grid that keep the frame inside the span."""
    if 2.0 * d < width:
        raise DomainError(f"no valid offsets: frame width {width} exceeds anchor span {2 * d}")
    step = width / grid
    count = int(math.floor((2.0 * d - width) / step + 1e-9)) + 1
    return [m * step for m in range(count)]


def sample_offset(d: float, width: float, grid: int, generator: torch.Generator) -> float:
    """Uniform draw from the discrete offset lattice {m * width / grid}."""
    candidates = offset_candidates(d, width, grid)
    m = int(torch.randint(len(candidates), (), generator=generator))
    return candidates[m]
