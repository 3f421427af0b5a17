"""Scale-only adaptive normalization driven by per-column interpolated styles.

A layer receives three style vectors, one per anchor of the bracketing
triple, and builds a grid of per-column styles by linear interpolation along
the horizontal axis. The hidden block is normalized per vertical patch (never
across the whole frame, which would couple patches and break equivariance)
and each column is rescaled by its interpolated style. There is no shift
term.
"""

import torch
import torch.nn.functional as F

from .errors import ConfigError, DomainError

EPS = 1e-8


def affine_style(w: torch.Tensor, weight: torch.Tensor, bias: torch.Tensor) -> torch.Tensor:
    """Per-layer style vector: an affine image of the latent code.

    Exactly linear in w, so interpolating codes and then applying the affine
    equals applying the affine and interpolating the styles.
    """
    if w.shape[-1] != weight.shape[-1]:
        raise ConfigError(f"code dim {w.shape[-1]} does not match affine input {weight.shape[-1]}")
    return F.linear(w, weight, bias)


def compute_style_grid(
    gamma_l: torch.Tensor,
    gamma_c: torch.Tensor,
    gamma_r: torch.Tensor,
    delta: float,
    d: float,
    s: int,
    inverted_branch: bool = False,
) -> torch.Tensor:
    """One interpolated style per column of an s-column frame.

    Column k sits at u = delta + k/s measured from the left anchor at -d.
    For u <= d the style interpolates the (left, center) pair,
        gamma_k = ((d - u) / d) * gamma_l + (u / d) * gamma_c,
    and for u > d the (center, right) pair,
        gamma_k = ((2d - u) / d) * gamma_c + ((u - d) / d) * gamma_r.
    The result is continuous in u with a single kink at u = d, and every
    column is a convex combination of exactly two styles.

    ``inverted_branch=True`` swaps which half uses which pair (a diagnostic
    mode; the weights then leave [0, 1] and the grid is discontinuous at d).

    Styles may carry leading batch dimensions: (..., c) -> (..., s, c).
    """
    if s < 1:
        raise ConfigError(f"s must be >= 1, got {s}")
    if d <= 0:
        raise ConfigError(f"d must be positive, got {d}")
    if delta < -1e-9:
        raise DomainError(f"delta must be nonnegative, got {delta}")
    dtype = gamma_c.dtype
    u = delta + torch.arange(s, dtype=dtype) / s
    if bool((u > 2.0 * d + 1e-9).any()):
        raise DomainError(f"column position beyond right anchor: max u={float(u.max())} > 2d={2 * d}")

    t = u / d  # u in units of d
    left_pair = t <= 1.0
    if inverted_branch:
        left_pair = ~left_pair
    w_shape = (s, 1)
    t = t.reshape(w_shape)
    left_pair = left_pair.reshape(w_shape)
    gl = gamma_l.unsqueeze(-2)
    gc = gamma_c.unsqueeze(-2)
    gr = gamma_r.unsqueeze(-2)
    left_value = (1.0 - t) * gl + t * gc
    right_value = (2.0 - t) * gc + (t - 1.0) * gr
    return torch.where(left_pair, left_value, right_value)


def adain_reference(
    h: torch.Tensor,
    gamma: torch.Tensor,
    beta: torch.Tensor | None = None,
    mode: str = "full",
    eps: float = EPS,
) -> torch.Tensor:
    """Whole-image adaptive instance normalization; the unit-test oracle.

    full:       gamma * (h - mu(h)) / sigma(h) + beta
    scale_only: gamma * h / sigma(h)

    mu and sigma are per-channel over all spatial positions; sigma is the
    population standard deviation with ``eps`` added under the square root.
    Accepts (c, H, W) or (B, c, H, W); gamma/beta are (c,) or (B, c).
    """
    if mode not in ("full", "scale_only"):
        raise ConfigError(f"unknown mode {mode!r}")
    g = gamma.reshape(*gamma.shape, 1, 1)
    var, mean = torch.var_mean(h, dim=(-2, -1), keepdim=True, correction=0)
    sigma = torch.sqrt(var + eps)
    if mode == "scale_only":
        return g * h / sigma
    if beta is None:
        beta = torch.zeros_like(gamma)
    b = beta.reshape(*beta.shape, 1, 1)
    return g * (h - mean) / sigma + b


def patch_std(h: torch.Tensor, grid: int, eps: float = EPS) -> torch.Tensor:
    """Per-channel population std over each of ``grid`` vertical strips.

    Returns (..., c, grid). ``eps`` keeps constant strips finite downstream:
    a constant input yields sqrt(eps) instead of zero.
    """
    width = h.shape[-1]
    if width % grid != 0:
        raise ConfigError(f"grid {grid} does not divide width {width}")
    pw = width // grid
    strips = h.reshape(*h.shape[:-1], grid, pw)
    var = strips.var(dim=(-3, -1), correction=0)
    return torch.sqrt(var + eps)


def sa_adain(
    h: torch.Tensor,
    gamma_l: torch.Tensor,
    gamma_c: torch.Tensor,
    gamma_r: torch.Tensor,
    delta: float,
    d: float,
    grid: int,
    eps: float = EPS,
    inverted_branch: bool = False,
) -> torch.Tensor:
    """Patch-normalize, then rescale each column by its interpolated style.

    Each of the ``grid`` vertical patches is divided by its own per-channel
    std, then column k is multiplied by gamma_k from the style grid at the
    frame's resolution, broadcast down the vertical axis. With equal anchor
    styles and grid=1 this reduces to scale-only whole-image normalization.

    A patch's output depends only on that patch's input and its own columns'
    styles; other patches cannot influence it.
    """
    s = h.shape[-1]
    sigma = patch_std(h, grid, eps)  # (..., c, grid)
    sigma_cols = sigma.repeat_interleave(s // grid, dim=-1).unsqueeze(-2)  # (..., c, 1, s)
    styles = compute_style_grid(
        gamma_l, gamma_c, gamma_r, delta, d, s, inverted_branch=inverted_branch
    )  # (..., s, c)
    styles_cols = styles.transpose(-1, -2).unsqueeze(-2)  # (..., c, 1, s)
    return styles_cols * h / sigma_cols
