"""Anchor-conditioned patchwise GAN for seamless infinite panorama synthesis."""

__version__ = "0.1.0"

from .coords import FramePlacement, PeriodBank, embed_position, sample_offset
from .errors import ConfigError, DomainError, NumericAbort
from .generator import Generator, GeneratorConfig, PatchSpec, patch_noise
from .latents import (
    AnchorSequence,
    AnchorTriple,
    MappingNetwork,
    interpolate_latent,
    sample_anchor_triple,
    style_mix,
)
from .sa_adain import adain_reference, affine_style, compute_style_grid, patch_std, sa_adain

__all__ = [
    "AnchorSequence",
    "AnchorTriple",
    "ConfigError",
    "DomainError",
    "FramePlacement",
    "Generator",
    "GeneratorConfig",
    "MappingNetwork",
    "NumericAbort",
    "PatchSpec",
    "PeriodBank",
    "adain_reference",
    "affine_style",
    "compute_style_grid",
    "embed_position",
    "interpolate_latent",
    "patch_noise",
    "patch_std",
    "sa_adain",
    "sample_anchor_triple",
    "sample_offset",
    "style_mix",
]
