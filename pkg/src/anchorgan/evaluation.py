"""Distribution metrics and structural diagnostics.

The Frechet distance here runs over a pluggable feature extractor. The desk
extractor is a small frozen convolutional embedder built from a fixed seed,
which keeps the metric's distribution-comparison semantics for relative
judgments without a heavyweight pretrained dependency; any module mapping
images to vectors can be substituted, as long as both sample sets use the
same one.
"""

import dataclasses
import warnings

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .errors import ConfigError, DomainError
from .generator import Generator
from .latents import sample_anchor_triple


class RandomConvExtractor(nn.Module):
    """Frozen random-weight convolutional embedder with a fixed seed.

    Deterministic by construction: the same seed always yields the same
    embedding map. Inputs are (B, 3, H, W) in [-1, 1].
    """

    def __init__(self, feature_dim: int = 64, seed: int = 0):
        super().__init__()
        self.feature_dim = feature_dim
        self.seed = seed
        self.identifier = f"randconv{feature_dim}-seed{seed}"
        with torch.random.fork_rng():
            torch.manual_seed(seed)
            self.layers = nn.ModuleList(
                [
                    nn.Conv2d(3, 16, 4, stride=2, padding=1),
                    nn.Conv2d(16, 32, 4, stride=2, padding=1),
                    nn.Conv2d(32, 64, 4, stride=2, padding=1),
                    nn.Conv2d(64, feature_dim, 4, stride=2, padding=1),
                ]
            )
            for layer in self.layers:
                # variance-preserving random features; default init attenuates
                # the signal into the bias floor after a few layers
                nn.init.kaiming_normal_(layer.weight, a=0.2, nonlinearity="leaky_relu")
                nn.init.zeros_(layer.bias)
        self.requires_grad_(False)
        self.eval()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for layer in self.layers:
            x = F.leaky_relu(layer(x), 0.2)
        return x.mean(dim=(2, 3))


def compute_features(images, extractor, batch_size: int = 64) -> np.ndarray:
    """Embed an iterable of (3, H, W) tensors (or one (N, 3, H, W) tensor)."""
    if isinstance(images, torch.Tensor) and images.ndim == 4:
        chunks = images.split(batch_size)
    else:
        images = list(images)
        chunks = [
            torch.stack(images[i : i + batch_size]) for i in range(0, len(images), batch_size)
        ]
    feats = []
    with torch.no_grad():
        for chunk in chunks:
            feats.append(extractor(chunk.float()).cpu().numpy().astype(np.float64))
    return np.concatenate(feats, axis=0)


@dataclasses.dataclass
class FidResult:
    score: float
    raw_score: float
    n_real: int
    n_fake: int
    extractor_id: str

    def __post_init__(self):
        if self.score < 0:
            raise ConfigError("clamped score must be nonnegative")


def _sqrt_trace_of_product(sigma1: np.ndarray, sigma2: np.ndarray) -> float:
    """Tr((sigma1 sigma2)^(1/2)) via symmetric eigendecompositions.

    Both eigenvalue clamps only remove tiny negatives from roundoff; the
    route is deterministic across platforms (no iterative solver).
    """
    vals1, vecs1 = np.linalg.eigh((sigma1 + sigma1.T) / 2.0)
    root1 = (vecs1 * np.sqrt(np.clip(vals1, 0.0, None))) @ vecs1.T
    inner = root1 @ sigma2 @ root1
    vals = np.linalg.eigvalsh((inner + inner.T) / 2.0)
    return float(np.sqrt(np.clip(vals, 0.0, None)).sum())


def fid_from_moments(mu1, sigma1, mu2, sigma2) -> float:
    """||mu1 - mu2||^2 + Tr(sigma1 + sigma2 - 2 (sigma1 sigma2)^(1/2))."""
    mu1 = np.atleast_1d(np.asarray(mu1, dtype=np.float64))
    mu2 = np.atleast_1d(np.asarray(mu2, dtype=np.float64))
    sigma1 = np.atleast_2d(np.asarray(sigma1, dtype=np.float64))
    sigma2 = np.atleast_2d(np.asarray(sigma2, dtype=np.float64))
    if mu1.shape != mu2.shape or sigma1.shape != sigma2.shape:
        raise ConfigError("moment shapes do not match")
    diff = mu1 - mu2
    return float(
        diff @ diff
        + np.trace(sigma1)
        + np.trace(sigma2)
        - 2.0 * _sqrt_trace_of_product(sigma1, sigma2)
    )


def fid(real_features: np.ndarray, fake_features: np.ndarray, extractor_id: str = "") -> FidResult:
    """Frechet distance between two feature samples.

    The raw value can dip a hair below zero from the covariance root's
    eigenvalue clamp; the reported score clamps it at zero and both are kept.
    """
    real_features = np.asarray(real_features, dtype=np.float64)
    fake_features = np.asarray(fake_features, dtype=np.float64)
    if real_features.ndim != 2 or fake_features.ndim != 2:
        raise ConfigError("feature sets must be 2-D (samples, dim)")
    if real_features.shape[1] != fake_features.shape[1]:
        raise ConfigError(
            f"feature dimensions differ: {real_features.shape[1]} vs {fake_features.shape[1]}"
        )
    if real_features.shape[0] < 2 or fake_features.shape[0] < 2:
        raise DomainError("need at least 2 samples per set")
    dim = real_features.shape[1]
    if min(real_features.shape[0], fake_features.shape[0]) < dim:
        warnings.warn(
            f"fewer samples ({min(real_features.shape[0], fake_features.shape[0])}) than "
            f"feature dimensions ({dim}); covariance estimate is rank-deficient",
            stacklevel=2,
        )
    raw = fid_from_moments(
        real_features.mean(axis=0),
        np.cov(real_features, rowvar=False),
        fake_features.mean(axis=0),
        np.cov(fake_features, rowvar=False),
    )
    return FidResult(
        score=max(raw, 0.0),
        raw_score=raw,
        n_real=real_features.shape[0],
        n_fake=fake_features.shape[0],
        extractor_id=extractor_id,
    )


def slice_panorama(wide: torch.Tensor, frame_px: int):
    """Cut a wide image into frame-width slices with no overlaps or gaps.

    Concatenating the slices back reproduces the input exactly.
    """
    width = wide.shape[-1]
    if width % frame_px != 0:
        raise ConfigError(f"width {width} is not a multiple of the frame width {frame_px}")
    return [wide[..., i : i + frame_px] for i in range(0, width, frame_px)]


def infinity_fid(
    frames,
    extractor,
    real_features: np.ndarray,
    n_frames: int = 512,
    batch_size: int = 64,
) -> FidResult:
    """Frechet distance between real frames and slices of one continuous panorama.

    ``frames`` is an iterable of (3, H, W) tensors produced left to right by a
    single stream (adjacent slices, no overlaps or gaps); this penalizes both
    seams and a stream that repeats itself. Frames are embedded in bounded
    batches, never materializing the panorama. The desk default length is
    512 frames.
    """
    if n_frames < 2:
        raise DomainError("n_frames must be >= 2")
    feats = []
    batch = []
    count = 0
    for frame in frames:
        batch.append(frame)
        count += 1
        if len(batch) == batch_size:
            feats.append(compute_features(torch.stack(batch), extractor))
            batch = []
        if count == n_frames:
            break
    if batch:
        feats.append(compute_features(torch.stack(batch), extractor))
    if count < n_frames:
        raise DomainError(f"stream ended after {count} frames, expected {n_frames}")
    fake_features = np.concatenate(feats, axis=0)
    return fid(real_features, fake_features, extractor_id=getattr(extractor, "identifier", ""))


def column_autocorrelation(wide, lag_px: int) -> float:
    """Pearson correlation of the column-mean signal with itself at a lag.

    The signal is the per-column mean over rows and channels; high values at
    a lag signal repetition with that period. Returns 0 when either windowed
    signal is constant.
    """
    wide = torch.as_tensor(wide, dtype=torch.float64)
    signal = wide.mean(dim=tuple(range(wide.ndim - 1)))
    if lag_px < 1 or lag_px >= signal.shape[0]:
        raise DomainError(f"lag {lag_px} outside [1, {signal.shape[0]})")
    a = signal[:-lag_px]
    b = signal[lag_px:]
    a = a - a.mean()
    b = b - b.mean()
    denom = float(a.norm() * b.norm())
    if denom < 1e-12:
        return 0.0
    return float((a * b).sum()) / denom


def seam_score(wide, frame_px: int, zero_tol: float = 1e-12) -> float:
    """Boundary-column gradient magnitude relative to interior columns.

    Computes the mean absolute horizontal difference across every pair of
    columns that straddles a frame boundary, divided by the same statistic
    over all other adjacent column pairs. 1.0 means boundaries are
    statistically invisible; a horizontally constant image scores 1.0 by
    convention (0/0 guard).
    """
    wide = torch.as_tensor(wide, dtype=torch.float64)
    width = wide.shape[-1]
    if width % frame_px != 0:
        raise ConfigError(f"width {width} is not a multiple of the frame width {frame_px}")
    if width < 2 * frame_px:
        raise DomainError("need at least two frames to measure seams")
    diffs = (wide[..., 1:] - wide[..., :-1]).abs()
    boundary_idx = torch.arange(frame_px - 1, width - 1, frame_px)
    mask = torch.zeros(width - 1, dtype=torch.bool)
    mask[boundary_idx] = True
    boundary = float(diffs[..., mask].mean())
    interior = float(diffs[..., ~mask].mean())
    if interior < zero_tol:
        return 1.0 if boundary < zero_tol else float("inf")
    return boundary / interior


@dataclasses.dataclass
class EquivarianceReport:
    trials: int
    max_abs_diff: float
    bitwise_fraction: float
    sub_patch_max_abs_diff: float | None = None

    @property
    def bitwise(self) -> bool:
        return self.bitwise_fraction == 1.0


def equivariance_check(
    generator: Generator,
    trials: int = 50,
    seed: int = 0,
    d: float = 1.0,
    probe_sub_patch: bool = False,
) -> EquivarianceReport:
    """Verify the one-patch-shift overlap identity on random anchor triples.

    For random (triple, delta), shifting delta by one patch width with
    matching noise keys must shift the output by exactly one patch: the last
    grid-1 patches of the first frame equal the first grid-1 patches of the
    second. Holds for any parameters, trained or not. Optionally also probes
    a half-patch shift, where the identity is expected to fail (reported,
    never asserted).
    """
    cfg = generator.cfg
    rng = torch.Generator().manual_seed(seed)
    grid = cfg.grid
    d_units = round(d * grid)
    if 2 * d_units - grid < 1:
        raise ConfigError(f"d={d} leaves no room to shift the frame by one patch")
    pw = cfg.patch_width_px
    max_diff = 0.0
    bitwise = 0
    sub_patch_diff = None
    for trial in range(trials):
        triple = sample_anchor_triple(generator.mapping, d, rng)
        m = int(torch.randint(2 * d_units - grid, (), generator=rng))  # leaves room for m+1
        base = int(torch.randint(1000, (), generator=rng))
        frame_a = generator.generate_frame(triple, m / grid, noise_key_base=base, run_seed=seed)
        frame_b = generator.generate_frame(
            triple, (m + 1) / grid, noise_key_base=base + 1, run_seed=seed
        )
        overlap_a = frame_a[:, :, pw:]
        overlap_b = frame_b[:, :, : (grid - 1) * pw]
        diff = float((overlap_a - overlap_b).abs().max())
        max_diff = max(max_diff, diff)
        if torch.equal(overlap_a, overlap_b):
            bitwise += 1
    if probe_sub_patch and pw >= 2:
        # Shift by half a patch in pixel space; compare against the same columns.
        triple = sample_anchor_triple(generator.mapping, d, rng)
        frame_a = generator.generate_frame(triple, 0.0, noise_key_base=0, run_seed=seed)
        frame_b = generator.generate_frame(triple, 1.0 / grid, noise_key_base=1, run_seed=seed)
        half = pw // 2
        shifted = frame_a[:, :, half : half + (grid - 1) * pw]
        target = frame_b[:, :, : (grid - 1) * pw]
        sub_patch_diff = float((shifted - target).abs().max())
    return EquivarianceReport(
        trials=trials,
        max_abs_diff=max_diff,
        bitwise_fraction=bitwise / trials if trials else 1.0,
        sub_patch_max_abs_diff=sub_patch_diff,
    )


@dataclasses.dataclass
class InvarianceReport:
    """Half-classifier confidences per held-out image and their mean.

    0.5 means the classifier cannot place halves at all (perfectly
    horizontally invariant statistics); 1.0 means every half is confidently
    placed.
    """

    confidences: np.ndarray
    score: float

    @classmethod
    def from_confidences(cls, confidences) -> "InvarianceReport":
        confidences = np.asarray(confidences, dtype=np.float64)
        return cls(confidences=confidences, score=float(confidences.mean()))


def horizontal_invariance_score(images, classifier, config=None) -> InvarianceReport:
    """Mean max-class confidence of a left/right-half classifier on images."""
    from .curation import classifier_confidence

    confidences = classifier_confidence(images, classifier, config)
    return InvarianceReport.from_confidences(confidences)
