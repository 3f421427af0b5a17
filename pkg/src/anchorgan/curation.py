"""Dataset curation: keep only images whose halves cannot be told apart.

A binary classifier learns to predict whether a half of a square center crop
is the left or the right one. Images on which it is confident carry
horizontally polarized statistics and are filtered out; what survives is
suitable for training a generator that must stitch arbitrary neighborhoods.
Also houses the procedural fixture datasets used for desk-scale training and
tests.

Images are numpy arrays (H, W, 3), float32 in [0, 1]; datasets are stacks
(N, H, W, 3).
"""

import dataclasses
import json
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .errors import ConfigError, DomainError


@dataclasses.dataclass
class CurationConfig:
    threshold: float = 0.7
    holdout_fraction: float = 0.2
    epochs: int = 10
    batch_size: int = 64
    lr: float = 1e-3
    body_lr: float = 1e-5  # two-rate schedule for a pluggable pretrained backbone
    head_lr: float = 1e-4
    input_height: int = 64
    input_width: int = 32
    seed: int = 0

    def __post_init__(self):
        if not 0.5 < self.threshold <= 1.0:
            raise ConfigError(f"threshold must be in (0.5, 1], got {self.threshold}")
        if not 0.0 <= self.holdout_fraction < 1.0:
            raise ConfigError("holdout_fraction must be in [0, 1)")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be positive")


LEFT, RIGHT = 0, 1


def center_square_crop(image: np.ndarray) -> np.ndarray:
    h, w = image.shape[0], image.shape[1]
    side = min(h, w)
    top = (h - side) // 2
    left = (w - side) // 2
    return image[top : top + side, left : left + side]


def split_halves(crop: np.ndarray):
    """Split a square crop at the midline; odd widths drop the center column."""
    side = crop.shape[1]
    half = side // 2
    left = crop[:, :half]
    right = crop[:, side - half :]
    return left, right


def make_half_dataset(images):
    """Labeled halves from square center crops.

    Returns (halves, labels, image_indices): two samples per usable image,
    labels exactly balanced by construction. Images narrower than 2 px are
    skipped with a warning.
    """
    halves, labels, sources = [], [], []
    for idx, image in enumerate(images):
        if min(image.shape[0], image.shape[1]) < 2:
            import warnings

            warnings.warn(f"image {idx} too small to split, skipped", stacklevel=2)
            continue
        crop = center_square_crop(np.asarray(image, dtype=np.float32))
        left, right = split_halves(crop)
        halves.extend([left, right])
        labels.extend([LEFT, RIGHT])
        sources.extend([idx, idx])
    return halves, np.asarray(labels, dtype=np.int64), np.asarray(sources, dtype=np.int64)


class HalfClassifier(nn.Module):
    """Small from-scratch conv net: 4 strided conv blocks and a linear head."""

    def __init__(self, input_height: int = 64, input_width: int = 32):
        super().__init__()
        self.input_height = input_height
        self.input_width = input_width
        chans = [3, 16, 32, 64, 64]
        self.body = nn.ModuleList(
            nn.Conv2d(chans[i], chans[i + 1], 3, stride=2, padding=1) for i in range(4)
        )
        self.head = nn.Linear(chans[-1] * (input_height // 16) * (input_width // 16), 2)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for conv in self.body:
            x = F.leaky_relu(conv(x), 0.2)
        return self.head(x.flatten(1))


class BackboneClassifier(nn.Module):
    """Wrapper for a pluggable feature backbone plus a fresh linear head.

    The backbone must map (B, 3, H, W) to (B, feature_dim); training uses the
    two-rate schedule (body_lr for the backbone, head_lr for the head).
    """

    def __init__(self, backbone: nn.Module, feature_dim: int):
        super().__init__()
        self.body = backbone
        self.head = nn.Linear(feature_dim, 2)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.body(x))


def _to_classifier_batch(halves, config: CurationConfig) -> torch.Tensor:
    """Stack halves as (N, 3, h, w) tensors at the classifier's input size."""
    tensors = []
    for half in halves:
        t = torch.from_numpy(np.ascontiguousarray(half, dtype=np.float32)).permute(2, 0, 1)
        if t.shape[1] != config.input_height or t.shape[2] != config.input_width:
            t = F.interpolate(
                t.unsqueeze(0),
                size=(config.input_height, config.input_width),
                mode="bilinear",
                align_corners=False,
            ).squeeze(0)
        tensors.append(t)
    return torch.stack(tensors)


def train_half_classifier(halves, labels, config: CurationConfig, backbone: nn.Module | None = None):
    """Cross-entropy training of the left/right-half classifier."""
    labels = np.asarray(labels)
    present = set(np.unique(labels).tolist())
    if present != {LEFT, RIGHT}:
        raise ConfigError(f"need both half labels present, got {sorted(present)}")
    x = _to_classifier_batch(halves, config)
    y = torch.from_numpy(labels)
    rng = torch.Generator().manual_seed(config.seed)
    if backbone is None:
        with torch.random.fork_rng():
            torch.manual_seed(config.seed)
            clf = HalfClassifier(config.input_height, config.input_width)
        optimizer = torch.optim.Adam(clf.parameters(), lr=config.lr)
    else:
        with torch.random.fork_rng():
            torch.manual_seed(config.seed)
            feature_dim = backbone(x[:1]).shape[-1]
            clf = BackboneClassifier(backbone, feature_dim)
        optimizer = torch.optim.Adam(
            [
                {"params": clf.body.parameters(), "lr": config.body_lr},
                {"params": clf.head.parameters(), "lr": config.head_lr},
            ]
        )
    clf.train()
    n = x.shape[0]
    for _ in range(config.epochs):
        order = torch.randperm(n, generator=rng)
        for i in range(0, n, config.batch_size):
            idx = order[i : i + config.batch_size]
            optimizer.zero_grad(set_to_none=True)
            loss = F.cross_entropy(clf(x[idx]), y[idx])
            loss.backward()
            optimizer.step()
    clf.eval()
    return clf


def evaluate_half_classifier(classifier, halves, labels, config: CurationConfig) -> float:
    """Accuracy on a labeled half set."""
    x = _to_classifier_batch(halves, config)
    y = torch.from_numpy(np.asarray(labels))
    classifier.eval()
    correct = 0
    with torch.no_grad():
        for i in range(0, x.shape[0], 256):
            pred = classifier(x[i : i + 256]).argmax(dim=1)
            correct += int((pred == y[i : i + 256]).sum())
    return correct / x.shape[0]


def classifier_confidence(images, classifier, config: CurationConfig | None = None) -> np.ndarray:
    """Per-image confidence: the max over its two halves of the max-class probability.

    An image counts as confidently placed if either half is; 0.5 is the floor
    for a two-class head.
    """
    config = config or CurationConfig()
    halves, _, sources = make_half_dataset(images)
    x = _to_classifier_batch(halves, config)
    classifier.eval()
    probs = []
    with torch.no_grad():
        for i in range(0, x.shape[0], 256):
            p = F.softmax(classifier(x[i : i + 256]), dim=1)
            probs.append(p.max(dim=1).values)
    half_conf = torch.cat(probs).numpy()
    n_images = int(sources.max()) + 1 if len(sources) else 0
    conf = np.zeros(n_images, dtype=np.float64)
    np.maximum.at(conf, sources, half_conf)
    return conf


def filter_by_confidence(images, classifier, threshold: float, config: CurationConfig | None = None):
    """Retain images the classifier cannot confidently place.

    Returns (retained indices, per-image confidences). Retention is monotone
    in the threshold: a larger threshold never drops an image a smaller one
    kept.
    """
    if not 0.5 < threshold <= 1.0:
        raise ConfigError(f"threshold must be in (0.5, 1], got {threshold}")
    confidences = classifier_confidence(images, classifier, config)
    retained = np.flatnonzero(confidences < threshold)
    return retained, confidences


@dataclasses.dataclass
class CurationResult:
    retained: np.ndarray
    confidences: np.ndarray
    holdout_accuracy: float


def curate_dataset(images, config: CurationConfig) -> CurationResult:
    """The full pipeline with 2-fold cross-scoring.

    Each image is scored by a classifier trained on the other fold, so
    memorized confidence cannot leak into the filtering decision.
    """
    images = [np.asarray(im, dtype=np.float32) for im in images]
    n = len(images)
    if n < 4:
        raise ConfigError("curation needs at least 4 images")
    rng = np.random.default_rng(config.seed)
    order = rng.permutation(n)
    folds = [order[: n // 2], order[n // 2 :]]
    confidences = np.zeros(n, dtype=np.float64)
    accuracies = []
    for train_fold, score_fold in ((0, 1), (1, 0)):
        train_images = [images[i] for i in folds[train_fold]]
        halves, labels, _ = make_half_dataset(train_images)
        n_holdout = max(2, int(len(halves) * config.holdout_fraction))
        clf = train_half_classifier(halves[:-n_holdout], labels[:-n_holdout], config)
        accuracies.append(
            evaluate_half_classifier(clf, halves[-n_holdout:], labels[-n_holdout:], config)
        )
        score_images = [images[i] for i in folds[score_fold]]
        confidences[folds[score_fold]] = classifier_confidence(score_images, clf, config)
    retained = np.flatnonzero(confidences < config.threshold)
    return CurationResult(
        retained=retained,
        confidences=confidences,
        holdout_accuracy=float(np.mean(accuracies)),
    )


SYNTH_KINDS = ("stationary-stripes", "stationary-noise", "gradient-polarized", "two-scene")


def _stripe_profile(rng: np.random.Generator, height: int) -> np.ndarray:
    """Smooth random vertical profile per channel, (height, 3) in [0.1, 0.9]."""
    y = np.arange(height) / height
    profile = np.zeros((height, 3))
    for c in range(3):
        for _ in range(3):
            freq = rng.integers(1, 7)
            amp = rng.uniform(0.2, 1.0)
            phase = rng.uniform(0, 2 * np.pi)
            profile[:, c] += amp * np.sin(2 * np.pi * freq * y + phase)
    lo, hi = profile.min(), profile.max()
    return 0.1 + 0.8 * (profile - lo) / max(hi - lo, 1e-9)


def synth_dataset(kind: str, n: int, rng: np.random.Generator, size: int = 64) -> np.ndarray:
    """Procedural fixture images, (n, size, size, 3) float32 in [0, 1].

    stationary-stripes:  horizontal stripes, constant along x (connectable)
    stationary-noise:    smoothed isotropic noise texture (connectable)
    gradient-polarized:  dark left half, bright right half (not connectable)
    two-scene:           left stripes, a transition band, right stripes
    """
    if n < 1:
        raise ConfigError("n must be >= 1")
    if kind not in SYNTH_KINDS:
        raise ConfigError(f"unknown dataset kind {kind!r}; expected one of {SYNTH_KINDS}")
    out = np.zeros((n, size, size, 3), dtype=np.float32)
    x = np.arange(size) / size
    for i in range(n):
        if kind == "stationary-stripes":
            profile = _stripe_profile(rng, size)
            img = np.repeat(profile[:, None, :], size, axis=1)
            img = img + rng.normal(0.0, 0.01, img.shape)
        elif kind == "stationary-noise":
            rough = rng.uniform(0, 1, (size, size, 3))
            kernel = np.ones(9) / 9.0
            img = rough
            for axis in (0, 1):
                img = np.apply_along_axis(
                    lambda v: np.convolve(np.pad(v, 4, mode="wrap"), kernel, mode="valid"),
                    axis,
                    img,
                )
            img = 0.5 + (img - img.mean()) * 3.0
        elif kind == "gradient-polarized":
            center = rng.uniform(0.4, 0.6)
            tau = rng.uniform(0.05, 0.1)
            ramp = 1.0 / (1.0 + np.exp(-(x - center) / tau))
            gains = rng.uniform(0.85, 1.0, 3)
            img = ramp[None, :, None] * gains[None, None, :]
            img = 0.05 + 0.9 * img + rng.normal(0.0, 0.01, (size, size, 3))
        else:  # two-scene
            left = np.repeat(_stripe_profile(rng, size)[:, None, :], size, axis=1)
            right = np.repeat(_stripe_profile(rng, size)[:, None, :], size, axis=1)
            center = rng.uniform(0.3, 0.7)
            tau = rng.uniform(0.05, 0.12)
            blend = 1.0 / (1.0 + np.exp(-(x - center) / tau))
            img = (1.0 - blend[None, :, None]) * left + blend[None, :, None] * right
            img = img + rng.normal(0.0, 0.01, img.shape)
        out[i] = np.clip(img, 0.0, 1.0)
    return out


def dataset_to_tensor(images: np.ndarray) -> torch.Tensor:
    """(N, H, W, 3) in [0, 1] -> (N, 3, H, W) in [-1, 1] for the GAN."""
    t = torch.from_numpy(np.ascontiguousarray(images, dtype=np.float32))
    return t.permute(0, 3, 1, 2) * 2.0 - 1.0


INDEX_NAME = "index.json"


def save_image_dir(directory, images: np.ndarray, meta: dict | None = None) -> None:
    """Write a dataset as 8-bit PNGs plus an index file."""
    from PIL import Image

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = []
    for i, img in enumerate(images):
        name = f"img_{i:06d}.png"
        arr = np.clip(np.asarray(img) * 255.0 + 0.5, 0, 255).astype(np.uint8)
        Image.fromarray(arr).save(directory / name)
        files.append(name)
    index = {"count": len(files), "files": files}
    if meta:
        index.update(meta)
    (directory / INDEX_NAME).write_text(json.dumps(index, indent=2))


def load_image_dir(directory) -> np.ndarray:
    from PIL import Image

    directory = Path(directory)
    index_path = directory / INDEX_NAME
    if not index_path.exists():
        raise ConfigError(f"no {INDEX_NAME} in {directory}")
    index = json.loads(index_path.read_text())
    images = []
    for name in index["files"]:
        arr = np.asarray(Image.open(directory / name).convert("RGB"), dtype=np.float32)
        images.append(arr / 255.0)
    return np.stack(images)
