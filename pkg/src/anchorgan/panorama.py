"""Frame-by-frame infinite panorama generation over an anchor stream.

Anchors sit at positions origin + i * d; frames of width W = 1 are emitted at
step W. Each frame sees only the triple bracketing it (relabeled locally so
the generator never receives a global coordinate) and noise keyed by the
panorama-level patch column, so frames are pure functions of state slices:
regenerating any frame from a copied or restored state reproduces it exactly,
and replacing an anchor can only change the frames whose triples contain it.
"""

import dataclasses
import json
from pathlib import Path

import numpy as np
import torch

from .errors import ConfigError, DomainError
from .generator import Generator, units_of
from .latents import AnchorSequence, MappingNetwork

STATE_FORMAT_VERSION = 1


@dataclasses.dataclass
class PanoramaState:
    """Anchor stream plus a cursor; the cursor advances one frame width per frame."""

    anchors: AnchorSequence
    run_seed: int = 0
    frame_ordinal: int = 0
    rng: torch.Generator | None = None

    def __post_init__(self):
        if self.rng is None:
            self.rng = torch.Generator().manual_seed(self.run_seed)

    @property
    def cursor(self) -> float:
        """Left border of the next frame, in coordinate units."""
        return self.anchors.origin + float(self.frame_ordinal)

    def clone(self) -> "PanoramaState":
        rng = torch.Generator()
        rng.set_state(self.rng.get_state())
        seq = AnchorSequence(
            anchors=list(self.anchors.anchors), d=self.anchors.d, origin=self.anchors.origin
        )
        return PanoramaState(seq, self.run_seed, self.frame_ordinal, rng)


def new_state(mapping: MappingNetwork, d: float, seed: int, initial_anchors: int = 3) -> PanoramaState:
    """Fresh stream with i.i.d. anchors drawn through the mapping network."""
    if initial_anchors < 3:
        raise ConfigError("a stream needs at least 3 anchors")
    rng = torch.Generator().manual_seed(seed)
    seq = AnchorSequence(anchors=[], d=d, origin=0.0)
    seq.extend_with(mapping, rng, initial_anchors)
    return PanoramaState(anchors=seq, run_seed=seed, frame_ordinal=0, rng=rng)


def _frame_placement(state: PanoramaState, grid: int):
    """Bracketing triple index and the local offset, both in exact patch units."""
    d_units = units_of(state.anchors.d, grid, "anchor spacing d")
    if 2 * d_units < grid:
        raise DomainError("frame is wider than the span between anchor triples")
    n_units = state.frame_ordinal * grid  # cursor offset from origin, in patch units
    i = n_units // d_units
    m = n_units - i * d_units
    # keep the frame inside the triple span [pos_i, pos_i + 2d]
    while m + grid > 2 * d_units:
        i += 1
        m -= d_units
    if m < 0:
        raise DomainError("cursor fell outside every admissible triple")
    return i, m, d_units


def next_frame(state: PanoramaState, generator: Generator):
    """Render the frame at the cursor; returns (frame, advanced state).

    The input state is not modified; calling twice from copies yields
    identical frames.
    """
    state = state.clone()
    grid = generator.cfg.grid
    i, m, d_units = _frame_placement(state, grid)
    while len(state.anchors) < i + 3:
        state.anchors.extend_with(generator.mapping, state.rng, 1)
    triple = state.anchors.triple_at(i)
    frame = generator.generate_frame(
        triple,
        delta=m / grid,
        noise_key_base=state.frame_ordinal * grid,
        run_seed=state.run_seed,
    )
    state.frame_ordinal += 1
    return frame, state


def generate_panorama(state: PanoramaState, generator: Generator, n_frames: int):
    """Concatenate n successive frames; returns (wide image, advanced state).

    Frames are streamed into a preallocated strip, so peak memory beyond the
    output itself is one frame.
    """
    if n_frames < 1:
        raise ConfigError("n_frames must be >= 1")
    height = generator.frame_height
    width = generator.cfg.output_resolution
    first, state = next_frame(state, generator)
    wide = torch.empty(3, height, width * n_frames, dtype=first.dtype)
    wide[:, :, :width] = first
    for j in range(1, n_frames):
        frame, state = next_frame(state, generator)
        wide[:, :, j * width : (j + 1) * width] = frame
    return wide, state


def iter_frames(state: PanoramaState, generator: Generator, n_frames: int):
    """Yield (frame, state_after) n times without holding more than one frame."""
    for _ in range(n_frames):
        frame, state = next_frame(state, generator)
        yield frame, state


def resample_region(
    state: PanoramaState,
    anchor_indices,
    mapping: MappingNetwork,
    rng: torch.Generator,
) -> PanoramaState:
    """Replace the listed anchors with fresh draws; all other state is kept.

    Frames whose bracketing triples contain none of the replaced anchors are
    unchanged down to the bit.
    """
    state = state.clone()
    for i in anchor_indices:
        if not 0 <= i < len(state.anchors):
            raise DomainError(f"anchor index {i} out of range [0, {len(state.anchors)})")
    for i in anchor_indices:
        z = torch.randn(mapping.d_z, generator=rng, dtype=mapping.param_dtype)
        with torch.no_grad():
            state.anchors.anchors[i] = mapping(z)
    return state


def save_state(path, state: PanoramaState) -> None:
    """Manifest (JSON) plus anchors and rng state in a named-array container."""
    path = Path(path)
    manifest = {
        "format_version": STATE_FORMAT_VERSION,
        "d_w": int(state.anchors.anchors[0].shape[-1]),
        "d": state.anchors.d,
        "origin": state.anchors.origin,
        "count": len(state.anchors),
        "run_seed": state.run_seed,
        "frame_ordinal": state.frame_ordinal,
    }
    path.with_suffix(".json").write_text(json.dumps(manifest, indent=2))
    arrays = {
        f"anchor_{i:05d}": a.detach().cpu().numpy()
        for i, a in enumerate(state.anchors.anchors)
    }
    arrays["rng_state"] = state.rng.get_state().numpy()
    np.savez(path.with_suffix(".npz"), **arrays)


def load_state(path, dtype: torch.dtype = torch.float32) -> PanoramaState:
    path = Path(path)
    manifest = json.loads(path.with_suffix(".json").read_text())
    if manifest.get("format_version") != STATE_FORMAT_VERSION:
        raise ConfigError(f"unsupported panorama state format: {manifest.get('format_version')}")
    with np.load(path.with_suffix(".npz")) as data:
        anchors = [
            torch.from_numpy(data[f"anchor_{i:05d}"]).to(dtype)
            for i in range(manifest["count"])
        ]
        rng = torch.Generator()
        rng.set_state(torch.from_numpy(data["rng_state"]))
    seq = AnchorSequence(anchors=anchors, d=manifest["d"], origin=manifest["origin"])
    return PanoramaState(
        anchors=seq,
        run_seed=manifest["run_seed"],
        frame_ordinal=manifest["frame_ordinal"],
        rng=rng,
    )
