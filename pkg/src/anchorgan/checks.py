"""Structural invariant suite: everything that must hold for any parameters.

These checks are by-construction properties (they pass on a freshly
initialized network, before any training) and are wired into the ``check``
subcommand so a checkpoint can be audited in seconds.
"""

import torch

from .evaluation import equivariance_check
from .generator import Generator
from .latents import interpolate_latent, sample_anchor_triple
from .panorama import generate_panorama, new_state, next_frame, resample_region
from .sa_adain import adain_reference, compute_style_grid, sa_adain


def check_style_grid_oracle(n_configs: int = 200, seed: int = 0, tol: float = 1e-6):
    """Every column of the style grid equals interpolating the styles directly."""
    rng = torch.Generator().manual_seed(seed)
    worst = 0.0
    for _ in range(n_configs):
        c = int(torch.randint(2, 17, (), generator=rng))
        d = float([1, 2, 4, 8][int(torch.randint(4, (), generator=rng))])
        s = int([16, 32, 64][int(torch.randint(3, (), generator=rng))])
        gl, gc, gr = torch.randn(3, c, generator=rng, dtype=torch.float64)
        max_m = int((2 * d - 1) * 16)
        delta = int(torch.randint(max_m + 1, (), generator=rng)) / 16
        grid = compute_style_grid(gl, gc, gr, delta, d, s)
        for k in range(s):
            u = delta + k / s
            if u <= d:
                expected = interpolate_latent(gl, gc, 0.0, d, u)
            else:
                expected = interpolate_latent(gc, gr, d, 2 * d, u)
            worst = max(worst, float((grid[k] - expected).abs().max()))
    return worst <= tol, f"max column deviation {worst:.3e} (tol {tol:.0e})"


def check_reduction_to_scale_only(n: int = 20, seed: int = 1, tol: float = 1e-6):
    """Equal anchor styles and grid=1 collapse to whole-image scale-only."""
    rng = torch.Generator().manual_seed(seed)
    worst = 0.0
    for _ in range(n):
        h = torch.randn(3, 8, 8, generator=rng, dtype=torch.float64)
        gamma = torch.randn(3, generator=rng, dtype=torch.float64)
        out = sa_adain(h, gamma, gamma, gamma, delta=0.25, d=1.0, grid=1)
        ref = adain_reference(h, gamma, mode="scale_only")
        worst = max(worst, float((out - ref).abs().max()))
    return worst <= tol, f"max deviation from scale-only reference {worst:.3e}"


def check_gradients(seed: int = 2, probes: int = 10, tol: float = 1e-4):
    """Autograd of sa_adain against central finite differences."""
    rng = torch.Generator().manual_seed(seed)
    h = torch.randn(4, 8, 8, generator=rng, dtype=torch.float64, requires_grad=True)
    gammas = [
        torch.randn(4, generator=rng, dtype=torch.float64, requires_grad=True) for _ in range(3)
    ]
    weights = torch.randn(4, 8, 8, generator=rng, dtype=torch.float64)

    def loss_fn(h_, gl, gc, gr):
        return (sa_adain(h_, gl, gc, gr, delta=0.25, d=1.0, grid=4) * weights).sum()

    loss = loss_fn(h, *gammas)
    grads = torch.autograd.grad(loss, [h, *gammas])
    eps = 1e-6
    worst = 0.0
    flat_inputs = [h, *gammas]
    for _ in range(probes):
        which = int(torch.randint(len(flat_inputs), (), generator=rng))
        tensor = flat_inputs[which]
        idx = tuple(
            int(torch.randint(dim, (), generator=rng)) for dim in tensor.shape
        )
        plus = [t.detach().clone() for t in flat_inputs]
        minus = [t.detach().clone() for t in flat_inputs]
        plus[which][idx] += eps
        minus[which][idx] -= eps
        fd = (loss_fn(*plus) - loss_fn(*minus)) / (2 * eps)
        an = grads[which][idx]
        rel = float(abs(fd - an) / max(abs(fd), abs(an), 1e-8))
        worst = max(worst, rel)
    return worst <= tol, f"max relative gradient error {worst:.3e}"


def check_equivariance(generator: Generator, trials: int = 50, seed: int = 3):
    report = equivariance_check(generator, trials=trials, seed=seed)
    return report.bitwise, (
        f"one-patch shift: bitwise {report.bitwise_fraction * 100:.0f}% of {report.trials}, "
        f"max |diff| {report.max_abs_diff:.3e}"
    )


def check_seamlessness(generator: Generator, n_frames: int = 8, seed: int = 4):
    """A panorama equals the concatenation of its frame-by-frame stream."""
    state = new_state(generator.mapping, d=1.0, seed=seed)
    wide, _ = generate_panorama(state.clone(), generator, n_frames)
    s = state.clone()
    pieces = []
    for _ in range(n_frames):
        frame, s = next_frame(s, generator)
        pieces.append(frame)
    ok = torch.equal(wide, torch.cat(pieces, dim=-1))
    return ok, f"{n_frames}-frame panorama vs frame stream: {'bitwise equal' if ok else 'DIFFERS'}"


def check_resample_locality(generator: Generator, seed: int = 5, n_frames: int = 6):
    """Replacing one interior anchor changes only the frames its triples govern."""
    state = new_state(generator.mapping, d=1.0, seed=seed, initial_anchors=n_frames + 2)
    frames_before = []
    s = state.clone()
    for _ in range(n_frames):
        frame, s = next_frame(s, generator)
        frames_before.append(frame)
    target = n_frames // 2 + 1
    rng = torch.Generator().manual_seed(seed + 100)
    resampled = resample_region(state, [target], generator.mapping, rng)
    frames_after = []
    s = resampled
    for _ in range(n_frames):
        frame, s = next_frame(s, generator)
        frames_after.append(frame)
    changed = [not torch.equal(a, b) for a, b in zip(frames_before, frames_after)]
    # frame n uses anchors n, n+1, n+2
    expected = [target - 2 <= n <= target for n in range(n_frames)]
    governed_changed = any(c for c, e in zip(changed, expected) if e)
    outside_unchanged = all(not c for c, e in zip(changed, expected) if not e)
    ok = governed_changed and outside_unchanged
    return ok, (
        f"anchor {target} resampled: changed frames {[i for i, c in enumerate(changed) if c]}, "
        f"governed frames {[i for i, e in enumerate(expected) if e]}"
    )


def check_branch_comparison(seed: int = 6):
    """Compare the corrected case split with the inverted diagnostic form.

    Informational, always passes: reports the boundary error of the inverted
    form at the left anchor, where the corrected split returns the left style
    exactly and the inverted one extrapolates the wrong pair.
    """
    rng = torch.Generator().manual_seed(seed)
    gl, gc, gr = torch.randn(3, 8, generator=rng, dtype=torch.float64)
    corrected = compute_style_grid(gl, gc, gr, 0.0, 1.0, 16)
    inverted = compute_style_grid(gl, gc, gr, 0.0, 1.0, 16, inverted_branch=True)
    err_corrected = float((corrected[0] - gl).abs().max())
    err_inverted = float((inverted[0] - gl).abs().max())
    return True, (
        f"left-anchor boundary error: corrected {err_corrected:.3e}, "
        f"inverted branch {err_inverted:.3e}"
    )


def run_invariant_suite(generator: Generator, trials: int = 50, verbose: bool = True):
    """Run every structural check; returns (all_ok, [(name, ok, detail), ...])."""
    results = [
        ("style-grid-oracle", *check_style_grid_oracle()),
        ("sa-adain-reduction", *check_reduction_to_scale_only()),
        ("gradient-check", *check_gradients()),
        ("shift-equivariance", *check_equivariance(generator, trials=trials)),
        ("seamlessness", *check_seamlessness(generator)),
        ("resample-locality", *check_resample_locality(generator)),
        ("branch-comparison", *check_branch_comparison()),
    ]
    all_ok = all(ok for _, ok, _ in results)
    if verbose:
        for name, ok, detail in results:
            print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    return all_ok, results
