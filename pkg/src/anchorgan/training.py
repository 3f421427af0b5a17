"""Adversarial training loop.

The discriminator sees only square frame-sized crops and receives no
positional information. Every fake sample draws a fresh anchor triple (with
independent per-anchor style mixing) and a fresh discrete offset, so over an
epoch gradients reach all three anchors. Losses are the non-saturating
logistic pair, with an R1 gradient penalty on real samples and a path-length
penalty on the generator, both applied lazily with compensating multipliers.
"""

import copy
import csv
import dataclasses
import math
from pathlib import Path

import torch
import torch.nn.functional as F
from torch import nn

from .coords import offset_candidates
from .errors import ConfigError, NumericAbort
from .generator import Generator, GeneratorConfig, units_of
from .latents import sample_anchor_triple, style_mix
from .layers import EqualizedConv2d, EqualizedLinear


@dataclasses.dataclass
class TrainConfig:
    batch_size: int = 16
    total_kimg: int = 50
    lr: float = 0.0025
    betas: tuple = (0.0, 0.99)
    r1_gamma: float = 10.0
    r1_interval: int = 16
    ppl_weight: float = 2.0
    ppl_interval: int = 8
    ppl_decay: float = 0.01
    style_mix_prob: float = 0.9
    d: float = 1.0
    ema_halflife_kimg: float = 10.0
    seed: int = 0
    log_every: int = 50
    checkpoint_every_kimg: float = 25.0

    def __post_init__(self):
        self.betas = tuple(self.betas)
        if self.batch_size < 1 or self.total_kimg <= 0:
            raise ConfigError("batch_size and total_kimg must be positive")
        if self.lr < 0:
            raise ConfigError("learning rate must be nonnegative")
        if self.r1_gamma < 0 or self.ppl_weight < 0:
            raise ConfigError("r1_gamma and ppl_weight must be nonnegative")
        if not 0.0 <= self.style_mix_prob <= 1.0:
            raise ConfigError("style_mix_prob must be in [0, 1]")
        if self.d <= 0:
            raise ConfigError("anchor spacing d must be positive")


class Discriminator(nn.Module):
    """Plain conv stack on square crops; no normalization, leaky rectifier."""

    def __init__(self, resolution: int = 64, channels: tuple | None = None):
        super().__init__()
        if not (resolution & (resolution - 1) == 0 and resolution >= 8):
            raise ConfigError(f"resolution must be a power of two >= 8, got {resolution}")
        halvings = int(math.log2(resolution // 4))
        if channels is None:
            channels = tuple(min(128, 32 << i) for i in range(halvings + 1))
        if len(channels) != halvings + 1:
            raise ConfigError(f"need {halvings + 1} channel entries for {resolution}->4")
        self.from_rgb = EqualizedConv2d(3, channels[0], kernel_size=1)
        self.blocks = nn.ModuleList(
            EqualizedConv2d(channels[i], channels[i + 1], kernel_size=3, padding=1)
            for i in range(halvings)
        )
        self.final_conv = EqualizedConv2d(channels[-1], channels[-1], kernel_size=3, padding=1)
        self.final_linear = EqualizedLinear(channels[-1] * 4 * 4, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = F.leaky_relu(self.from_rgb(x), 0.2)
        for block in self.blocks:
            x = F.leaky_relu(block(x), 0.2)
            x = F.avg_pool2d(x, 2)
        x = F.leaky_relu(self.final_conv(x), 0.2)
        return self.final_linear(x.flatten(1)).squeeze(1)


def gan_losses(real_logits: torch.Tensor, fake_logits: torch.Tensor):
    """Non-saturating logistic losses, batch-averaged.

    d_loss = E[softplus(fake)] + E[softplus(-real)]
    g_loss = E[softplus(-fake)]
    """
    if not (torch.isfinite(real_logits).all() and torch.isfinite(fake_logits).all()):
        raise NumericAbort("non-finite discriminator logits")
    d_loss = F.softplus(fake_logits).mean() + F.softplus(-real_logits).mean()
    g_loss = F.softplus(-fake_logits).mean()
    return g_loss, d_loss


def r1_penalty(discriminator: nn.Module, real: torch.Tensor, gamma: float) -> torch.Tensor:
    """(gamma / 2) * E[ ||grad_x D(x)||^2 ] at real samples."""
    x = real.detach().requires_grad_(True)
    logits = discriminator(x)
    if not logits.requires_grad:  # discriminator ignores its input entirely
        return torch.zeros((), dtype=real.dtype)
    (grads,) = torch.autograd.grad(logits.sum(), x, create_graph=True)
    return (gamma / 2.0) * grads.pow(2).sum(dim=(1, 2, 3)).mean()


def ppl_penalty(
    fake: torch.Tensor,
    w_codes: torch.Tensor,
    ema_path_length: torch.Tensor,
    decay: float = 0.01,
    generator: torch.Generator | None = None,
):
    """Path-length penalty on the latent-to-image Jacobian.

    Projects the Jacobian at w onto image-space noise, tracks the running
    mean of the projected norms, and penalizes squared deviation from it.
    Returns (penalty, new_ema, path_lengths).
    """
    hw = fake.shape[-2] * fake.shape[-1]
    noise = torch.randn(fake.shape, generator=generator, dtype=fake.dtype) / math.sqrt(hw)
    (grads,) = torch.autograd.grad((fake * noise).sum(), w_codes, create_graph=True)
    path_lengths = grads.pow(2).sum(dim=-1).sqrt()
    new_ema = ema_path_length + decay * (path_lengths.mean().detach() - ema_path_length)
    penalty = (path_lengths - new_ema).pow(2).mean()
    return penalty, new_ema, path_lengths


@dataclasses.dataclass
class TrainState:
    generator: Generator
    discriminator: Discriminator
    g_ema: Generator
    opt_g: torch.optim.Adam
    opt_d: torch.optim.Adam
    latent_rng: torch.Generator
    data_rng: torch.Generator
    ppl_ema: torch.Tensor
    step: int = 0
    images_seen: int = 0
    seed: int = 0
    last_log: dict = dataclasses.field(default_factory=dict)

    @property
    def kimg(self) -> float:
        return self.images_seen / 1000.0


def init_train_state(gen_cfg: GeneratorConfig, train_cfg: TrainConfig) -> TrainState:
    seed = train_cfg.seed
    g = Generator(gen_cfg, seed=seed)
    with torch.random.fork_rng():
        torch.manual_seed(seed + 1)
        d = Discriminator(gen_cfg.output_resolution)
    g_ema = copy.deepcopy(g)
    g_ema.requires_grad_(False)
    opt_g = torch.optim.Adam(g.parameters(), lr=train_cfg.lr, betas=train_cfg.betas)
    opt_d = torch.optim.Adam(d.parameters(), lr=train_cfg.lr, betas=train_cfg.betas)
    latent_rng = torch.Generator().manual_seed(seed + 2)
    data_rng = torch.Generator().manual_seed(seed + 3)
    return TrainState(
        generator=g,
        discriminator=d,
        g_ema=g_ema,
        opt_g=opt_g,
        opt_d=opt_d,
        latent_rng=latent_rng,
        data_rng=data_rng,
        ppl_ema=torch.zeros(()),
        seed=seed,
    )


def _sample_fakes(state: TrainState, cfg: TrainConfig, batch_size: int, center_override=None):
    """Fresh triples (style-mixed) and fresh discrete offsets for one batch."""
    g = state.generator
    grid = g.cfg.grid
    n_offsets = len(offset_candidates(cfg.d, 1.0, grid))
    triples = []
    deltas = []
    for _ in range(batch_size):
        triple = sample_anchor_triple(g.mapping, cfg.d, state.latent_rng)
        if center_override is None:
            triple = style_mix(
                triple, cfg.style_mix_prob, state.latent_rng, g.mapping, g.cfg.num_style_layers
            )
        triples.append(triple)
        deltas.append(int(torch.randint(n_offsets, (), generator=state.latent_rng)))
    fakes = g.synthesize_batch(triples, deltas, run_seed=state.seed, center_override=center_override)
    return fakes, triples, deltas


def _abort(state: TrainState, message: str, run_dir):
    snapshot = None
    if run_dir is not None:
        from .io import save_checkpoint

        snapshot = Path(run_dir) / "abort.ckpt.npz"
        save_checkpoint(snapshot, state, config=None)
    raise NumericAbort(message, snapshot_path=snapshot)


def training_step(state: TrainState, real: torch.Tensor, cfg: TrainConfig, run_dir=None) -> TrainState:
    """One discriminator update followed by one generator update."""
    g, d = state.generator, state.discriminator
    batch = real.shape[0]
    log = {}

    # Discriminator.
    d.requires_grad_(True)
    g.requires_grad_(False)
    with torch.no_grad():
        fakes, _, _ = _sample_fakes(state, cfg, batch)
    real_logits = d(real)
    fake_logits = d(fakes)
    try:
        _, d_loss = gan_losses(real_logits, fake_logits)
    except NumericAbort as err:
        _abort(state, str(err), run_dir)
    log["d_loss"] = float(d_loss.detach())
    if cfg.r1_gamma > 0 and state.step % cfg.r1_interval == 0:
        r1 = r1_penalty(d, real, cfg.r1_gamma)
        if not torch.isfinite(r1):
            _abort(state, "non-finite R1 penalty", run_dir)
        d_loss = d_loss + r1 * cfg.r1_interval
        log["r1"] = float(r1.detach())
    opt = state.opt_d
    opt.zero_grad(set_to_none=True)
    d_loss.backward()
    opt.step()

    # Generator.
    d.requires_grad_(False)
    g.requires_grad_(True)
    fakes, _, _ = _sample_fakes(state, cfg, batch)
    g_loss = F.softplus(-d(fakes)).mean()
    if not torch.isfinite(g_loss):
        _abort(state, "non-finite generator loss", run_dir)
    log["g_loss"] = float(g_loss.detach())
    if cfg.ppl_weight > 0 and state.step % cfg.ppl_interval == 0:
        w_center = torch.stack(
            [
                sample_anchor_triple(g.mapping, cfg.d, state.latent_rng).w_c
                for _ in range(batch)
            ]
        ).requires_grad_(True)
        ppl_fakes, _, _ = _sample_fakes(state, cfg, batch, center_override=w_center)
        penalty, state.ppl_ema, _ = ppl_penalty(
            ppl_fakes, w_center, state.ppl_ema, cfg.ppl_decay, generator=state.latent_rng
        )
        if not torch.isfinite(penalty):
            _abort(state, "non-finite path-length penalty", run_dir)
        g_loss = g_loss + cfg.ppl_weight * penalty * cfg.ppl_interval
        log["ppl"] = float(penalty.detach())
    opt = state.opt_g
    opt.zero_grad(set_to_none=True)
    g_loss.backward()
    opt.step()

    # EMA copy of the generator for inference.
    decay = 0.5 ** (batch / max(cfg.ema_halflife_kimg * 1000.0, 1e-8))
    with torch.no_grad():
        for p_ema, p in zip(state.g_ema.parameters(), g.parameters()):
            p_ema.copy_(p.lerp(p_ema, decay))
        for b_ema, b in zip(state.g_ema.buffers(), g.buffers()):
            b_ema.copy_(b)

    state.step += 1
    state.images_seen += batch
    state.last_log = log
    return state


def iterate_batches(data: torch.Tensor, batch_size: int, rng: torch.Generator):
    """Endless batches in a seeded, reshuffled-per-epoch order."""
    n = data.shape[0]
    if n < batch_size:
        raise ConfigError(f"dataset of {n} images is smaller than one batch ({batch_size})")
    while True:
        order = torch.randperm(n, generator=rng)
        for i in range(0, n - batch_size + 1, batch_size):
            yield data[order[i : i + batch_size]]


def train(
    data: torch.Tensor,
    gen_cfg: GeneratorConfig,
    train_cfg: TrainConfig,
    run_dir=None,
    eval_hook=None,
    state: TrainState | None = None,
) -> TrainState:
    """Run the loop until total_kimg images have been shown to D.

    ``data`` is (N, 3, H, W) in [-1, 1]. ``eval_hook(state)``, when given, is
    called at every log interval and may return extra columns for the metrics
    CSV. Checkpoints and metrics land in ``run_dir`` when provided.
    """
    if state is None:
        state = init_train_state(gen_cfg, train_cfg)
    writer = None
    csv_file = None
    if run_dir is not None:
        run_dir = Path(run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        csv_path = run_dir / "metrics.csv"
        new_file = not csv_path.exists()
        csv_file = open(csv_path, "a", newline="")
        writer = csv.writer(csv_file)
        if new_file:
            writer.writerow(["step", "kimg", "d_loss", "g_loss", "r1", "ppl", "fid"])
    batches = iterate_batches(data, train_cfg.batch_size, state.data_rng)
    target = train_cfg.total_kimg * 1000
    next_ckpt = train_cfg.checkpoint_every_kimg * 1000
    try:
        while state.images_seen < target:
            real = next(batches)
            state = training_step(state, real, train_cfg, run_dir=run_dir)
            if state.step % train_cfg.log_every == 0 or state.images_seen >= target:
                log = state.last_log
                extra = eval_hook(state) if eval_hook is not None else {}
                if writer is not None:
                    writer.writerow(
                        [
                            state.step,
                            f"{state.kimg:.3f}",
                            f"{log.get('d_loss', float('nan')):.6f}",
                            f"{log.get('g_loss', float('nan')):.6f}",
                            f"{log.get('r1', float('nan')):.6f}",
                            f"{log.get('ppl', float('nan')):.6f}",
                            f"{extra.get('fid', float('nan')):.6f}" if extra else "",
                        ]
                    )
                    csv_file.flush()
            if run_dir is not None and state.images_seen >= next_ckpt:
                from .io import save_checkpoint

                save_checkpoint(run_dir / f"ckpt_{int(state.kimg):05d}.npz", state)
                next_ckpt += train_cfg.checkpoint_every_kimg * 1000
        if run_dir is not None:
            from .io import save_checkpoint

            save_checkpoint(run_dir / "ckpt_final.npz", state)
    finally:
        if csv_file is not None:
            csv_file.close()
    return state
