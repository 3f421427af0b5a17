"""Checkpoints and image files.

A checkpoint is a single NPZ container: a JSON manifest (config echo, step
count, seed, format version) stored under ``__manifest__`` plus one named
array per parameter, buffer and optimizer moment. The layout is flat and
documented, so checkpoints are readable without this package.
"""

import json
from pathlib import Path

import numpy as np
import torch

from .errors import ConfigError

CHECKPOINT_FORMAT_VERSION = 1


def _state_dict_arrays(prefix: str, module: torch.nn.Module) -> dict:
    return {
        f"{prefix}/{name}": tensor.detach().cpu().numpy()
        for name, tensor in module.state_dict().items()
    }


def _optimizer_arrays(prefix: str, optimizer: torch.optim.Optimizer, module: torch.nn.Module) -> dict:
    names = [name for name, _ in module.named_parameters()]
    arrays = {}
    for idx, name in enumerate(names):
        state = optimizer.state.get(optimizer.param_groups[0]["params"][idx], {})
        for key, value in state.items():
            if isinstance(value, torch.Tensor):
                arrays[f"{prefix}/{name}/{key}"] = value.detach().cpu().numpy()
            else:
                arrays[f"{prefix}/{name}/{key}"] = np.asarray(value)
    return arrays


def save_checkpoint(path, state, config: dict | None = None) -> None:
    """Write a TrainState (or a bare generator pair) to one NPZ file."""
    path = Path(path)
    manifest = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "step": state.step,
        "images_seen": state.images_seen,
        "seed": state.seed,
        "generator_config": _generator_config_dict(state.generator.cfg),
        "config": config,
    }
    arrays = {}
    arrays.update(_state_dict_arrays("g", state.generator))
    arrays.update(_state_dict_arrays("g_ema", state.g_ema))
    arrays.update(_state_dict_arrays("d", state.discriminator))
    arrays.update(_optimizer_arrays("opt_g", state.opt_g, state.generator))
    arrays.update(_optimizer_arrays("opt_d", state.opt_d, state.discriminator))
    arrays["ppl_ema"] = state.ppl_ema.detach().cpu().numpy()
    arrays["latent_rng"] = state.latent_rng.get_state().numpy()
    arrays["data_rng"] = state.data_rng.get_state().numpy()
    arrays["__manifest__"] = np.frombuffer(
        json.dumps(manifest).encode("utf-8"), dtype=np.uint8
    )
    np.savez(path, **arrays)


def read_manifest(path) -> dict:
    with np.load(path) as data:
        return json.loads(bytes(data["__manifest__"]).decode("utf-8"))


def _generator_config_dict(cfg) -> dict:
    import dataclasses

    return dataclasses.asdict(cfg)


def load_generator(path, ema: bool = True):
    """Rebuild the (EMA by default) generator from a checkpoint."""
    from .generator import Generator, GeneratorConfig

    path = Path(path)
    with np.load(path) as data:
        manifest = json.loads(bytes(data["__manifest__"]).decode("utf-8"))
        if manifest.get("format_version") != CHECKPOINT_FORMAT_VERSION:
            raise ConfigError(f"unsupported checkpoint format: {manifest.get('format_version')}")
        cfg = GeneratorConfig(**manifest["generator_config"])
        g = Generator(cfg)
        prefix = "g_ema/" if ema else "g/"
        state_dict = {
            key[len(prefix) :]: torch.from_numpy(data[key])
            for key in data.files
            if key.startswith(prefix)
        }
    g.load_state_dict(state_dict)
    g.eval()
    g.requires_grad_(False)
    return g, manifest


def load_train_state(path, train_cfg):
    """Rebuild a full TrainState (parameters, moments, rng streams) for resuming."""
    from .generator import Generator, GeneratorConfig
    from .training import Discriminator, TrainState

    path = Path(path)
    with np.load(path) as data:
        manifest = json.loads(bytes(data["__manifest__"]).decode("utf-8"))
        cfg = GeneratorConfig(**manifest["generator_config"])
        g = Generator(cfg)
        g_ema = Generator(cfg)
        d = Discriminator(cfg.output_resolution)

        def load_module(prefix, module):
            sd = {
                key[len(prefix) :]: torch.from_numpy(data[key].copy())
                for key in data.files
                if key.startswith(prefix) and key.count("/") == prefix.count("/")
            }
            module.load_state_dict(sd)

        load_module("g/", g)
        load_module("g_ema/", g_ema)
        load_module("d/", d)
        opt_g = torch.optim.Adam(g.parameters(), lr=train_cfg.lr, betas=train_cfg.betas)
        opt_d = torch.optim.Adam(d.parameters(), lr=train_cfg.lr, betas=train_cfg.betas)

        def load_optimizer(prefix, optimizer, module):
            names = [name for name, _ in module.named_parameters()]
            for idx, name in enumerate(names):
                entries = {}
                for key in data.files:
                    marker = f"{prefix}/{name}/"
                    if key.startswith(marker):
                        field = key[len(marker) :]
                        value = data[key]
                        entries[field] = (
                            torch.from_numpy(value.copy())
                            if value.ndim > 0
                            else torch.tensor(value.item())
                        )
                if entries:
                    optimizer.state[optimizer.param_groups[0]["params"][idx]] = entries

        load_optimizer("opt_g", opt_g, g)
        load_optimizer("opt_d", opt_d, d)
        latent_rng = torch.Generator()
        latent_rng.set_state(torch.from_numpy(data["latent_rng"].copy()))
        data_rng = torch.Generator()
        data_rng.set_state(torch.from_numpy(data["data_rng"].copy()))
        ppl_ema = torch.from_numpy(data["ppl_ema"].copy())
    g_ema.requires_grad_(False)
    return TrainState(
        generator=g,
        discriminator=d,
        g_ema=g_ema,
        opt_g=opt_g,
        opt_d=opt_d,
        latent_rng=latent_rng,
        data_rng=data_rng,
        ppl_ema=ppl_ema,
        step=manifest["step"],
        images_seen=manifest["images_seen"],
        seed=manifest["seed"],
    )


def image_to_uint8(img: torch.Tensor) -> np.ndarray:
    """(3, H, W) in [-1, 1] -> (H, W, 3) uint8."""
    arr = img.detach().cpu().numpy()
    arr = np.transpose(arr, (1, 2, 0))
    return np.clip((arr + 1.0) * 127.5 + 0.5, 0, 255).astype(np.uint8)


def save_png(path, img: torch.Tensor) -> None:
    from PIL import Image

    Image.fromarray(image_to_uint8(img)).save(path)


def load_png(path) -> torch.Tensor:
    """PNG -> (3, H, W) in [-1, 1]."""
    from PIL import Image

    arr = np.asarray(Image.open(path).convert("RGB"), dtype=np.float32)
    return torch.from_numpy(arr / 127.5 - 1.0).permute(2, 0, 1)
