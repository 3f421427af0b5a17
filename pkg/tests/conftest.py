import numpy as np
import pytest
import torch

from anchorgan.generator import Generator, GeneratorConfig
from anchorgan.latents import sample_anchor_triple


@pytest.fixture(scope="session")
def small_cfg():
    """Tiny generator for fast structural tests: 32 px output, 8 patches."""
    return GeneratorConfig(
        output_resolution=32,
        grid=8,
        base_resolution=4,
        channels=(32, 32, 16, 16),
        d_z=16,
        d_w=16,
        mapping_depth=2,
        mapping_hidden=16,
        x_periods=(1.0, 0.5, 0.25, 0.125),
        y_periods=(2.0,),
    )


@pytest.fixture(scope="session")
def small_gen(small_cfg):
    g = Generator(small_cfg, seed=7)
    g.requires_grad_(False)
    return g


@pytest.fixture(scope="session")
def desk_gen():
    """The default desk config (64 px, 16 patches), untrained."""
    g = Generator(GeneratorConfig(), seed=11)
    g.requires_grad_(False)
    return g


@pytest.fixture()
def rng():
    return torch.Generator().manual_seed(1234)


@pytest.fixture()
def np_rng():
    return np.random.default_rng(1234)


def make_triple(gen, d=1.0, seed=0):
    r = torch.Generator().manual_seed(seed)
    return sample_anchor_triple(gen.mapping, d, r)
