import math

import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from anchorgan.coords import (
    FramePlacement,
    PeriodBank,
    default_period_bank,
    embed_position,
    offset_candidates,
    patch_coordinate,
    sample_offset,
)
from anchorgan.errors import ConfigError, DomainError


class TestEmbedPosition:
    def test_zero(self):
        bank = PeriodBank((1.0, 0.5, 0.25))
        out = embed_position(torch.tensor(0.0, dtype=torch.float64), bank)
        assert torch.allclose(out[0::2], torch.zeros(3, dtype=torch.float64))
        assert torch.allclose(out[1::2], torch.ones(3, dtype=torch.float64))

    def test_quarter_period(self):
        bank = PeriodBank((1.0,))
        out = embed_position(torch.tensor(0.25, dtype=torch.float64), bank)
        assert abs(float(out[0]) - 1.0) < 1e-12
        assert abs(float(out[1])) < 1e-12

    def test_periodicity_per_channel(self):
        bank = PeriodBank((1.0, 0.5))
        x = torch.tensor(0.3, dtype=torch.float64)
        a = embed_position(x, bank)
        b = embed_position(x + 1.0, bank)  # one full period of channel 0
        assert torch.allclose(a[:2], b[:2], atol=1e-9)

    @given(x=st.floats(-1e6, 1e6))
    @settings(max_examples=200, deadline=None)
    def test_bounded(self, x):
        bank = default_period_bank(1.0)
        out = embed_position(torch.tensor(x, dtype=torch.float64), bank)
        assert float(out.abs().max()) <= 1.0 + 1e-12

    def test_translation_by_d_when_periods_divide(self):
        # periods {d, d/2, d/4, d/8} all divide d
        d = 2.0
        bank = default_period_bank(d)
        x = torch.linspace(-3, 3, 11, dtype=torch.float64)
        a = embed_position(x, bank)
        b = embed_position(x + 3 * d, bank)
        assert torch.allclose(a, b, atol=1e-9)

    def test_vectorized_shape(self):
        bank = PeriodBank((1.0, 2.0))
        out = embed_position(torch.zeros(5, 7), bank)
        assert out.shape == (5, 7, 4)

    def test_bank_validation(self):
        with pytest.raises(ConfigError):
            PeriodBank(())
        with pytest.raises(ConfigError):
            PeriodBank((1.0, -2.0))


class TestPatchCoordinate:
    def test_first_column_is_delta(self):
        p = FramePlacement(delta=0.25, d=1.0)
        assert patch_coordinate(p, 0, 0, 16) == 0.25

    def test_direct_substitution(self):
        p = FramePlacement(delta=0.0, d=1.0, grid=16)
        assert patch_coordinate(p, 5, 0, 16) == pytest.approx(5 / 16)

    def test_last_column(self):
        p = FramePlacement(delta=0.5, d=1.0, grid=16)
        s = 64
        last = patch_coordinate(p, 15, s // 16 - 1, s)
        assert last == pytest.approx(0.5 + (s - 1) / s)

    def test_grid_must_divide(self):
        p = FramePlacement(delta=0.0, d=1.0, grid=16)
        with pytest.raises(ConfigError):
            patch_coordinate(p, 0, 0, 24)

    def test_placement_bounds(self):
        with pytest.raises(DomainError):
            FramePlacement(delta=1.5, d=1.0)  # max is 2d - W = 1
        with pytest.raises(DomainError):
            FramePlacement(delta=-0.5, d=1.0)


class TestSampleOffset:
    def test_candidate_enumeration(self):
        cands = offset_candidates(1.0, 1.0, 16)
        assert len(cands) == 17
        assert cands[0] == 0.0
        assert cands[-1] == pytest.approx(1.0)

    def test_single_candidate_at_boundary(self):
        assert offset_candidates(0.5, 1.0, 16) == [0.0]

    def test_empty_candidates(self):
        with pytest.raises(DomainError):
            offset_candidates(0.4, 1.0, 16)

    def test_uniformity(self):
        # Monte-Carlo frequencies over 1e5 draws, 17 candidates
        gen = torch.Generator().manual_seed(0)
        counts = {}
        n = 100_000
        for _ in range(n):
            delta = sample_offset(1.0, 1.0, 16, gen)
            counts[delta] = counts.get(delta, 0) + 1
        assert len(counts) == 17
        for c in counts.values():
            assert abs(c / n - 1 / 17) <= 0.005

    @given(d_units=st.integers(8, 64))
    @settings(max_examples=50, deadline=None)
    def test_frame_never_exceeds_right_anchor(self, d_units):
        d = d_units / 16
        gen = torch.Generator().manual_seed(d_units)
        for _ in range(20):
            delta = sample_offset(d, 1.0, 16, gen)
            assert delta + 1.0 <= 2 * d + 1e-9
