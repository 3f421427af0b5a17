import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from anchorgan.errors import ConfigError, DomainError
from anchorgan.latents import (
    AnchorSequence,
    AnchorTriple,
    MappingNetwork,
    interpolate_latent,
    load_anchors,
    sample_anchor_triple,
    save_anchors,
    style_mix,
)


class TestMappingNetwork:
    def test_identity_single_layer(self):
        mapping = MappingNetwork(d_z=64, d_w=64, depth=1)
        layer = mapping.net[0]
        with torch.no_grad():
            # effective weight is weight * scale; make it the identity
            layer.weight.copy_(torch.eye(64) / layer.scale)
            layer.bias.zero_()
        z = torch.randn(5, 64)
        assert torch.equal(mapping(z), z)

    def test_determinism(self):
        mapping = MappingNetwork(d_z=16, d_w=16, depth=3)
        z = torch.randn(4, 16)
        assert torch.equal(mapping(z), mapping(z))

    def test_batch_statistics_finite_nonzero(self):
        # Monte-Carlo moments over a large sampled batch.
        mapping = MappingNetwork(d_z=32, d_w=32, depth=4)
        z = torch.randn(1000, 32, generator=torch.Generator().manual_seed(0))
        with torch.no_grad():
            w = mapping(z)
        mean, var = w.mean(dim=0), w.var(dim=0)
        assert torch.isfinite(mean).all() and torch.isfinite(var).all()
        assert (var > 0).all()

    def test_dimension_mismatch(self):
        mapping = MappingNetwork(d_z=16, d_w=16)
        with pytest.raises(ConfigError):
            mapping(torch.randn(3, 8))


class TestInterpolate:
    def test_endpoints_and_midpoint(self):
        w_a, w_b = torch.randn(2, 8, dtype=torch.float64)
        assert torch.equal(interpolate_latent(w_a, w_b, 0.0, 1.0, 0.0), w_a)
        mid = interpolate_latent(w_a, w_b, 0.0, 1.0, 0.5)
        assert torch.allclose(mid, (w_a + w_b) / 2, atol=1e-15)

    def test_direct_substitution(self):
        # a=0, b=2, x=0.5 -> alpha = (2 - 0.5) / 2 = 0.75
        w_a, w_b = torch.randn(2, 8, dtype=torch.float64)
        out = interpolate_latent(w_a, w_b, 0.0, 2.0, 0.5)
        assert torch.allclose(out, 0.75 * w_a + 0.25 * w_b, atol=1e-15)

    def test_domain_errors(self):
        w = torch.randn(4)
        with pytest.raises(DomainError):
            interpolate_latent(w, w, 0.0, 1.0, 1.5)
        with pytest.raises(DomainError):
            interpolate_latent(w, w, 1.0, 1.0, 1.0)
        with pytest.raises(DomainError):
            interpolate_latent(w, w, 2.0, 1.0, 1.5)

    @given(
        a=st.floats(-100, 100),
        width=st.floats(1e-2, 100),
        frac=st.floats(0, 1),
        ratio=st.floats(-1e3, 1e3),
    )
    @settings(max_examples=200, deadline=None)
    def test_translation_invariance_and_symmetry(self, a, width, frac, ratio):
        # shift scaled to the interval width keeps the subtraction well
        # conditioned, where the 1e-12 double-precision bound is meaningful
        torch.manual_seed(42)
        w_a, w_b = torch.randn(2, 6, dtype=torch.float64)
        b = a + width
        x = a + frac * width
        x = min(max(x, a), b)
        shift = ratio * width
        base = interpolate_latent(w_a, w_b, a, b, x)
        shifted = interpolate_latent(w_a, w_b, a + shift, b + shift, x + shift)
        scale = base.abs().max().clamp(min=1.0)
        assert float(((base - shifted).abs() / scale).max()) <= 1e-12
        # swapping endpoints with the reflected coordinate gives the same code
        mirrored = interpolate_latent(w_b, w_a, a, b, a + (b - x))
        assert torch.allclose(base, mirrored, atol=1e-12)

    def test_triple_continuity_at_center(self):
        # the piecewise code over [-d, d] has equal one-sided limits at 0
        d = 2.0
        w_l, w_c, w_r = torch.randn(3, 8, dtype=torch.float64)
        from_left = interpolate_latent(w_l, w_c, -d, 0.0, 0.0)
        from_right = interpolate_latent(w_c, w_r, 0.0, d, 0.0)
        assert torch.allclose(from_left, w_c, atol=1e-15)
        assert torch.allclose(from_right, w_c, atol=1e-15)


class TestAnchorTriple:
    def test_sample_determinism_and_d(self):
        mapping = MappingNetwork(16, 16, 2)
        t1 = sample_anchor_triple(mapping, 1.0, torch.Generator().manual_seed(5))
        t2 = sample_anchor_triple(mapping, 1.0, torch.Generator().manual_seed(5))
        assert torch.equal(t1.w_l, t2.w_l)
        assert torch.equal(t1.w_c, t2.w_c)
        assert torch.equal(t1.w_r, t2.w_r)
        assert t1.d == 1.0

    def test_different_seeds_differ(self):
        mapping = MappingNetwork(16, 16, 2)
        t1 = sample_anchor_triple(mapping, 1.0, torch.Generator().manual_seed(5))
        t2 = sample_anchor_triple(mapping, 1.0, torch.Generator().manual_seed(6))
        assert not torch.equal(t1.w_c, t2.w_c)

    def test_validation(self):
        w = torch.randn(8)
        with pytest.raises(ConfigError):
            AnchorTriple(w, torch.randn(4), w, 1.0)
        with pytest.raises(ConfigError):
            AnchorTriple(w, w, w, 0.0)
        with pytest.raises(ConfigError):
            AnchorTriple(w, w * float("nan"), w, 1.0)


class TestStyleMix:
    def _setup(self):
        mapping = MappingNetwork(16, 16, 2)
        rng = torch.Generator().manual_seed(0)
        triple = sample_anchor_triple(mapping, 1.0, rng)
        return mapping, rng, triple

    def test_probability_zero_is_identity(self):
        mapping, rng, triple = self._setup()
        assert style_mix(triple, 0.0, rng, mapping, 5) is triple

    def test_probability_one_assigns_splits(self):
        mapping, rng, triple = self._setup()
        mixed = style_mix(triple, 1.0, rng, mapping, 5)
        assert all(t.ndim == 2 and t.shape == (5, 16) for t in mixed.anchors())
        assert mixed.is_mixed
        # a suffix of layers changed, a prefix kept the original code
        for orig, layered in zip(triple.anchors(), mixed.anchors()):
            assert torch.equal(layered[0], orig)
            assert not torch.equal(layered[-1], orig)

    def test_mix_frequency(self):
        # Monte-Carlo frequency at probability 0.9 over 10000 trials
        mapping, rng, triple = self._setup()
        n = 10000
        mixed_count = 0
        for _ in range(n):
            mixed = style_mix(triple, 0.9, rng, mapping, 4)
            mixed_count += sum(t.ndim == 2 for t in mixed.anchors())
        freq = mixed_count / (3 * n)
        assert abs(freq - 0.9) <= 0.01

    def test_codes_for_layer(self):
        mapping, rng, triple = self._setup()
        mixed = style_mix(triple, 1.0, rng, mapping, 3)
        for layer in range(3):
            wl, wc, wr = mixed.codes_for_layer(layer)
            assert wl.shape == (16,)
            assert torch.equal(wl, mixed.w_l[layer])


class TestAnchorSerialization:
    def test_roundtrip(self, tmp_path):
        rng = torch.Generator().manual_seed(3)
        anchors = [torch.randn(12, generator=rng) for _ in range(5)]
        seq = AnchorSequence(anchors=anchors, d=2.0, origin=-4.0)
        save_anchors(tmp_path / "anchors", seq)
        loaded = load_anchors(tmp_path / "anchors")
        assert loaded.d == 2.0 and loaded.origin == -4.0
        assert len(loaded) == 5
        for a, b in zip(seq.anchors, loaded.anchors):
            assert torch.equal(a, b)

    def test_triple_at(self):
        anchors = [torch.randn(4) for _ in range(4)]
        seq = AnchorSequence(anchors=anchors, d=1.0)
        triple = seq.triple_at(1)
        assert torch.equal(triple.w_l, anchors[1])
        assert torch.equal(triple.w_r, anchors[3])
        with pytest.raises(DomainError):
            seq.triple_at(2)
