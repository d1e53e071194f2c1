# -*- coding: utf-8 -*-
from fractions import Fraction

import numpy as np
import pytest
import torch

from attention import AttentionBlock
from errors import ConfigError, NumericsError, ShapeError
from ftb import (
    FourierTransformBlock, HighPassFilterSpec, Spectrum, build_highpass, filter_and_invert, forward_dft,
)


def naive_dft(x):
    """O(N²) 이중합 DFT"""
    h, w = x.shape
    out = np.zeros((h, w), dtype=np.complex128)
    for u in range(h):
        for v in range(w):
            total = 0j
            for m in range(h):
                for n in range(w):
                    total += x[m, n] * np.exp(-2j * np.pi * (u * m / h + v * n / w))
            out[u, v] = total
    return out


def signed(index, size):
    return index if index <= size // 2 else index - size


def naive_highpass(h, w, cutoff):
    """bin 마다 분수로 반지름을 계산한 기준 마스크"""
    limit = Fraction(cutoff) ** 2
    mask = np.ones((h, w))
    for u in range(h):
        for v in range(w):
            rho_sq = 2 * (Fraction(signed(u, h), h) ** 2 + Fraction(signed(v, w), w) ** 2)
            if rho_sq <= limit:
                mask[u, v] = 0.0
    mask[0, 0] = 0.0
    return mask


def circular_convolution(x, kernel):
    h, w = x.shape
    out = np.zeros((h, w))
    for m in range(h):
        for n in range(w):
            out[m, n] = sum(
                kernel[p, q] * x[(m - p) % h, (n - q) % w] for p in range(h) for q in range(w)
            )
    return out


class TestForwardDft:
    @pytest.mark.parametrize("size", [(4, 4), (8, 8)])
    def test_matches_naive_dft(self, size):
        x = np.random.default_rng(3).standard_normal(size)
        spectrum = forward_dft(torch.from_numpy(x)[None])
        np.testing.assert_allclose(spectrum.values[0].numpy(), naive_dft(x), atol=1e-6)

    def test_constant_channel(self):
        x = torch.full((1, 4, 6), 2.5, dtype=torch.float64)
        values = forward_dft(x).values[0]
        assert float(values[0, 0].real) == pytest.approx(2.5 * 24)
        rest = values.clone()
        rest[0, 0] = 0
        assert rest.abs().max() < 1e-9

    def test_unit_impulse(self):
        x = torch.zeros(1, 8, 8, dtype=torch.float64)
        x[0, 0, 0] = 1.0
        values = forward_dft(x).values
        torch.testing.assert_close(values, torch.ones_like(values))

    def test_round_trip(self):
        x = torch.randn(3, 8, 8, dtype=torch.float64)
        spectrum = forward_dft(x)
        restored = filter_and_invert(spectrum, torch.ones(8, 8, dtype=torch.float64))
        assert (restored - x).abs().max() <= 1e-5

    def test_parseval(self):
        for trial in range(100):
            x = torch.randn(2, 8, 6, dtype=torch.float64)
            spectrum = forward_dft(x).values
            energy = (x ** 2).sum()
            spectral = (spectrum.abs() ** 2).sum() / (8 * 6)
            assert abs(float(energy - spectral)) <= 1e-5 * float(energy), trial

    def test_non_finite_input(self):
        x = torch.zeros(1, 4, 4)
        x[0, 1, 1] = float("nan")
        with pytest.raises(NumericsError):
            forward_dft(x)


class TestHighPass:
    def test_zero_cutoff_removes_only_dc(self):
        mask = build_highpass(HighPassFilterSpec(cutoff=0.0, shape=(8, 8)))
        expected = torch.ones(8, 8, dtype=torch.float64)
        expected[0, 0] = 0
        torch.testing.assert_close(mask, expected)

    def test_full_cutoff_removes_everything(self):
        mask = build_highpass(HighPassFilterSpec(cutoff=1.0, shape=(8, 8)))
        assert mask.sum() == 0

    @pytest.mark.parametrize("size,cutoff", [((8, 8), 0.5), ((8, 8), 0.25), ((6, 10), 0.3), ((7, 5), 0.6)])
    def test_matches_per_bin_oracle(self, size, cutoff):
        mask = build_highpass(HighPassFilterSpec(cutoff=cutoff, shape=size))
        np.testing.assert_array_equal(mask.numpy(), naive_highpass(*size, cutoff))

    def test_symmetric_under_negation(self):
        mask = build_highpass(HighPassFilterSpec(cutoff=0.3, shape=(8, 6))).numpy()
        for u in range(8):
            for v in range(6):
                assert mask[u, v] == mask[-u % 8, -v % 6]

    @pytest.mark.parametrize("cutoff", [-0.1, 1.5])
    def test_cutoff_out_of_range(self, cutoff):
        with pytest.raises(ConfigError):
            HighPassFilterSpec(cutoff=cutoff)

    def test_unknown_mode(self):
        with pytest.raises(ConfigError):
            HighPassFilterSpec(mode="butterworth")


class TestFilterAndInvert:
    def test_constant_feature_is_removed(self):
        for cutoff in (0.0, 0.1, 0.5):
            x = torch.full((2, 8, 8), 3.0, dtype=torch.float64)
            mask = build_highpass(HighPassFilterSpec(cutoff=cutoff, shape=(8, 8)))
            out = filter_and_invert(forward_dft(x), mask)
            assert out.abs().max() <= 1e-6

    def test_convolution_oracle(self):
        x = np.random.default_rng(5).standard_normal((8, 8))
        mask = build_highpass(HighPassFilterSpec(cutoff=0.25, shape=(8, 8))).numpy()
        kernel = np.real(np.conj(naive_dft(np.conj(mask)))) / 64.0
        out = filter_and_invert(forward_dft(torch.from_numpy(x)[None]), torch.from_numpy(mask))
        np.testing.assert_allclose(out[0].numpy(), circular_convolution(x, kernel), atol=1e-5)

    def test_idempotent(self):
        x = torch.randn(4, 8, 8, dtype=torch.float64)
        mask = build_highpass(HighPassFilterSpec(cutoff=0.3, shape=(8, 8)))
        once = filter_and_invert(forward_dft(x), mask)
        twice = filter_and_invert(forward_dft(once), mask)
        assert (once - twice).abs().max() <= 1e-5

    def test_linear(self):
        block = FourierTransformBlock(cutoff=0.2)
        x = torch.randn(1, 3, 8, 8, dtype=torch.float64)
        y = torch.randn(1, 3, 8, 8, dtype=torch.float64)
        lhs = block(2.0 * x - 0.5 * y)
        rhs = 2.0 * block(x) - 0.5 * block(y)
        assert (lhs - rhs).abs().max() <= 1e-5

    def test_zero_cutoff_removes_channel_means(self):
        out = FourierTransformBlock(cutoff=0.0)(torch.randn(2, 5, 8, 8, dtype=torch.float64) + 4.0)
        assert out.mean(dim=(-2, -1)).abs().max() <= 1e-6

    def test_mask_shape_mismatch(self):
        spectrum = forward_dft(torch.randn(1, 8, 8))
        with pytest.raises(ShapeError):
            filter_and_invert(spectrum, torch.ones(4, 4))

    def test_asymmetric_mask_leaves_imaginary_residue(self):
        spectrum = forward_dft(torch.randn(1, 8, 8, dtype=torch.float64))
        mask = torch.zeros(8, 8, dtype=torch.float64)
        mask[0, 1] = 1.0
        with pytest.raises(NumericsError):
            filter_and_invert(spectrum, mask)

    def test_spectrum_shape(self):
        assert Spectrum(values=torch.zeros(2, 3, 4)).shape == (2, 3, 4)


class TestFourierTransformBlock:
    def test_has_no_parameters(self):
        assert sum(p.numel() for p in FourierTransformBlock().parameters()) == 0

    def test_masks_are_cached_per_size(self):
        block = FourierTransformBlock(cutoff=0.1)
        block(torch.randn(1, 2, 8, 8))
        block(torch.randn(1, 2, 8, 8))
        block(torch.randn(1, 2, 4, 4))
        assert len(block._masks) == 2

    def test_gradcheck(self):
        block = FourierTransformBlock(cutoff=0.25)
        x = torch.randn(1, 2, 8, 8, dtype=torch.float64, requires_grad=True)
        assert torch.autograd.gradcheck(block, (x,), eps=1e-6, atol=1e-6, rtol=1e-3)

    def test_gradcheck_attention_sandwich(self):
        ab = AttentionBlock(pool_factor=2)
        ftb = FourierTransformBlock(cutoff=0.25)
        x = (0.5 * torch.randn(1, 2, 8, 8, dtype=torch.float64)).requires_grad_(True)
        assert torch.autograd.gradcheck(lambda t: ab(ftb(ab(t))), (x,), eps=1e-6, atol=1e-5, rtol=1e-3)
