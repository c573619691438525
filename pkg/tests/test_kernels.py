"""Kernel correctness: brute-force oracles and backend parity."""

import numpy as np
import pytest

from circtz._kernels import BACKEND, hann_weighted_mean, hann_window, morlet_coefficients
from circtz._kernels import _ref


def brute_hann_mean(x, window):
    """Naive renormalized windowed average, one position at a time."""
    half = window // 2
    w = [0.5 * (1 + np.cos(2 * np.pi * k / window)) for k in range(-half, half + 1)]
    out = np.empty(len(x))
    for t in range(len(x)):
        num = den = 0.0
        for k in range(-half, half + 1):
            if 0 <= t + k < len(x):
                num += w[k + half] * x[t + k]
                den += w[k + half]
        out[t] = num / den
    return out


def brute_morlet(x, scale, fb=1.5, fc=1.0):
    half = int(round(4 * scale))
    out = []
    for n in range(half, len(x) - half):
        acc = 0j
        for k in range(-half, half + 1):
            u = k / scale
            psi = (np.pi * fb) ** -0.5 * np.exp(2j * np.pi * fc * u) * np.exp(-u * u / fb)
            acc += x[n + k] * np.conj(psi)
        out.append(acc)
    return np.array(out)


def test_hann_window_values():
    w = hann_window(384)
    half = 192
    assert w[half] == 1.0
    assert w[0] == pytest.approx(0.0, abs=1e-15)
    assert w[-1] == pytest.approx(0.0, abs=1e-15)
    assert w[half + 96] == pytest.approx(0.5, abs=1e-12)


def test_hann_window_symmetric():
    w = hann_window(48)
    assert np.allclose(w, w[::-1], atol=0, rtol=0)


def test_hann_mean_matches_brute_force():
    rng = np.random.default_rng(3)
    x = rng.normal(size=300)
    got = hann_weighted_mean(x, 48)
    want = brute_hann_mean(x, 48)
    assert np.max(np.abs(got - want)) < 1e-11


def test_hann_mean_constant_input():
    out = hann_weighted_mean(np.full(500, 3.25), 384)
    assert np.max(np.abs(out - 3.25)) < 1e-12


def test_hann_mean_reproduces_linear_ramp_interior():
    t = np.arange(1200, dtype=float)
    ramp = 0.05 * t + 2.0
    mu = hann_weighted_mean(ramp, 384)
    interior = slice(192, 1200 - 192)
    rel = np.abs(mu[interior] - ramp[interior]) / np.abs(ramp[interior])
    assert rel.max() < 1e-6


def test_morlet_wavelet_shape():
    psi = _ref.morlet_wavelet(24.0)
    assert len(psi) == 2 * 96 + 1
    assert psi[96] == pytest.approx((np.pi * 1.5) ** -0.5)
    # Hermitian symmetry of the analytic wavelet
    assert np.allclose(psi[::-1], np.conj(psi), atol=1e-15)


def test_morlet_coefficients_match_brute_force():
    rng = np.random.default_rng(9)
    x = rng.normal(size=80)
    got = morlet_coefficients(x, 6.0)
    want = brute_morlet(x, 6.0)
    assert got.shape == want.shape
    assert np.max(np.abs(got - want)) < 1e-10


def test_morlet_rejects_short_series():
    with pytest.raises(ValueError, match="shorter than the wavelet support"):
        morlet_coefficients(np.ones(100), 24.0)


@pytest.mark.skipif(BACKEND != "cython", reason="compiled backend unavailable")
def test_backends_agree():
    from circtz._kernels import _core

    rng = np.random.default_rng(17)
    x = rng.normal(size=4000)
    a = _core.hann_weighted_mean(x, 384)
    b = _ref.hann_weighted_mean(x, 384)
    assert np.max(np.abs(a - b)) < 1e-12
    ca = _core.morlet_coefficients(x, 24.0)
    cb = _ref.morlet_coefficients(x, 24.0)
    assert np.max(np.abs(ca - cb)) < 1e-10
