"""Numpy reference implementations of the numeric kernels.

These are the fallback backend and the ground truth the compiled extension
is tested against.
"""

from __future__ import annotations

import numpy as np


def hann_window(window_hours: int) -> np.ndarray:
    """Hann taper w_k = (1 + cos(2*pi*k/W)) / 2 for k in [-W/2, W/2]."""
    if window_hours % 2 != 0 or window_hours < 24:
        raise ValueError("window_hours must be even and >= 24")
    k = np.arange(-(window_hours // 2), window_hours // 2 + 1)
    return 0.5 * (1.0 + np.cos(2.0 * np.pi * k / window_hours))


def hann_weighted_mean(x: np.ndarray, window_hours: int) -> np.ndarray:
    """Centered Hann-weighted moving average of ``x``.

    Near the edges the weights are renormalized over the in-range lags, so a
    constant input is reproduced exactly everywhere (no zero-padding bias).
    """
    x = np.asarray(x, dtype=np.float64)
    w = hann_window(window_hours)
    num = np.convolve(x, w, mode="same")
    den = np.convolve(np.ones(len(x)), w, mode="same")
    return num / den


def morlet_wavelet(
    scale_hours: float,
    bandwidth: float = 1.5,
    center_frequency: float = 1.0,
    radius_scales: float = 4.0,
) -> np.ndarray:
    """Complex Morlet wavelet sampled at unit (hourly) steps.

    Returns psi(k / s) for integer lags k in [-L, L] with L = round(4 s):
    a Gaussian envelope of bandwidth ``bandwidth`` modulating a complex
    carrier at ``center_frequency`` cycles per scale unit. With s = 24 and
    hourly sampling the carrier completes one cycle per day.
    """
    if scale_hours <= 0:
        raise ValueError("scale_hours must be positive")
    half = int(round(radius_scales * scale_hours))
    u = np.arange(-half, half + 1) / scale_hours
    envelope = np.exp(-(u * u) / bandwidth)
    carrier = np.exp(2j * np.pi * center_frequency * u)
    return (np.pi * bandwidth) ** -0.5 * carrier * envelope


def morlet_coefficients(
    x: np.ndarray,
    scale_hours: float,
    bandwidth: float = 1.5,
    center_frequency: float = 1.0,
    radius_scales: float = 4.0,
) -> np.ndarray:
    """Morlet coefficients W_n = sum_k x[n+k] * conj(psi(k/s)).

    Only positions with the full wavelet support in range are returned:
    element ``m`` of the result is W_{m+L} with L = round(4 s), so the output
    has length ``len(x) - 2 L``.
    """
    x = np.asarray(x, dtype=np.float64)
    psi = morlet_wavelet(scale_hours, bandwidth, center_frequency, radius_scales)
    if len(x) < len(psi):
        raise ValueError(
            f"series of length {len(x)} is shorter than the wavelet support {len(psi)}"
        )
    # np.correlate conjugates its second argument: out[m] = sum_j x[m+j] conj(psi[j])
    return np.correlate(x, psi, mode="valid")
