"""Numeric kernels for the hot inner loops (Hann smoothing, Morlet transform).

Two interchangeable backends exist: a compiled Cython extension (``_core``)
and a pure-Python/numpy fallback (``_ref``). The compiled backend is used
when it imported successfully; set the environment variable
``CIRCTZ_PURE_PYTHON=1`` to force the fallback. ``BACKEND`` names the one
in use.
"""

from __future__ import annotations

import os

from ._ref import hann_window, morlet_wavelet

if os.environ.get("CIRCTZ_PURE_PYTHON", "").strip() in ("", "0"):
    try:
        from ._core import hann_weighted_mean, morlet_coefficients

        BACKEND = "cython"
    except ImportError:
        from ._ref import hann_weighted_mean, morlet_coefficients

        BACKEND = "python"
else:
    from ._ref import hann_weighted_mean, morlet_coefficients

    BACKEND = "python"

__all__ = [
    "BACKEND",
    "hann_weighted_mean",
    "hann_window",
    "morlet_coefficients",
    "morlet_wavelet",
]
