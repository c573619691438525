"""Per-series preprocessing: sparsity gate, log transform, Hann detrending.

A series moves through three stages -- ``raw`` counts, ``logged`` values, and
the ``detrended`` signal that the feature extractors consume.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from ._kernels import hann_weighted_mean

STAGE_RAW = "raw"
STAGE_LOGGED = "logged"
STAGE_DETRENDED = "detrended"
_STAGES = (STAGE_RAW, STAGE_LOGGED, STAGE_DETRENDED)


@dataclass(frozen=True)
class ActivitySeries:
    """Uniformly spaced hourly values for one community.

    ``start_hour`` is the epoch hour (floor(unix_seconds / 3600)) of the first
    element; element ``i`` covers epoch hour ``start_hour + i``.
    """

    start_hour: int
    counts: np.ndarray
    stage: str = STAGE_RAW
    diagnostics: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        values = np.asarray(self.counts, dtype=np.float64)
        if values.ndim != 1 or len(values) < 1:
            raise ValueError("counts must be a non-empty 1-D vector")
        if self.stage not in _STAGES:
            raise ValueError(f"unknown stage {self.stage!r}")
        if self.stage == STAGE_RAW and np.any(values < 0):
            raise ValueError("raw counts must be non-negative")
        object.__setattr__(self, "counts", values)

    def __len__(self) -> int:
        return len(self.counts)

    @property
    def hour_of_day(self) -> np.ndarray:
        """UTC hour-of-day (0-23) of every element."""
        return (self.start_hour + np.arange(len(self.counts))) % 24

    def total_events(self) -> float:
        return float(self.counts.sum())


def rotate(series: ActivitySeries, delta_hours: int) -> ActivitySeries:
    """Shift a series ``delta_hours`` later in time.

    The values are untouched; only their clock labels move, so every
    hour-of-day feature rotates by exactly ``delta_hours``.
    """
    return dataclasses.replace(series, start_hour=series.start_hour + int(delta_hours))


@dataclass(frozen=True)
class DetrendConfig:
    """Knobs for the preprocessing stage.

    ``window_hours`` is the full width of the centered Hann window;
    ``min_nonzero`` is the sparsity gate (series with fewer strictly positive
    hours are excluded).
    """

    window_hours: int = 384
    min_nonzero: int = 50

    def __post_init__(self) -> None:
        if self.window_hours % 2 != 0 or self.window_hours < 24:
            raise ValueError("window_hours must be even and >= 24")
        if self.min_nonzero < 1:
            raise ValueError("min_nonzero must be >= 1")


def sparsity_filter(series: ActivitySeries, min_nonzero: int = 50) -> bool:
    """True when the series has at least ``min_nonzero`` strictly positive hours."""
    if series.stage != STAGE_RAW:
        raise ValueError("sparsity_filter expects a raw series")
    return int(np.count_nonzero(series.counts > 0)) >= min_nonzero


def log_transform(series: ActivitySeries) -> ActivitySeries:
    """Replace each count c by ln(1 + c); compresses spikes, keeps zeros at 0."""
    if series.stage != STAGE_RAW:
        raise ValueError("log_transform expects a raw series")
    return dataclasses.replace(
        series, counts=np.log1p(series.counts), stage=STAGE_LOGGED
    )


def hann_detrend(
    series: ActivitySeries, config: DetrendConfig = DetrendConfig()
) -> ActivitySeries:
    """Subtract the local trend estimated by a centered Hann-weighted average.

    Series shorter than the window fall back to global-mean subtraction and
    carry a ``"detrend_mean_fallback"`` diagnostic.
    """
    if series.stage != STAGE_LOGGED:
        raise ValueError("hann_detrend expects a logged series")
    x = series.counts
    diagnostics = series.diagnostics
    if len(x) < config.window_hours:
        trend = np.full(len(x), x.mean())
        diagnostics = diagnostics + ("detrend_mean_fallback",)
    else:
        trend = hann_weighted_mean(x, config.window_hours)
    return dataclasses.replace(
        series, counts=x - trend, stage=STAGE_DETRENDED, diagnostics=diagnostics
    )


def preprocess(
    series: ActivitySeries, config: DetrendConfig = DetrendConfig()
) -> ActivitySeries | None:
    """Run the full pipeline; returns None when the sparsity gate rejects."""
    if not sparsity_filter(series, config.min_nonzero):
        return None
    return hann_detrend(log_transform(series), config)
