import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from circtz.preprocess import (
    ActivitySeries,
    DetrendConfig,
    hann_detrend,
    log_transform,
    preprocess,
    rotate,
    sparsity_filter,
)


def raw(counts, start=0):
    return ActivitySeries(start_hour=start, counts=np.asarray(counts, dtype=float))


class TestSparsityFilter:
    def test_49_nonzero_hours_fail(self):
        counts = np.zeros(200)
        counts[:49] = 1
        assert not sparsity_filter(raw(counts))

    def test_50_nonzero_hours_pass(self):
        counts = np.zeros(200)
        counts[:50] = 1
        assert sparsity_filter(raw(counts))

    def test_all_zero_fails(self):
        assert not sparsity_filter(raw(np.zeros(100)))

    def test_requires_raw_stage(self):
        with pytest.raises(ValueError):
            sparsity_filter(log_transform(raw([1, 2, 3])))


class TestLogTransform:
    def test_zero_maps_to_zero(self):
        out = log_transform(raw([0.0, 0.0]))
        assert out.counts[0] == 0.0
        assert out.stage == "logged"

    def test_e_minus_one_maps_to_one(self):
        out = log_transform(raw([math.e - 1.0]))
        assert out.counts[0] == pytest.approx(1.0, abs=1e-12)

    def test_spike_compression(self):
        # a 1e6 spike over a baseline of 10 shrinks from 1e5x to ~5.76x
        out = log_transform(raw([10.0, 1e6]))
        ratio = out.counts[1] / out.counts[0]
        assert ratio == pytest.approx(math.log(1 + 1e6) / math.log(11), rel=1e-12)
        assert ratio < 6

    def test_rejects_logged_stage(self):
        with pytest.raises(ValueError):
            log_transform(log_transform(raw([1.0])))


class TestHannDetrend:
    def test_constant_series_detrends_to_zero(self):
        logged = log_transform(raw(np.full(1000, 7.0)))
        out = hann_detrend(logged)
        assert out.stage == "detrended"
        assert np.max(np.abs(out.counts)) < 1e-12

    def test_sinusoid_trend_is_nearly_constant(self):
        # 2000 h of a pure daily sinusoid: the 384 h window spans 16 whole
        # periods, so the trend estimate stays close to the global mean and
        # detrending is close to mean removal
        t = np.arange(2000, dtype=float)
        x = 5.0 + np.cos(2 * np.pi * t / 24)
        series = ActivitySeries(start_hour=0, counts=x, stage="logged")
        out = hann_detrend(series)
        expected = x - x.mean()
        amplitude = 1.0
        interior = slice(192, 2000 - 192)
        dev = np.abs(out.counts - expected)
        assert dev[interior].max() < 0.01 * amplitude

    def test_shift_equivariance(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=900)
        a = hann_detrend(ActivitySeries(0, x, stage="logged"))
        b = hann_detrend(ActivitySeries(0, x + 123.456, stage="logged"))
        assert np.max(np.abs(a.counts - b.counts)) < 1e-9

    def test_short_series_falls_back_to_mean(self):
        logged = log_transform(raw(np.arange(100, dtype=float)))
        out = hann_detrend(logged)
        assert "detrend_mean_fallback" in out.diagnostics
        assert out.counts.mean() == pytest.approx(0.0, abs=1e-12)

    def test_requires_logged_stage(self):
        with pytest.raises(ValueError):
            hann_detrend(raw([1.0] * 500))

    def test_output_length_preserved(self):
        logged = log_transform(raw(np.random.default_rng(0).poisson(5, 800)))
        out = hann_detrend(logged)
        assert len(out) == 800


class TestConfigAndTypes:
    def test_window_must_be_even(self):
        with pytest.raises(ValueError):
            DetrendConfig(window_hours=383)

    def test_window_minimum(self):
        with pytest.raises(ValueError):
            DetrendConfig(window_hours=22)

    def test_min_nonzero_positive(self):
        with pytest.raises(ValueError):
            DetrendConfig(min_nonzero=0)

    def test_negative_raw_counts_rejected(self):
        with pytest.raises(ValueError):
            raw([-1.0])

    def test_empty_series_rejected(self):
        with pytest.raises(ValueError):
            raw([])

    def test_rotate_shifts_hour_labels(self):
        series = raw([1, 2, 3], start=10)
        shifted = rotate(series, 5)
        assert shifted.start_hour == 15
        assert np.array_equal(shifted.counts, series.counts)
        assert np.array_equal(shifted.hour_of_day, (series.hour_of_day + 5) % 24)


@settings(max_examples=25, deadline=None)
@given(shift=st.floats(min_value=-1e4, max_value=1e4, allow_nan=False))
def test_detrend_shift_equivariance_property(shift):
    rng = np.random.default_rng(42)
    x = rng.normal(size=500)
    a = hann_detrend(ActivitySeries(0, x, stage="logged"))
    b = hann_detrend(ActivitySeries(0, x + shift, stage="logged"))
    assert np.max(np.abs(a.counts - b.counts)) < 1e-9


def test_preprocess_pipeline_composition():
    rng = np.random.default_rng(1)
    counts = rng.poisson(6.0, 600).astype(float)
    out = preprocess(raw(counts))
    assert out is not None
    assert out.stage == "detrended"
    manual = hann_detrend(log_transform(raw(counts)))
    assert np.array_equal(out.counts, manual.counts)


def test_preprocess_rejects_sparse():
    counts = np.zeros(600)
    counts[:10] = 1
    assert preprocess(raw(counts)) is None
