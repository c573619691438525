import numpy as np
import pytest

from circtz.features import (
    CommunityFeatures,
    HourlyProfile,
    aggregate_rhythm,
    cwt_features,
    cyclic_spline_basis,
    extract_scalars,
    featurize,
    fit_cyclic_gam,
    hourly_profile,
    read_features_csv,
    write_features_csv,
)
from circtz.preprocess import ActivitySeries, log_transform, hann_detrend, preprocess, rotate
from circtz.synth import SynthSpec, generate
from circtz.util import DataError, wrap_angle


def detrended(counts, start=0):
    return ActivitySeries(start_hour=start, counts=np.asarray(counts, float), stage="detrended")


class TestHourlyProfile:
    def test_single_active_hour(self):
        counts = np.zeros(48)
        counts[7] = 3.0
        counts[31] = 2.0  # same hour of day, next day
        p = hourly_profile(detrended(counts))
        assert p.p[7] == 1.0
        assert p.p.sum() == pytest.approx(1.0)

    def test_all_equal_series_uniform_and_flagged(self):
        p = hourly_profile(detrended(np.full(96, 2.5)))
        assert p.degenerate
        assert np.allclose(p.p, 1 / 24)

    def test_shift_to_nonnegative(self):
        counts = np.full(48, -1.0)
        counts[5] = 1.0
        counts[29] = 1.0
        p = hourly_profile(detrended(counts))
        assert p.p[5] == 1.0

    def test_synthetic_trough_lands_at_expected_utc_hour(self):
        # a UTC-5 community with a 4 a.m. local lull is quietest at 9 UTC
        series, _ = generate(SynthSpec(offset_minutes=-300, n_days=120, seed=4))
        out = preprocess(series)
        p = hourly_profile(out)
        assert int(np.argmin(p.p)) == 9

    def test_rejects_raw_stage(self):
        with pytest.raises(ValueError):
            hourly_profile(ActivitySeries(0, np.ones(24)))


class TestCyclicGam:
    def test_recovers_exp_cosine_shape(self):
        h = np.arange(24)
        lam_true = 40 * np.exp(1.2 * np.cos(2 * np.pi * (h - 16) / 24))
        fit = fit_cyclic_gam(lam_true)
        rel = np.abs(fit.lam - lam_true) / lam_true
        assert rel.max() < 0.02

    def test_constant_counts_give_intercept_only_fit(self):
        fit = fit_cyclic_gam(np.full(24, 9.0))
        assert np.allclose(fit.lam, 9.0, rtol=1e-10)
        assert np.max(np.abs(fit.spline_coeffs[1:])) < 1e-10

    def test_curve_is_periodic_across_midnight(self):
        rng = np.random.default_rng(8)
        y = rng.poisson(30 * np.exp(np.cos(2 * np.pi * (np.arange(24) - 5) / 24)))
        fit = fit_cyclic_gam(y.astype(float))
        max_slope = np.max(np.abs(np.diff(fit.lam_grid))) / 0.1
        assert abs(fit.lam_grid[-1] - fit.lam_grid[0]) <= 0.1 * max_slope + 1e-9

    def test_all_zero_counts_error(self):
        with pytest.raises(DataError):
            fit_cyclic_gam(np.zeros(24))

    def test_scale_moves_only_intercept(self):
        rng = np.random.default_rng(3)
        y = rng.poisson(20, 24).astype(float) + 1
        a = fit_cyclic_gam(y)
        b = fit_cyclic_gam(y * 37.0)
        assert b.spline_coeffs[0] - a.spline_coeffs[0] == pytest.approx(
            np.log(37.0), abs=1e-7
        )
        assert np.max(np.abs(b.spline_coeffs[1:] - a.spline_coeffs[1:])) < 1e-7
        assert np.argmin(b.lam_grid) == np.argmin(a.lam_grid)

    def test_nonconvergence_flagged_not_raised(self):
        y = np.zeros(24)
        y[10:14] = 50.0
        fit = fit_cyclic_gam(y)
        assert not fit.converged
        assert np.all(fit.lam > 0)

    def test_basis_partition_of_unity(self):
        h = np.linspace(0, 24, 97)[:-1]
        basis = cyclic_spline_basis(h, 24)
        assert np.allclose(basis.sum(axis=1), 1.0, atol=1e-12)


class TestCwtFeatures:
    def test_pure_daily_cosine_is_fully_coherent(self):
        t = np.arange(1200, dtype=float)
        x = np.cos(2 * np.pi * t / 24 + 0.3)
        feats = cwt_features(detrended(x))
        assert np.all(feats.coherence > 1 - 1e-6)
        assert np.nanmax(feats.stability) < 1e-3
        # phase advances by one cycle per day: hourly mean phases are distinct
        assert len(np.unique(np.round(feats.mean_phase, 3))) > 20

    def test_white_noise_has_low_coherence(self):
        # independent phases across ~400 days keep the resultant near zero
        rng = np.random.default_rng(77)
        x = rng.normal(size=10_000)
        feats = cwt_features(detrended(x))
        assert feats.coherence.mean() < 0.2

    def test_insufficient_span_raises(self):
        with pytest.raises(DataError, match="insufficient span"):
            cwt_features(detrended(np.ones(150)))

    def test_matches_naive_aggregation(self):
        # independent path: full coefficient loop and per-hour dict grouping
        series, _ = generate(SynthSpec(n_days=40, seed=11, phase_jitter_rad=0.4))
        out = preprocess(series)
        feats = cwt_features(out)
        from circtz._kernels import morlet_coefficients

        coeff = morlet_coefficients(out.counts, 24.0)
        half = 96
        groups: dict[int, list[complex]] = {}
        for m, c in enumerate(coeff):
            h = (out.start_hour + half + m) % 24
            groups.setdefault(h, []).append(c)
        for h in range(24):
            cs = np.array(groups[h])
            assert feats.power[h] == pytest.approx(np.mean(np.abs(cs) ** 2), rel=1e-12)
            resultant = np.mean(np.exp(1j * np.angle(cs)))
            assert feats.coherence[h] == pytest.approx(abs(resultant), rel=1e-12)
            diffs = np.abs(wrap_angle(np.diff(np.angle(cs))))
            assert feats.stability[h] == pytest.approx(np.mean(diffs), rel=1e-12)

    def test_jitter_degrades_stability(self):
        clean, _ = generate(SynthSpec(n_days=90, seed=5))
        noisy, _ = generate(SynthSpec(n_days=90, seed=5, phase_jitter_rad=0.5))
        f_clean = cwt_features(preprocess(clean))
        f_noisy = cwt_features(preprocess(noisy))
        assert np.nanmean(f_noisy.stability) > np.nanmean(f_clean.stability)

    def test_band_option_averages_power_over_scales(self):
        series, _ = generate(SynthSpec(n_days=60, seed=9))
        out = preprocess(series)
        single = cwt_features(out)
        banded = cwt_features(out, band=(20, 28))
        assert not np.allclose(single.power, banded.power)
        assert banded.scale_hours == single.scale_hours
        # phase quantities stay at the center scale; the wider exclusion zone
        # drops some edge coefficients but leaves the aggregates close
        assert np.allclose(single.coherence, banded.coherence, atol=0.05)


class TestAggregateRhythm:
    def test_identical_phases_give_unit_coherence(self):
        hours = np.tile(np.arange(24), 10)
        phase = np.full(240, 1.234)
        power = np.ones(240)
        _, _, coherence, stability = aggregate_rhythm(hours, power, phase)
        assert np.all(coherence == 1.0)
        assert np.all(stability == 0.0)

    def test_antipodal_phases_cancel(self):
        hours = np.tile(np.arange(24), 2)
        phase = np.concatenate([np.full(24, 0.5), np.full(24, 0.5 + np.pi)])
        _, _, coherence, _ = aggregate_rhythm(hours, phase * 0 + phase, phase)
        assert np.allclose(coherence, 0.0, atol=1e-12)

    def test_single_visit_stability_nan(self):
        hours = np.arange(24)
        _, _, _, stability = aggregate_rhythm(hours, np.ones(24), np.zeros(24))
        assert np.all(np.isnan(stability))


class TestExtractScalars:
    def _features(self, p_vec):
        profile = HourlyProfile(p=np.asarray(p_vec, float))
        smoothed = fit_cyclic_gam(np.asarray(p_vec, float) * 100 + 1)
        hours = np.tile(np.arange(24), 3)
        rhythm_stab = np.tile(np.linspace(1, 2, 24), 3)
        power, mean_phase, coherence, stability = aggregate_rhythm(
            hours, np.ones(72), rhythm_stab
        )
        from circtz.features import RhythmFeatures

        rhythm = RhythmFeatures(
            power=power,
            mean_phase=mean_phase,
            coherence=coherence,
            stability=stability,
            scale_hours=24.0,
        )
        return profile, smoothed, rhythm

    def test_unique_minimum(self):
        p = np.full(24, 1 / 24)
        p[9] -= 0.01
        p[3] += 0.01 * 23 / 24  # keep normalized-ish
        p = p / p.sum()
        profile, smoothed, rhythm = self._features(p)
        scalars = extract_scalars(profile, smoothed, rhythm)
        assert scalars.h_min == 9

    def test_tie_break_smallest_index(self):
        p = np.full(24, 1.0)
        p[3] = p[15] = 0.5
        p = p / p.sum()
        profile, smoothed, rhythm = self._features(p)
        assert extract_scalars(profile, smoothed, rhythm).h_min == 3

    def test_grid_resolution(self):
        p = np.full(24, 1.0)
        p[9] = 0.2
        p = p / p.sum()
        profile, smoothed, rhythm = self._features(p)
        scalars = extract_scalars(profile, smoothed, rhythm)
        assert scalars.h_smooth_min == pytest.approx(round(scalars.h_smooth_min, 1))
        assert 8.0 <= scalars.h_smooth_min <= 10.0


class TestRotationCovariance:
    def test_all_features_rotate_with_the_series(self):
        series, _ = generate(SynthSpec(n_days=90, seed=21, phase_jitter_rad=0.2))
        base = featurize(series)
        for delta in (1, 5, 11, 17, 23):
            rotated = featurize(rotate(series, delta))
            assert np.array_equal(np.roll(base.profile.p, delta), rotated.profile.p)
            assert np.array_equal(np.roll(base.rhythm.power, delta), rotated.rhythm.power)
            assert np.array_equal(
                np.roll(base.rhythm.coherence, delta), rotated.rhythm.coherence
            )
            stab_a = np.roll(base.rhythm.stability, delta)
            stab_b = rotated.rhythm.stability
            assert np.array_equal(
                np.isnan(stab_a), np.isnan(stab_b)
            ) and np.array_equal(stab_a[~np.isnan(stab_a)], stab_b[~np.isnan(stab_b)])
            lam_rel = np.max(
                np.abs(np.roll(base.smoothed.lam, delta) - rotated.smoothed.lam)
                / rotated.smoothed.lam
            )
            assert lam_rel < 1e-9
            assert rotated.scalars.h_min == (base.scalars.h_min + delta) % 24
            assert rotated.scalars.h_stable_phase == (
                base.scalars.h_stable_phase + delta
            ) % 24
            smooth_shift = (rotated.scalars.h_smooth_min - base.scalars.h_smooth_min) % 24
            assert smooth_shift == pytest.approx(delta, abs=0.1 + 1e-9)


class TestFeatureCsv:
    def test_round_trip(self, tmp_path, tiny_corpus, tiny_features):
        items = [
            (cid, tiny_corpus.labels[cid].offset_minutes, f)
            for cid, f in tiny_features.items()
        ]
        path = tmp_path / "features.csv"
        write_features_csv(str(path), items)
        loaded = read_features_csv(str(path))
        assert [cid for cid, _, _ in loaded] == sorted(tiny_features)
        for cid, offset, feats in loaded:
            orig = tiny_features[cid]
            assert offset == tiny_corpus.labels[cid].offset_minutes
            assert np.allclose(feats.profile.p, orig.profile.p, rtol=0, atol=0)
            assert np.allclose(feats.smoothed.lam, orig.smoothed.lam, rtol=0, atol=0)
            assert np.array_equal(
                np.isnan(feats.rhythm.stability), np.isnan(orig.rhythm.stability)
            )
            assert feats.scalars == orig.scalars

    def test_header_checked(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(DataError, match="header"):
            read_features_csv(str(path))
