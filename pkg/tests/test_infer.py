import dataclasses

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from circtz.evaluation import featurize_corpus
from circtz.features import featurize
from circtz.infer import (
    ANCHOR_METHODS,
    METHODS,
    ReferencePool,
    anchor_offset,
    kl_divergence,
    nearest_reference,
    run_method,
)
from circtz.preprocess import rotate
from circtz.synth import SynthSpec, generate, generate_corpus
from circtz.util import wrap_offset_minutes


class TestAnchorOffset:
    def test_lull_exactly_at_anchor(self):
        assert anchor_offset(4.0) == 0

    def test_us_east_pattern(self):
        assert anchor_offset(9.0) == -300

    def test_wraps_across_midnight(self):
        assert anchor_offset(20.0) == 480

    def test_antimeridian_maps_to_plus_12(self):
        assert anchor_offset(16.0) == 720

    @pytest.mark.parametrize("offset_h", range(-11, 13))
    def test_round_trip_integer_offsets(self, offset_h):
        h_obs = (4.0 - offset_h) % 24
        assert anchor_offset(h_obs) == offset_h * 60

    def test_round_trip_quarter_hour_grid(self):
        for offset_min in range(-705, 721, 15):
            h_obs = (4.0 - offset_min / 60.0) % 24
            assert anchor_offset(h_obs) == offset_min

    def test_snaps_to_quarter_hour(self):
        # a 0.1 h grid reading lands on the nearest 15 min step
        assert anchor_offset(9.3) == -315  # -5.3 h -> -318 min -> -315
        assert anchor_offset(4.1) == 0  # -6 min -> 0

    def test_configurable_lull(self):
        assert anchor_offset(3.0, h_lull=3.0) == 0

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            anchor_offset(24.0)


class TestKlDivergence:
    def test_identical_distributions_near_zero(self):
        p = np.full(24, 1 / 24)
        assert kl_divergence(p, p) == pytest.approx(0.0, abs=1e-7)
        assert kl_divergence(p, p) >= 0

    def test_analytic_two_bin_case(self):
        assert kl_divergence(np.array([1.0, 0.0]), np.array([0.5, 0.5])) == pytest.approx(
            np.log(2), abs=1e-7
        )

    def test_matches_extended_precision_oracle(self):
        rng = np.random.default_rng(123)
        for _ in range(25):
            p = rng.dirichlet(np.ones(24))
            q = rng.dirichlet(np.ones(24))
            got = kl_divergence(p, q)
            eps = 1e-9
            with mpmath.workdps(50):
                qs = [(mpmath.mpf(v) + eps) / (1 + 24 * eps) for v in q]
                want = sum(
                    mpmath.mpf(a) * mpmath.log(mpmath.mpf(a) / b)
                    for a, b in zip(p, qs)
                    if a > 0
                )
            assert got == pytest.approx(float(want), abs=1e-12)

    def test_zero_target_bins_ignored(self):
        p = np.array([0.0, 1.0, 0.0, 0.0])
        q = np.array([0.25, 0.25, 0.25, 0.25])
        assert np.isfinite(kl_divergence(p, q))

    def test_zero_reference_bins_smoothed(self):
        p = np.array([0.5, 0.5])
        q = np.array([1.0, 0.0])
        assert np.isfinite(kl_divergence(p, q))

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(min_value=0, max_value=2**31))
    def test_non_negative(self, seed):
        rng = np.random.default_rng(seed)
        p = rng.dirichlet(np.ones(24))
        q = rng.dirichlet(np.ones(24))
        assert kl_divergence(p, q) >= -1e-12


@pytest.fixture(scope="module")
def rotation_pool():
    """One member of every integer-hour offset class, exact rotations."""
    corpus = generate_corpus(
        [h * 60 for h in range(-11, 13)],
        2,
        template=SynthSpec(n_days=90, mean_daily_events=300.0, seed=7),
        rotate_families=True,
        seed=99,
    )
    features = featurize_corpus(corpus.series)
    pool_ids = [cid for cid in features if cid.endswith("_00")]
    pool = ReferencePool.from_features(
        {cid: (corpus.labels[cid].offset_minutes, features[cid]) for cid in pool_ids}
    )
    targets = {
        cid: (corpus.labels[cid].offset_minutes, features[cid])
        for cid in features
        if cid.endswith("_01")
    }
    return pool, targets, corpus


class TestNearestReference:
    def test_identical_member_matches_itself(self, rotation_pool):
        pool, _, _ = rotation_pool
        entry = pool.entries[0]
        pred = nearest_reference(entry.features, pool, "profile")
        assert pred.offset_minutes == entry.offset_minutes
        assert pred.diagnostics["matched_ref"] == entry.community_id
        assert pred.diagnostics["divergence"] < 1e-7

    def test_rotated_target_matches_rotated_class(self, rotation_pool):
        pool, targets, corpus = rotation_pool
        cid = "s+0000_01"
        offset, feats = targets[cid]
        pred = nearest_reference(feats, pool, "profile")
        assert pred.offset_minutes == 0
        rotated = featurize(rotate(corpus.series[cid], 1))
        pred_rot = nearest_reference(rotated, pool, "profile")
        assert pred_rot.offset_minutes == -60

    def test_synthetic_target_recovers_offset(self, rotation_pool):
        pool, targets, _ = rotation_pool
        for cid, (offset, feats) in sorted(targets.items()):
            pred = nearest_reference(feats, pool, "profile")
            assert pred.offset_minutes == offset, cid

    def test_tie_break_lexicographic(self, rotation_pool):
        pool, targets, _ = rotation_pool
        offset, feats = targets["s+0000_01"]
        twin_a = dataclasses.replace(pool.entries[0], community_id="aaa", offset_minutes=0)
        twin_b = dataclasses.replace(twin_a, community_id="zzz", offset_minutes=60)
        tie_pool = ReferencePool(
            [dataclasses.replace(twin_a, features=feats), dataclasses.replace(twin_b, features=feats)]
        )
        pred = nearest_reference(feats, tie_pool, "profile")
        assert pred.diagnostics["matched_ref"] == "aaa"

    def test_duplicate_entries_do_not_change_result(self, rotation_pool):
        pool, targets, _ = rotation_pool
        offset, feats = targets["s+0300_01"]
        doubled = ReferencePool(
            pool.entries
            + [
                dataclasses.replace(e, community_id=e.community_id + "_dup")
                for e in pool.entries
            ]
        )
        a = nearest_reference(feats, pool, "profile")
        b = nearest_reference(feats, doubled, "profile")
        assert a.offset_minutes == b.offset_minutes

    def test_empty_pool_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            ReferencePool([])

    def test_scaling_raw_counts_leaves_prediction_unchanged(self, rotation_pool):
        # profiles are normalized, so the target's absolute volume is
        # irrelevant (log-domain shapes match at high counts)
        pool, _, _ = rotation_pool
        spec = SynthSpec(offset_minutes=-420, n_days=90, mean_daily_events=3000.0, seed=13)
        series, _ = generate(spec)
        scaled = dataclasses.replace(series, counts=series.counts * 3.0)
        a = nearest_reference(featurize(series), pool, "profile")
        b = nearest_reference(featurize(scaled), pool, "profile")
        assert a.offset_minutes == b.offset_minutes


class TestRunMethod:
    def test_reference_methods_require_pool(self, tiny_features):
        feats = next(iter(tiny_features.values()))
        for method in ("ActivityCounts", "ActivityCountsSmooth", "Rhythm"):
            with pytest.raises(ValueError, match="requires a reference pool"):
                run_method(method, feats)

    def test_anchor_methods_work_without_pool(self, tiny_features):
        feats = next(iter(tiny_features.values()))
        for method in ANCHOR_METHODS:
            pred = run_method(method, feats)
            assert -720 < pred.offset_minutes <= 720

    def test_unknown_method(self, tiny_features):
        feats = next(iter(tiny_features.values()))
        with pytest.raises(ValueError, match="unknown method"):
            run_method("Nonsense", feats)

    def test_activity_lull_recovers_clean_offset(self):
        series, _ = generate(SynthSpec(offset_minutes=120, n_days=90, seed=3))
        pred = run_method("ActivityLull", featurize(series))
        assert pred.offset_minutes == 120
        assert pred.diagnostics["lull_hour"] == 2.0

    def test_most_stable_rhythm_anchor_arithmetic(self, tiny_features):
        feats = next(iter(tiny_features.values()))
        stable_hour = feats.scalars.h_stable_phase
        pred = run_method("MostStableRhythm", feats)
        assert pred.offset_minutes == anchor_offset(float(stable_hour))

    def test_lull_smooth_uses_fine_grid(self):
        series, _ = generate(SynthSpec(offset_minutes=-300, n_days=120, seed=8))
        feats = featurize(series)
        pred = run_method("ActivityLullSmooth", feats)
        assert pred.offset_minutes % 15 == 0
        assert abs(pred.offset_minutes - (-300)) <= 60


class TestRotationCovariancePredictions:
    def test_all_methods_shift_with_target_rotation(self, rotation_pool):
        pool, targets, corpus = rotation_pool
        cid = "s+0180_01"
        series = corpus.series[cid]
        base = {m: run_method(m, featurize(series), pool=pool) for m in METHODS}
        for delta in (1, 7, 13, 23):
            feats = featurize(rotate(series, delta))
            for method in METHODS:
                pred = run_method(method, feats, pool=pool)
                expected = int(
                    wrap_offset_minutes(base[method].offset_minutes - delta * 60)
                )
                assert pred.offset_minutes == expected, (method, delta)
