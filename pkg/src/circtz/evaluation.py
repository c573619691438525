"""Evaluation harness: circular metrics, repeated stratified splits, sweeps.

Each iteration samples a stratified reference pool (every offset class keeps
at least one reference), evaluates all requested methods on the identical
held-out side, and scores them with exact-match accuracy, linearly weighted
kappa, circular correlation, mean circular error, and frequency-weighted F1.
A prior-weighted dummy classifier provides the chance baseline.
"""

from __future__ import annotations

import csv
import dataclasses
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .features import CommunityFeatures, featurize
from .infer import METHODS, ReferencePool, run_method
from .ingest import LabeledCorpus
from .preprocess import ActivitySeries, DetrendConfig
from .util import (
    DataError,
    circular_distance_hours,
    circular_mean,
    derive_seed,
    format_float,
    resultant_length,
    round_half_away,
    wrap_offset_hours,
)

logger = logging.getLogger(__name__)

BASELINE_METHOD = "Baseline"
HOURS = 24
# below this mean resultant length a circular mean direction is meaningless
DEGENERATE_RESULTANT = 1e-9


# ---------------------------------------------------------------------------
# metrics

def circular_error(y_hours: float, yhat_hours: float) -> float:
    """Shortest distance between two offsets on the 24 h clock, in hours."""
    return circular_distance_hours(y_hours, yhat_hours)


def circular_correlation(ys_hours, yhats_hours) -> float:
    """Angular correlation of paired offsets via sines of mean deviations.

    Returns NaN when either side is degenerate: all angles equal (zero
    denominator) or spread so evenly that no mean direction exists (near-zero
    resultant). Callers surface the NaN with a flag rather than dropping rows.
    """
    y = np.asarray(ys_hours, dtype=np.float64)
    z = np.asarray(yhats_hours, dtype=np.float64)
    if y.shape != z.shape or y.ndim != 1 or len(y) < 2:
        raise ValueError("need two equal-length vectors of at least 2 offsets")
    a = y * (2.0 * np.pi / HOURS)
    b = z * (2.0 * np.pi / HOURS)
    if resultant_length(a) < DEGENERATE_RESULTANT or resultant_length(b) < DEGENERATE_RESULTANT:
        return float("nan")
    sa = np.sin(a - circular_mean(a))
    sb = np.sin(b - circular_mean(b))
    denom = np.sqrt(np.sum(sa * sa) * np.sum(sb * sb))
    if denom == 0:
        return float("nan")
    return float(np.sum(sa * sb) / denom)


def hour_category(offset_minutes: float) -> int:
    """Ordinal category 0..23 from an offset: rounded hour mapped to (-12, 12]."""
    hours = wrap_offset_hours(round_half_away(offset_minutes / 60.0))
    return int(hours) + 11


def weighted_kappa(ys_minutes, yhats_minutes) -> float:
    """Linearly weighted Cohen's kappa over the 24 rounded-hour categories."""
    cats_true = np.array([hour_category(y) for y in ys_minutes])
    cats_pred = np.array([hour_category(y) for y in yhats_minutes])
    n = len(cats_true)
    observed = np.zeros((HOURS, HOURS))
    np.add.at(observed, (cats_true, cats_pred), 1.0)
    row = observed.sum(axis=1)
    col = observed.sum(axis=0)
    expected = np.outer(row, col) / n
    i = np.arange(HOURS)
    weight = np.abs(i[:, None] - i[None, :]) / (HOURS - 1)
    expected_disagreement = float(np.sum(weight * expected))
    if expected_disagreement == 0:
        return float("nan")
    return 1.0 - float(np.sum(weight * observed)) / expected_disagreement


def weighted_f1(ys_minutes, yhats_minutes) -> float:
    """Per-class F1 averaged with true-class frequency weights.

    Classes present in the truth but never predicted contribute zero (their
    precision is undefined); that is logged rather than silently dropped.
    """
    cats_true = np.array([hour_category(y) for y in ys_minutes])
    cats_pred = np.array([hour_category(y) for y in yhats_minutes])
    total = 0.0
    silent: list[int] = []
    for cat in np.unique(cats_true):
        support = int(np.sum(cats_true == cat))
        tp = float(np.sum((cats_true == cat) & (cats_pred == cat)))
        predicted = float(np.sum(cats_pred == cat))
        if predicted == 0:
            if tp == 0:
                silent.append(int(cat))
            f1 = 0.0
        else:
            precision = tp / predicted
            recall = tp / support
            f1 = 0.0 if (precision + recall) == 0 else 2 * precision * recall / (precision + recall)
        total += f1 * support / len(cats_true)
    if silent:
        logger.debug("classes never predicted (F1 = 0): %s", silent)
    return float(total)


def dummy_baseline(
    reference_offsets_minutes, n_targets: int, rng: np.random.Generator
) -> np.ndarray:
    """Draws from the reference-side empirical offset distribution."""
    choices = np.sort(np.asarray(reference_offsets_minutes, dtype=np.int64))
    return rng.choice(choices, size=n_targets, replace=True)


# ---------------------------------------------------------------------------
# cross-validation

@dataclass(frozen=True)
class SplitPlan:
    iterations: int = 10
    reference_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0 < self.reference_fraction < 1:
            raise ValueError("reference_fraction must be in (0, 1)")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")


@dataclass(frozen=True)
class MetricsRow:
    method: str
    iteration: int | str
    accuracy: float
    weighted_kappa: float
    circular_correlation: float
    mean_circular_error: float
    weighted_f1: float
    degenerate_rho: bool
    n_eval: int


@dataclass(frozen=True)
class PredictionRecord:
    iteration: int
    community_id: str
    method: str
    true_offset_minutes: int
    predicted_offset_minutes: int
    error_hours: float


@dataclass
class EvalReport:
    rows: list[MetricsRow] = field(default_factory=list)
    aggregates: list[MetricsRow] = field(default_factory=list)
    predictions: list[PredictionRecord] = field(default_factory=list)
    confusion: dict[str, np.ndarray] = field(default_factory=dict)

    def aggregate(self) -> None:
        """Unweighted mean of every metric across iterations, per method."""
        self.aggregates = []
        methods = sorted({r.method for r in self.rows})
        for method in methods:
            rows = [r for r in self.rows if r.method == method]
            self.aggregates.append(
                MetricsRow(
                    method=method,
                    iteration="mean",
                    accuracy=float(np.mean([r.accuracy for r in rows])),
                    weighted_kappa=float(np.mean([r.weighted_kappa for r in rows])),
                    circular_correlation=float(
                        np.mean([r.circular_correlation for r in rows])
                    ),
                    mean_circular_error=float(
                        np.mean([r.mean_circular_error for r in rows])
                    ),
                    weighted_f1=float(np.mean([r.weighted_f1 for r in rows])),
                    degenerate_rho=any(r.degenerate_rho for r in rows),
                    n_eval=sum(r.n_eval for r in rows),
                )
            )

    def mean_row(self, method: str) -> MetricsRow:
        for row in self.aggregates:
            if row.method == method:
                return row
        raise KeyError(method)

    def write_report_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                [
                    "method",
                    "iteration",
                    "accuracy",
                    "weighted_kappa",
                    "circular_correlation",
                    "mean_circular_error",
                    "weighted_f1",
                    "degenerate_rho",
                    "n_eval",
                ]
            )
            for row in self.rows + self.aggregates:
                writer.writerow(
                    [
                        row.method,
                        row.iteration,
                        format_float(row.accuracy),
                        format_float(row.weighted_kappa),
                        format_float(row.circular_correlation),
                        format_float(row.mean_circular_error),
                        format_float(row.weighted_f1),
                        int(row.degenerate_rho),
                        row.n_eval,
                    ]
                )

    def write_errors_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                [
                    "iteration",
                    "community_id",
                    "method",
                    "true_offset_minutes",
                    "predicted_offset_minutes",
                    "error_hours",
                ]
            )
            for rec in self.predictions:
                writer.writerow(
                    [
                        rec.iteration,
                        rec.community_id,
                        rec.method,
                        rec.true_offset_minutes,
                        rec.predicted_offset_minutes,
                        format_float(rec.error_hours),
                    ]
                )

    def write_confusion_csvs(self, directory: str) -> list[str]:
        import os

        paths = []
        for method in sorted(self.confusion):
            path = os.path.join(directory, f"confusion_{method}.csv")
            offsets = [h - 11 for h in range(HOURS)]
            with open(path, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["true_offset_hours"] + [str(o) for o in offsets])
                matrix = self.confusion[method]
                for i, o in enumerate(offsets):
                    writer.writerow([o] + [int(v) for v in matrix[i]])
            paths.append(path)
        return paths


def stratified_split(
    labels: dict[str, int], fraction: float, rng: np.random.Generator
) -> tuple[list[str], list[str]]:
    """Split community ids so every offset class keeps >= 1 reference and
    >= 1 evaluation member."""
    by_class: dict[int, list[str]] = {}
    for cid in sorted(labels):
        by_class.setdefault(labels[cid], []).append(cid)
    refs: list[str] = []
    evals: list[str] = []
    for offset in sorted(by_class):
        members = by_class[offset]
        if len(members) < 2:
            raise DataError(
                f"offset class {offset} has {len(members)} member(s); need >= 2"
            )
        order = rng.permutation(len(members))
        n_ref = max(1, round_half_away(fraction * len(members)))
        n_ref = min(n_ref, len(members) - 1)
        refs.extend(members[i] for i in order[:n_ref])
        evals.extend(members[i] for i in order[n_ref:])
    return sorted(refs), sorted(evals)


def _featurize_worker(args):
    cid, series, detrend, scale_hours, band = args
    try:
        feats = featurize(series, detrend=detrend, scale_hours=scale_hours, band=band)
        return cid, feats, None
    except DataError as exc:
        return cid, None, str(exc)


def featurize_corpus(
    series_map: dict[str, ActivitySeries],
    detrend: DetrendConfig = DetrendConfig(),
    scale_hours: float = 24.0,
    band: tuple[float, float] | None = None,
    jobs: int = 1,
) -> dict[str, CommunityFeatures]:
    """Extract features for every community, skipping ones that fail gates.

    Output is keyed and ordered by community id regardless of worker count.
    """
    tasks = [
        (cid, series_map[cid], detrend, scale_hours, band) for cid in sorted(series_map)
    ]
    results: list[tuple[str, CommunityFeatures | None, str | None]] = []
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_featurize_worker, tasks, chunksize=8))
    else:
        results = [_featurize_worker(t) for t in tasks]
    out: dict[str, CommunityFeatures] = {}
    skipped = 0
    for cid, feats, error in sorted(results, key=lambda r: r[0]):
        if feats is None:
            skipped += 1
            logger.info("skipping %s: %s", cid, error or "sparsity filter")
            continue
        out[cid] = feats
    if skipped:
        logger.info("featurized %d communities, skipped %d", len(out), skipped)
    return out


def _score_pairs(
    method: str,
    iteration: int,
    pairs: list[tuple[int, int]],
) -> MetricsRow:
    ys = np.array([p[0] for p in pairs], dtype=np.float64)
    yhats = np.array([p[1] for p in pairs], dtype=np.float64)
    acc = float(np.mean(ys == yhats))
    mce = float(np.mean([circular_error(y / 60.0, z / 60.0) for y, z in pairs]))
    rho = circular_correlation(ys / 60.0, yhats / 60.0)
    kappa = weighted_kappa(ys, yhats)
    f1 = weighted_f1(ys, yhats)
    return MetricsRow(
        method=method,
        iteration=iteration,
        accuracy=acc,
        weighted_kappa=kappa,
        circular_correlation=rho,
        mean_circular_error=mce,
        weighted_f1=f1,
        degenerate_rho=bool(np.isnan(rho)),
        n_eval=len(pairs),
    )


def run_cv(
    corpus: LabeledCorpus,
    methods: list[str],
    plan: SplitPlan = SplitPlan(),
    *,
    lull_hour: float = 4.0,
    detrend: DetrendConfig = DetrendConfig(),
    scale_hours: float = 24.0,
    band: tuple[float, float] | None = None,
    include_baseline: bool = True,
    features: dict[str, CommunityFeatures] | None = None,
    jobs: int = 1,
) -> EvalReport:
    """Repeated stratified-split evaluation of the requested methods.

    Features are computed once per community and shared across iterations.
    All methods (and the dummy baseline) see the identical evaluation side in
    each iteration. Same plan and seed reproduce the report exactly.
    """
    for method in methods:
        if method not in METHODS:
            raise ValueError(f"unknown method {method!r}; valid: {', '.join(METHODS)}")
    if features is None:
        features = featurize_corpus(
            corpus.series, detrend=detrend, scale_hours=scale_hours, band=band, jobs=jobs
        )
    labels = {
        cid: corpus.labels[cid].offset_minutes
        for cid in corpus.labels
        if cid in features
    }
    sizes: dict[int, int] = {}
    for off in labels.values():
        sizes[off] = sizes.get(off, 0) + 1
    thin = sorted(o for o, n in sizes.items() if n < 2)
    if thin:
        raise DataError(f"offset classes below 2 members after featurization: {thin}")

    report = EvalReport()
    all_methods = list(methods) + ([BASELINE_METHOD] if include_baseline else [])
    for method in all_methods:
        report.confusion[method] = np.zeros((HOURS, HOURS), dtype=np.int64)

    for iteration in range(plan.iterations):
        split_rng = np.random.default_rng(derive_seed(plan.seed, "split", iteration))
        ref_ids, eval_ids = stratified_split(
            labels, plan.reference_fraction, split_rng
        )
        pool = ReferencePool.from_features(
            {cid: (labels[cid], features[cid]) for cid in ref_ids}
        )
        per_method_pairs: dict[str, list[tuple[int, int]]] = {m: [] for m in all_methods}
        for cid in eval_ids:
            truth = labels[cid]
            for method in methods:
                pred = run_method(method, features[cid], pool=pool, lull_hour=lull_hour)
                per_method_pairs[method].append((truth, pred.offset_minutes))
                report.predictions.append(
                    PredictionRecord(
                        iteration=iteration,
                        community_id=cid,
                        method=method,
                        true_offset_minutes=truth,
                        predicted_offset_minutes=pred.offset_minutes,
                        error_hours=circular_error(
                            truth / 60.0, pred.offset_minutes / 60.0
                        ),
                    )
                )
        if include_baseline:
            dummy_rng = np.random.default_rng(
                derive_seed(plan.seed, "dummy", iteration)
            )
            draws = dummy_baseline(
                [labels[cid] for cid in ref_ids], len(eval_ids), dummy_rng
            )
            for cid, offset in zip(eval_ids, draws):
                truth = labels[cid]
                per_method_pairs[BASELINE_METHOD].append((truth, int(offset)))
                report.predictions.append(
                    PredictionRecord(
                        iteration=iteration,
                        community_id=cid,
                        method=BASELINE_METHOD,
                        true_offset_minutes=truth,
                        predicted_offset_minutes=int(offset),
                        error_hours=circular_error(truth / 60.0, offset / 60.0),
                    )
                )
        for method, pairs in per_method_pairs.items():
            report.rows.append(_score_pairs(method, iteration, pairs))
            for y, z in pairs:
                report.confusion[method][hour_category(y), hour_category(z)] += 1
    report.aggregate()
    return report


# ---------------------------------------------------------------------------
# data-scarcity sweeps

SWEEP_AXES = ("comments", "days")


def subsample_series(
    series: ActivitySeries,
    axis: str,
    level: int,
    rng: np.random.Generator,
) -> tuple[ActivitySeries, bool]:
    """Reduce a raw series along one scarcity axis.

    ``comments``: keep ``level`` events sampled uniformly without replacement
    (a multivariate hypergeometric thinning of the hourly counts).
    ``days``: keep the trailing window covering the last ``level`` active
    days. Levels beyond the available data clamp, flagged in the result.
    """
    if axis not in SWEEP_AXES:
        raise ValueError(f"axis must be one of {SWEEP_AXES}")
    counts = series.counts
    if axis == "comments":
        total = int(round(float(counts.sum())))
        if level >= total:
            return series, True
        kept = rng.multivariate_hypergeometric(
            counts.astype(np.int64), level
        ).astype(np.float64)
        nz = np.nonzero(kept)[0]
        first, last = int(nz[0]), int(nz[-1])
        return (
            dataclasses.replace(
                series,
                start_hour=series.start_hour + first,
                counts=kept[first : last + 1],
            ),
            False,
        )
    days = (series.start_hour + np.arange(len(counts))) // 24
    active = np.unique(days[counts > 0])
    if level >= len(active):
        return series, True
    threshold = active[-level]
    mask = days >= threshold
    kept = np.where(mask, counts, 0.0)
    nz = np.nonzero(kept)[0]
    first, last = int(nz[0]), int(nz[-1])
    return (
        dataclasses.replace(
            series,
            start_hour=series.start_hour + first,
            counts=kept[first : last + 1],
        ),
        False,
    )


@dataclass(frozen=True)
class SweepRow:
    method: str
    axis: str
    level: int
    iteration: int
    rho: float
    accuracy: float
    clamped: bool


def scarcity_sweep(
    corpus: LabeledCorpus,
    methods: list[str],
    plan: SplitPlan,
    axis: str,
    levels: list[int],
    *,
    lull_hour: float = 4.0,
    detrend: DetrendConfig = DetrendConfig(),
    scale_hours: float = 24.0,
    jobs: int = 1,
) -> list[SweepRow]:
    """Re-run the evaluation at decreasing data volumes.

    Every community (references included) is subsampled per level and
    iteration; split seeds match ``run_cv`` so a clamped full-data level
    reproduces the unablated numbers exactly. Subsample seeds derive from
    (seed, community, level, iteration) for reproducibility.
    """
    if axis not in SWEEP_AXES:
        raise ValueError(f"axis must be one of {SWEEP_AXES}")
    levels = sorted({int(l) for l in levels}, reverse=True)
    rows: list[SweepRow] = []
    for level in levels:
        for iteration in range(plan.iterations):
            sub_series: dict[str, ActivitySeries] = {}
            clamped_all = True
            for cid in sorted(corpus.series):
                sub_rng = np.random.default_rng(
                    derive_seed(plan.seed, "subsample", cid, level, iteration)
                )
                sub, clamped = subsample_series(corpus.series[cid], axis, level, sub_rng)
                clamped_all = clamped_all and clamped
                sub_series[cid] = sub
            features = featurize_corpus(
                sub_series, detrend=detrend, scale_hours=scale_hours, jobs=jobs
            )
            labels = {
                cid: corpus.labels[cid].offset_minutes
                for cid in corpus.labels
                if cid in features
            }
            split_rng = np.random.default_rng(
                derive_seed(plan.seed, "split", iteration)
            )
            try:
                ref_ids, eval_ids = stratified_split(
                    labels, plan.reference_fraction, split_rng
                )
            except DataError as exc:
                logger.warning(
                    "sweep level %d iteration %d: %s; skipping", level, iteration, exc
                )
                continue
            pool = ReferencePool.from_features(
                {cid: (labels[cid], features[cid]) for cid in ref_ids}
            )
            for method in methods:
                pairs = []
                for cid in eval_ids:
                    pred = run_method(
                        method, features[cid], pool=pool, lull_hour=lull_hour
                    )
                    pairs.append((labels[cid], pred.offset_minutes))
                scored = _score_pairs(method, iteration, pairs)
                rows.append(
                    SweepRow(
                        method=method,
                        axis=axis,
                        level=level,
                        iteration=iteration,
                        rho=scored.circular_correlation,
                        accuracy=scored.accuracy,
                        clamped=clamped_all,
                    )
                )
    return rows


def write_sweep_csv(path: str, rows: list[SweepRow]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["method", "axis", "level", "iteration", "rho", "accuracy", "clamped"]
        )
        for row in rows:
            writer.writerow(
                [
                    row.method,
                    row.axis,
                    row.level,
                    row.iteration,
                    format_float(row.rho),
                    format_float(row.accuracy),
                    int(row.clamped),
                ]
            )
