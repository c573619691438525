"""Command-line interface: synth, ingest, features, infer, evaluate, sweep,
analyze, and an all-in-one pipeline.

Exit codes: 0 success, 1 data error, 2 usage error. All randomness flows
from one ``--seed`` (fallback: the ``CIRCTZ_SEED`` environment variable);
per-stage streams are derived by stable hashing, so identical invocations
produce byte-identical output trees.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import analyze as analyze_mod
from . import synth as synth_mod
from ._kernels import BACKEND
from .evaluation import (
    SplitPlan,
    featurize_corpus,
    run_cv,
    scarcity_sweep,
    write_sweep_csv,
)
from .features import read_features_csv, write_features_csv
from .infer import ANCHOR_METHODS, METHODS, ReferencePool, run_method
from .ingest import (
    LabeledCorpus,
    bin_events,
    load_ground_truth,
    load_prebinned,
    read_events,
    write_events_ndjson,
    write_labels_csv,
    write_prebinned_csv,
)
from .preprocess import DetrendConfig
from .util import DataError, derive_seed, format_float

logger = logging.getLogger("circtz")


class UsageError(Exception):
    """Bad flag combinations detected after argparse."""


def _parse_band(text: str) -> tuple[float, float]:
    try:
        lo, hi = text.split(":")
        return float(lo), float(hi)
    except ValueError as exc:
        raise UsageError(f"--cwt-band expects 'LO:HI', got {text!r}") from exc


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None, help="root RNG seed")
    parser.add_argument("--config", default=None, help="flat key=value override file")
    parser.add_argument("--jobs", type=int, default=1, help="worker processes")
    parser.add_argument("-v", "--verbose", action="store_true")


def _add_series_input(parser: argparse.ArgumentParser) -> None:
    group = parser.add_mutually_exclusive_group()
    group.add_argument("--events", help="NDJSON or CSV event stream (.gz ok)")
    group.add_argument("--prebinned", help="CSV community,epoch_hour,count")


def _add_feature_knobs(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--hann-window", type=int, default=384)
    parser.add_argument("--min-nonzero", type=int, default=50)
    parser.add_argument("--cwt-band", default=None, help="optional scale band LO:HI")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="circtz",
        description="Infer community UTC offsets from hourly activity rhythms.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a labeled synthetic corpus")
    p.add_argument("--spec", default="default", help="corpus JSON or 'default'")
    p.add_argument("--out", required=True, help="events NDJSON output path")
    p.add_argument("--labels", required=True, help="ground-truth CSV output path")
    _add_common(p)

    p = sub.add_parser("ingest", help="bin an event stream into hourly counts")
    _add_series_input(p)
    p.add_argument("--out", required=True, help="binned CSV output path")
    _add_common(p)

    p = sub.add_parser("features", help="extract circadian features")
    _add_series_input(p)
    p.add_argument("--labels", default=None, help="attach offsets from this CSV")
    p.add_argument("--out", required=True, help="feature table output path")
    _add_feature_knobs(p)
    _add_common(p)

    p = sub.add_parser("infer", help="predict offsets with one method")
    p.add_argument("--method", required=True, choices=METHODS)
    p.add_argument("--pool", default=None, help="labeled feature table CSV")
    _add_series_input(p)
    p.add_argument("--features", default=None, help="precomputed target features CSV")
    p.add_argument("--out", required=True, help="predictions CSV output path")
    p.add_argument("--lull-hour", type=float, default=4.0)
    _add_feature_knobs(p)
    _add_common(p)

    p = sub.add_parser("evaluate", help="cross-validated method comparison")
    _add_series_input(p)
    p.add_argument("--synthetic", default=None, help="corpus JSON or 'default'")
    p.add_argument("--labels", default=None, help="ground-truth CSV")
    p.add_argument(
        "--methods",
        default=",".join(METHODS),
        help="comma-separated method names",
    )
    p.add_argument("--iterations", type=int, default=10)
    p.add_argument("--ref-frac", type=float, default=0.2)
    p.add_argument("--lull-hour", type=float, default=4.0)
    p.add_argument("--out-dir", required=True)
    _add_feature_knobs(p)
    _add_common(p)

    p = sub.add_parser("sweep", help="data-scarcity ablation")
    _add_series_input(p)
    p.add_argument("--synthetic", default=None, help="corpus JSON or 'default'")
    p.add_argument("--labels", default=None)
    p.add_argument("--methods", default="ActivityCounts,ActivityLull,Rhythm")
    p.add_argument("--axis", choices=("comments", "days"), required=True)
    p.add_argument("--levels", required=True, help="comma-separated levels")
    p.add_argument("--iterations", type=int, default=10)
    p.add_argument("--ref-frac", type=float, default=0.2)
    p.add_argument("--lull-hour", type=float, default=4.0)
    p.add_argument("--out", required=True, help="sweep CSV output path")
    _add_feature_knobs(p)
    _add_common(p)

    p = sub.add_parser("analyze", help="longitudinal geographic analytics")
    p.add_argument("--predictions", required=True, help="predictions CSV from infer")
    p.add_argument("--source", default=None, help="series input for first-activity years")
    p.add_argument("--years", default=None, help="CSV community_id,year")
    p.add_argument("--population", default=None, help="CSV offset_minutes,real_share")
    p.add_argument(
        "--packaged-population",
        action="store_true",
        help="use the bundled population benchmark table",
    )
    p.add_argument("--weight-by-volume", action="store_true")
    p.add_argument("--base-year", default="auto", help="growth base year or 'auto'")
    p.add_argument("--out-dir", required=True)
    _add_common(p)

    p = sub.add_parser("pipeline", help="synth + full analysis tree")
    p.add_argument("--synthetic", default="default", help="corpus JSON or 'default'")
    p.add_argument("--methods", default=",".join(METHODS))
    p.add_argument("--iterations", type=int, default=10)
    p.add_argument("--ref-frac", type=float, default=0.2)
    p.add_argument("--lull-hour", type=float, default=4.0)
    p.add_argument("--sweep-levels", default="2000,100", help="comments-axis levels")
    p.add_argument("--out-dir", required=True)
    _add_feature_knobs(p)
    _add_common(p)

    return parser


def _apply_config(args: argparse.Namespace) -> None:
    """Apply flat key=value overrides from --config onto parsed args."""
    if not getattr(args, "config", None):
        return
    with open(args.config) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"{args.config}:{lineno}: expected key=value")
            key, _, raw = line.partition("=")
            key = key.strip().replace("-", "_")
            raw = raw.strip()
            if not hasattr(args, key):
                raise UsageError(f"{args.config}:{lineno}: unknown option {key!r}")
            current = getattr(args, key)
            if isinstance(current, bool):
                value: object = raw.lower() in ("1", "true", "yes")
            elif isinstance(current, int):
                value = int(raw)
            elif isinstance(current, float):
                value = float(raw)
            else:
                value = raw
            setattr(args, key, value)


def _effective_seed(args: argparse.Namespace) -> int:
    if getattr(args, "seed", None) is not None:
        return int(args.seed)
    env = os.environ.get("CIRCTZ_SEED", "").strip()
    return int(env) if env else 0


def _load_series(args: argparse.Namespace) -> dict:
    if getattr(args, "events", None):
        return bin_events(read_events(args.events))
    if getattr(args, "prebinned", None):
        return load_prebinned(args.prebinned)
    raise UsageError("need --events or --prebinned")


def _load_corpus(args: argparse.Namespace, seed: int) -> LabeledCorpus:
    if getattr(args, "synthetic", None):
        config = (
            synth_mod.default_corpus_config()
            if args.synthetic == "default"
            else synth_mod.spec_from_json(args.synthetic)
        )
        return synth_mod.corpus_from_config(config, seed=derive_seed(seed, "synth"))
    if not getattr(args, "labels", None):
        raise UsageError("need --labels with --events/--prebinned, or --synthetic")
    series = _load_series(args)
    labels = load_ground_truth(args.labels)
    usable = {l.community_id: l for l in labels if l.community_id in series}
    dropped = len(labels) - len(usable)
    if dropped:
        logger.warning("%d labels have no series and were dropped", dropped)
    return LabeledCorpus(
        labels=usable, series={cid: series[cid] for cid in usable}
    )


def _detrend_config(args: argparse.Namespace) -> DetrendConfig:
    return DetrendConfig(
        window_hours=getattr(args, "hann_window", 384),
        min_nonzero=getattr(args, "min_nonzero", 50),
    )


def _band(args: argparse.Namespace) -> tuple[float, float] | None:
    raw = getattr(args, "cwt_band", None)
    return _parse_band(raw) if raw else None


def _parse_methods(text: str) -> list[str]:
    methods = [m.strip() for m in text.split(",") if m.strip()]
    for m in methods:
        if m not in METHODS:
            raise UsageError(
                f"unknown method {m!r}; valid methods: {', '.join(METHODS)}"
            )
    return methods


# ---------------------------------------------------------------------------
# commands

def cmd_synth(args: argparse.Namespace) -> int:
    seed = _effective_seed(args)
    config = (
        synth_mod.default_corpus_config()
        if args.spec == "default"
        else synth_mod.spec_from_json(args.spec)
    )
    corpus = synth_mod.corpus_from_config(config, seed=derive_seed(seed, "synth"))
    write_events_ndjson(args.out, corpus.series)
    write_labels_csv(args.labels, corpus.labels.values())
    logger.info(
        "wrote %d communities (%d offset classes) to %s / %s",
        len(corpus.series),
        len(corpus.class_sizes()),
        args.out,
        args.labels,
    )
    return 0


def cmd_ingest(args: argparse.Namespace) -> int:
    series = _load_series(args)
    write_prebinned_csv(args.out, series)
    total = sum(s.total_events() for s in series.values())
    logger.info(
        "binned %d communities (%d events) into %s", len(series), int(total), args.out
    )
    return 0


def cmd_features(args: argparse.Namespace) -> int:
    series = _load_series(args)
    offsets: dict[str, int] = {}
    if args.labels:
        offsets = {
            l.community_id: l.offset_minutes for l in load_ground_truth(args.labels)
        }
    feats = featurize_corpus(
        series,
        detrend=_detrend_config(args),
        band=_band(args),
        jobs=args.jobs,
    )
    rows = [(cid, offsets.get(cid), f) for cid, f in feats.items()]
    write_features_csv(args.out, rows)
    logger.info("wrote %d feature rows to %s", len(rows), args.out)
    return 0


def cmd_infer(args: argparse.Namespace) -> int:
    pool = None
    if args.pool:
        labeled = {
            cid: (offset, f)
            for cid, offset, f in read_features_csv(args.pool)
            if offset is not None
        }
        if not labeled:
            raise DataError(f"{args.pool}: no labeled rows usable as references")
        pool = ReferencePool.from_features(labeled)
    elif args.method not in ANCHOR_METHODS:
        raise UsageError(f"method {args.method} requires --pool")

    if args.features:
        targets = [(cid, f) for cid, _, f in read_features_csv(args.features)]
    else:
        series = _load_series(args)
        feats = featurize_corpus(
            series, detrend=_detrend_config(args), band=_band(args), jobs=args.jobs
        )
        targets = sorted(feats.items())

    import csv as _csv

    with open(args.out, "w", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(
            [
                "community_id",
                "method",
                "offset_minutes",
                "matched_ref",
                "divergence",
                "lull_hour",
            ]
        )
        for cid, feats_one in targets:
            pred = run_method(
                args.method, feats_one, pool=pool, lull_hour=args.lull_hour
            )
            diag = pred.diagnostics
            writer.writerow(
                [
                    cid,
                    pred.method,
                    pred.offset_minutes,
                    diag.get("matched_ref", ""),
                    format_float(diag["divergence"]) if "divergence" in diag else "",
                    format_float(diag["lull_hour"]) if "lull_hour" in diag else "",
                ]
            )
    logger.info("wrote %d predictions to %s", len(targets), args.out)
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    seed = _effective_seed(args)
    corpus = _load_corpus(args, seed)
    methods = _parse_methods(args.methods)
    plan = SplitPlan(
        iterations=args.iterations, reference_fraction=args.ref_frac, seed=seed
    )
    report = run_cv(
        corpus,
        methods,
        plan,
        lull_hour=args.lull_hour,
        detrend=_detrend_config(args),
        band=_band(args),
        jobs=args.jobs,
    )
    os.makedirs(args.out_dir, exist_ok=True)
    report.write_report_csv(os.path.join(args.out_dir, "report.csv"))
    report.write_errors_csv(os.path.join(args.out_dir, "errors.csv"))
    report.write_confusion_csvs(args.out_dir)
    for row in report.aggregates:
        logger.info(
            "%s: accuracy=%.3f kappa=%.3f rho=%.3f mce=%.3f f1=%.3f",
            row.method,
            row.accuracy,
            row.weighted_kappa,
            row.circular_correlation,
            row.mean_circular_error,
            row.weighted_f1,
        )
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    seed = _effective_seed(args)
    corpus = _load_corpus(args, seed)
    methods = _parse_methods(args.methods)
    try:
        levels = [int(l) for l in args.levels.split(",") if l.strip()]
    except ValueError as exc:
        raise UsageError(f"--levels expects integers: {exc}") from exc
    plan = SplitPlan(
        iterations=args.iterations, reference_fraction=args.ref_frac, seed=seed
    )
    rows = scarcity_sweep(
        corpus,
        methods,
        plan,
        args.axis,
        levels,
        lull_hour=args.lull_hour,
        detrend=_detrend_config(args),
        jobs=args.jobs,
    )
    write_sweep_csv(args.out, rows)
    logger.info("wrote %d sweep rows to %s", len(rows), args.out)
    return 0


def _read_predictions(path: str) -> dict[str, int]:
    import csv as _csv

    out: dict[str, int] = {}
    with open(path, newline="") as fh:
        reader = _csv.DictReader(fh)
        if reader.fieldnames is None or "community_id" not in reader.fieldnames:
            raise DataError(f"{path}: not a predictions CSV")
        for row in reader:
            out[row["community_id"]] = int(row["offset_minutes"])
    return out


def _read_years_csv(path: str) -> dict[str, int]:
    import csv as _csv

    out: dict[str, int] = {}
    with open(path, newline="") as fh:
        reader = _csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header[:2]] != ["community_id", "year"]:
            raise DataError(f"{path}: expected header 'community_id,year'")
        for row in reader:
            if row:
                out[row[0]] = int(row[1])
    return out


def cmd_analyze(args: argparse.Namespace) -> int:
    predictions = _read_predictions(args.predictions)
    years: dict[str, int] = {}
    volumes: dict[str, float] | None = None
    if args.years:
        years = _read_years_csv(args.years)
    elif args.source:
        series = (
            load_prebinned(args.source)
            if args.source.endswith(".csv")
            else bin_events(read_events(args.source))
        )
        years = {
            cid: analyze_mod.first_activity_year(s) for cid, s in series.items()
        }
        if args.weight_by_volume:
            volumes = {cid: s.total_events() for cid, s in series.items()}
    else:
        raise UsageError("need --years or --source for yearly attribution")
    if args.weight_by_volume and volumes is None:
        raise UsageError("--weight-by-volume requires --source")

    os.makedirs(args.out_dir, exist_ok=True)
    yearly = analyze_mod.yearly_offset_distribution(predictions, years, volumes)
    analyze_mod.write_density_csv(
        os.path.join(args.out_dir, "density_by_year.csv"), yearly
    )
    analyze_mod.write_gini_csv(os.path.join(args.out_dir, "gini_by_year.csv"), yearly)

    if args.base_year == "auto":
        base_year = 2012 if 2012 in yearly else min(yearly)
        if base_year != 2012:
            logger.info("base year 2012 absent; using %d", base_year)
    else:
        base_year = int(args.base_year)
    growth = analyze_mod.growth_index(yearly, base_year=base_year)
    analyze_mod.write_growth_csv(
        os.path.join(args.out_dir, "growth_heatmap.csv"), growth
    )

    # overall inferred distribution across all years
    inferred: dict[int, float] = {}
    for mass in yearly.values():
        for offset, value in mass.items():
            inferred[offset] = inferred.get(offset, 0.0) + value

    external: dict[int, float] | None = None
    pure_vec = None
    if args.packaged_population:
        table = analyze_mod.load_population_benchmark()
        external = {
            int(o): float(v)
            for o, v in zip(table["offset_hours"], table["real_share"])
        }
        pure_vec = table["inferred_share"]
    elif args.population:
        external = analyze_mod.load_population_csv(args.population)

    if external is not None:
        if pure_vec is None:
            pure_vec = np.array(
                [
                    inferred.get(int(o), 0.0)
                    for o in analyze_mod.OFFSET_GRID_HOURS
                ]
            )
        real_vec = np.array(
            [external.get(int(o), 0.0) for o in analyze_mod.OFFSET_GRID_HOURS]
        )
        source = {
            int(o): float(pure_vec[i])
            for i, o in enumerate(analyze_mod.OFFSET_GRID_HOURS)
        }
        pearson, spearman = analyze_mod.population_correlation(source, external)
        result = analyze_mod.deconvolve(pure_vec, real_vec)
        import csv as _csv

        with open(
            os.path.join(args.out_dir, "population_correlation.csv"), "w", newline=""
        ) as fh:
            writer = _csv.writer(fh)
            writer.writerow(
                ["pearson_r", "spearman_rho", "optimized_pearson_r", "converged"]
            )
            writer.writerow(
                [
                    format_float(pearson),
                    format_float(spearman),
                    format_float(result.objective),
                    int(result.converged),
                ]
            )
        analyze_mod.write_deconvolution_csv(
            os.path.join(args.out_dir, "deconvolution.csv"),
            result,
            pure_vec / pure_vec.sum(),
            real_vec / real_vec.sum(),
        )
        logger.info(
            "population alignment: r=%.3f (rho=%.3f), optimized r=%.3f",
            pearson,
            spearman,
            result.objective,
        )
    return 0


def cmd_pipeline(args: argparse.Namespace) -> int:
    seed = _effective_seed(args)
    out = args.out_dir
    os.makedirs(out, exist_ok=True)
    base = ["--seed", str(seed), "--jobs", str(args.jobs)]
    if args.verbose:
        base.append("--verbose")
    events = os.path.join(out, "events.ndjson")
    labels = os.path.join(out, "labels.csv")
    binned = os.path.join(out, "binned.csv")
    features = os.path.join(out, "features.csv")
    predictions = os.path.join(out, "predictions.csv")

    steps: list[list[str]] = [
        ["synth", "--spec", args.synthetic, "--out", events, "--labels", labels],
        ["ingest", "--events", events, "--out", binned],
        ["features", "--prebinned", binned, "--labels", labels, "--out", features],
        [
            "evaluate",
            "--prebinned",
            binned,
            "--labels",
            labels,
            "--methods",
            args.methods,
            "--iterations",
            str(args.iterations),
            "--ref-frac",
            str(args.ref_frac),
            "--lull-hour",
            str(args.lull_hour),
            "--out-dir",
            out,
        ],
        [
            "infer",
            "--method",
            "ActivityLull",
            "--features",
            features,
            "--lull-hour",
            str(args.lull_hour),
            "--out",
            predictions,
        ],
        [
            "analyze",
            "--predictions",
            predictions,
            "--source",
            binned,
            "--packaged-population",
            "--out-dir",
            out,
        ],
    ]
    if args.sweep_levels.strip():
        steps.insert(
            4,
            [
                "sweep",
                "--prebinned",
                binned,
                "--labels",
                labels,
                "--methods",
                "ActivityCounts,ActivityLull,Rhythm",
                "--axis",
                "comments",
                "--levels",
                args.sweep_levels,
                "--iterations",
                str(args.iterations),
                "--ref-frac",
                str(args.ref_frac),
                "--out",
                os.path.join(out, "sweep.csv"),
            ],
        )
    for step in steps:
        logger.info("pipeline step: %s", " ".join(step))
        code = main(step + base)
        if code != 0:
            return code
    return 0


_COMMANDS = {
    "synth": cmd_synth,
    "ingest": cmd_ingest,
    "features": cmd_features,
    "infer": cmd_infer,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
    "analyze": cmd_analyze,
    "pipeline": cmd_pipeline,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )
    logger.debug("kernel backend: %s", BACKEND)
    try:
        _apply_config(args)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
