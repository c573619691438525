"""Longitudinal geographic analytics over inferred offsets.

Given per-community offset predictions and first-activity years, this module
tracks how a platform's temporal footprint evolves: yearly offset densities,
their concentration (Gini), per-offset growth indices, correlation against
external population shares, and a constrained deconvolution that spreads
each offset's mass around its inferred center.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from datetime import datetime, timezone
from importlib import resources

import numpy as np
from scipy import optimize, stats

from .preprocess import ActivitySeries
from .util import DataError, format_float, round_half_away, wrap_offset_hours

logger = logging.getLogger(__name__)

HOURS = 24
OFFSET_GRID_HOURS = np.arange(-11, 13)  # canonical integer-hour circle
GROWTH_EPS = 1e-9
SIMPLEX_TOL = 1e-8
BARYCENTER_TOL = 1e-6


def gini(mass) -> float:
    """Concentration of mass across bins: 0 = uniform, (n-1)/n = single bin.

    Uses the mean-absolute-difference form G = sum_ij |m_i - m_j| / (2 n M).
    """
    m = np.asarray(mass, dtype=np.float64)
    if m.ndim != 1 or len(m) < 2:
        raise ValueError("need a 1-D mass vector with at least 2 bins")
    if np.any(m < 0):
        raise ValueError("masses must be non-negative")
    total = m.sum()
    if total <= 0:
        raise DataError("cannot compute Gini of an all-zero distribution")
    diffs = np.abs(m[:, None] - m[None, :]).sum()
    return float(diffs / (2.0 * len(m) * total))


def offset_hour_bin(offset_minutes: float) -> int:
    """Round an offset to its integer-hour bin on the (-12, 12] circle."""
    return int(wrap_offset_hours(round_half_away(offset_minutes / 60.0)))


def first_activity_year(series: ActivitySeries) -> int:
    """Calendar year (UTC) of the first active hour of a series."""
    return datetime.fromtimestamp(series.start_hour * 3600, tz=timezone.utc).year


def yearly_offset_distribution(
    offsets_by_community: dict[str, int],
    year_by_community: dict[str, int],
    weight_by_community: dict[str, float] | None = None,
) -> dict[int, dict[int, float]]:
    """Per-year mass by integer-hour offset bin.

    Communities weigh equally unless ``weight_by_community`` supplies volumes.
    Communities without a year are skipped with a log line.
    """
    out: dict[int, dict[int, float]] = {}
    missing = 0
    for cid in sorted(offsets_by_community):
        year = year_by_community.get(cid)
        if year is None:
            missing += 1
            continue
        bin_h = offset_hour_bin(offsets_by_community[cid])
        weight = 1.0 if weight_by_community is None else float(weight_by_community[cid])
        year_mass = out.setdefault(int(year), {})
        year_mass[bin_h] = year_mass.get(bin_h, 0.0) + weight
    if missing:
        logger.warning("%d communities lack a first-activity year; skipped", missing)
    return out


def growth_index(
    yearly: dict[int, dict[int, float]],
    base_year: int = 2012,
    eps: float = GROWTH_EPS,
) -> dict[int, dict[int, float]]:
    """log2 fold change of per-offset mass relative to the base year.

    Empty bins are floored by ``eps`` so absent offsets yield large negative
    (not infinite) values; the base year row is identically zero.
    """
    if base_year not in yearly:
        raise DataError(f"base year {base_year} not present")
    base = yearly[base_year]
    out: dict[int, dict[int, float]] = {}
    for year in sorted(yearly):
        row: dict[int, float] = {}
        for offset in OFFSET_GRID_HOURS:
            num = yearly[year].get(int(offset), 0.0) + eps
            den = base.get(int(offset), 0.0) + eps
            row[int(offset)] = float(np.log2(num / den))
        out[year] = row
    return out


def population_correlation(
    inferred: dict[int, float], external: dict[int, float]
) -> tuple[float, float]:
    """(Pearson r, Spearman rho) between aligned offset distributions.

    Keys are integer-hour offsets; offsets present on one side only count as
    zero share on the other, with a warning.
    """
    keys = sorted(set(inferred) | set(external))
    only_inferred = sorted(set(inferred) - set(external))
    only_external = sorted(set(external) - set(inferred))
    if only_inferred or only_external:
        logger.warning(
            "offset bins missing on one side treated as zero share "
            "(inferred-only: %s, external-only: %s)",
            only_inferred,
            only_external,
        )
    a = np.array([inferred.get(k, 0.0) for k in keys])
    b = np.array([external.get(k, 0.0) for k in keys])
    pearson = float(stats.pearsonr(a, b).statistic)
    spearman = float(stats.spearmanr(a, b).statistic)
    return pearson, spearman


# ---------------------------------------------------------------------------
# constrained deconvolution

@dataclass(frozen=True)
class DeconvolutionResult:
    """Outcome of the circular redistribution fit.

    ``weights[i]`` is the fraction of each community's mass moved by
    ``shifts_hours[i]``; ``theta`` are the shifts as angles. ``objective`` is
    the Pearson alignment achieved by the redistributed distribution.
    """

    weights: np.ndarray
    theta: np.ndarray
    shifts_hours: np.ndarray
    objective: float
    converged: bool
    optimized: np.ndarray  # redistributed distribution (shares, sums to 1)


def _shift_index_matrix() -> np.ndarray:
    """idx[q, i] = source bin of offset grid[q] when shifted by grid[i]."""
    lookup = {int(o): r for r, o in enumerate(OFFSET_GRID_HOURS)}
    idx = np.empty((HOURS, HOURS), dtype=np.intp)
    for q, oq in enumerate(OFFSET_GRID_HOURS):
        for i, si in enumerate(OFFSET_GRID_HOURS):
            idx[q, i] = lookup[int(wrap_offset_hours(int(oq) - int(si)))]
    return idx


def _project_feasible(
    w: np.ndarray, sin_theta: np.ndarray, rounds: int = 50
) -> np.ndarray:
    """Alternate box clipping with projection onto the two equalities."""
    ones = np.ones_like(w)
    basis = np.stack([ones, sin_theta])
    gram = basis @ basis.T
    target = np.array([1.0, 0.0])
    for _ in range(rounds):
        w = np.clip(w, 0.0, 1.0)
        correction = np.linalg.solve(gram, basis @ w - target)
        w = w - basis.T @ correction
        if (
            w.min() >= -SIMPLEX_TOL
            and abs(w.sum() - 1.0) <= SIMPLEX_TOL
            and abs(w @ sin_theta) <= BARYCENTER_TOL
        ):
            break
    return np.clip(w, 0.0, 1.0)


def deconvolve(
    pure_distribution: dict[int, float] | np.ndarray,
    real_distribution: dict[int, float] | np.ndarray,
) -> DeconvolutionResult:
    """Spread each offset's mass around its center to match real shares.

    A single displacement kernel ``w`` over relative hour shifts is fitted:
    the redistributed distribution is the circular convolution of the
    inferred one with ``w``. The kernel must be a probability vector
    (0 <= w_i <= 1, sum w = 1) whose circular barycenter stays at zero shift
    (sum_i w_i sin(theta_i) = 0), so every community's directional center of
    mass remains anchored at its inferred offset. The kernel minimizing the
    squared distance to the real shares is found with SLSQP from the feasible
    identity start; the achieved Pearson correlation is reported as the
    alignment objective.
    """
    pure = _as_grid_vector(pure_distribution)
    real = _as_grid_vector(real_distribution)
    pure = pure / pure.sum()
    real = real / real.sum()
    theta = OFFSET_GRID_HOURS * (2.0 * np.pi / HOURS)
    sin_theta = np.sin(theta)
    source = pure[_shift_index_matrix()]  # (target_bin, shift) -> share moved

    def objective(w: np.ndarray) -> float:
        diff = source @ w - real
        return float(diff @ diff)

    def gradient(w: np.ndarray) -> np.ndarray:
        return 2.0 * source.T @ (source @ w - real)

    start = np.zeros(HOURS)
    start[np.nonzero(OFFSET_GRID_HOURS == 0)[0][0]] = 1.0  # identity kernel
    constraints = [
        {"type": "eq", "fun": lambda w: w.sum() - 1.0, "jac": lambda w: np.ones(HOURS)},
        {"type": "eq", "fun": lambda w: w @ sin_theta, "jac": lambda w: sin_theta},
    ]
    result = optimize.minimize(
        objective,
        start,
        jac=gradient,
        method="SLSQP",
        bounds=[(0.0, 1.0)] * HOURS,
        constraints=constraints,
        options={"maxiter": 1000, "ftol": 1e-16},
    )
    weights = _project_feasible(np.asarray(result.x, dtype=np.float64), sin_theta)
    feasible = (
        abs(weights.sum() - 1.0) <= SIMPLEX_TOL
        and abs(weights @ sin_theta) <= BARYCENTER_TOL
        and weights.min() >= 0.0
        and weights.max() <= 1.0
    )
    if not feasible:
        logger.warning("deconvolution result failed feasibility tolerances")
    optimized = source @ weights
    alignment = float(stats.pearsonr(optimized, real).statistic)
    return DeconvolutionResult(
        weights=weights,
        theta=theta,
        shifts_hours=OFFSET_GRID_HOURS.astype(np.float64),
        objective=alignment,
        converged=bool(result.success) and feasible,
        optimized=optimized,
    )


def _as_grid_vector(dist: dict[int, float] | np.ndarray) -> np.ndarray:
    if isinstance(dist, dict):
        vec = np.array([float(dist.get(int(o), 0.0)) for o in OFFSET_GRID_HOURS])
    else:
        vec = np.asarray(dist, dtype=np.float64)
        if vec.shape != (HOURS,):
            raise ValueError("expected a 24-bin distribution on the hour grid")
    if np.any(vec < 0) or vec.sum() <= 0:
        raise DataError("distribution must be non-negative with positive mass")
    return vec


def load_population_benchmark() -> dict[str, np.ndarray]:
    """Bundled reference table: real, inferred, and redistributed shares (%)."""
    path = resources.files("circtz.data").joinpath("population_benchmark.csv")
    offsets, real, inferred, optimized = [], [], [], []
    with path.open() as fh:
        for row in csv.DictReader(fh):
            offsets.append(int(row["offset_hours"]))
            real.append(float(row["real_share"]))
            inferred.append(float(row["inferred_share"]))
            optimized.append(float(row["optimized_share"]))
    if offsets != [int(o) for o in OFFSET_GRID_HOURS]:
        raise DataError("bundled population table is misaligned")
    return {
        "offset_hours": np.array(offsets),
        "real_share": np.array(real),
        "inferred_share": np.array(inferred),
        "optimized_share": np.array(optimized),
    }


# ---------------------------------------------------------------------------
# CSV writers

def write_density_csv(path: str, yearly: dict[int, dict[int, float]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["year", "offset_hours", "count", "share"])
        for year in sorted(yearly):
            total = sum(yearly[year].values())
            for offset in OFFSET_GRID_HOURS:
                count = yearly[year].get(int(offset), 0.0)
                share = count / total if total > 0 else 0.0
                writer.writerow(
                    [year, int(offset), format_float(count), format_float(share)]
                )


def write_gini_csv(path: str, yearly: dict[int, dict[int, float]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["year", "gini"])
        for year in sorted(yearly):
            mass = np.array(
                [yearly[year].get(int(o), 0.0) for o in OFFSET_GRID_HOURS]
            )
            try:
                value = gini(mass)
            except DataError:
                continue
            writer.writerow([year, format_float(value)])


def write_growth_csv(path: str, growth: dict[int, dict[int, float]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["year", "offset_hours", "log2_fold_change"])
        for year in sorted(growth):
            for offset in OFFSET_GRID_HOURS:
                writer.writerow(
                    [year, int(offset), format_float(growth[year][int(offset)])]
                )


def write_deconvolution_csv(
    path: str,
    result: DeconvolutionResult,
    pure: np.ndarray,
    real: np.ndarray,
) -> None:
    """One row per offset bin; kernel columns ride along on the same rows."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "offset_hours",
                "real_share",
                "pure_share",
                "optimized_share",
                "shift_hours",
                "kernel_weight",
                "theta_radians",
            ]
        )
        for i, offset in enumerate(OFFSET_GRID_HOURS):
            writer.writerow(
                [
                    int(offset),
                    format_float(real[i]),
                    format_float(pure[i]),
                    format_float(result.optimized[i]),
                    int(result.shifts_hours[i]),
                    format_float(result.weights[i]),
                    format_float(result.theta[i]),
                ]
            )


def load_population_csv(path: str) -> dict[int, float]:
    """External population shares: CSV ``offset_minutes,real_share``."""
    out: dict[int, float] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header[:2]] != [
            "offset_minutes",
            "real_share",
        ]:
            raise DataError(f"{path}: expected header 'offset_minutes,real_share'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                offset = offset_hour_bin(int(row[0]))
                out[offset] = out.get(offset, 0.0) + float(row[1])
            except (ValueError, IndexError) as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
    return out
