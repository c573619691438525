"""Circadian feature extraction from detrended hourly series.

Three complementary views of the daily cycle are computed per community:

* an hour-of-day activity profile (a 24-bin probability distribution),
* a smooth periodic intensity curve fitted by a cyclic-spline Poisson GAM,
* time-frequency features from a complex Morlet transform at the one-day
  scale (power, phase, coherence, and day-over-day phase stability by hour).

All features are rotation-covariant: shifting a series by a whole number of
hours rotates every 24-vector by the same amount, which is what makes offset
inference from them possible.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

from ._kernels import morlet_coefficients
from .preprocess import STAGE_DETRENDED, ActivitySeries, DetrendConfig, preprocess
from .util import DataError, wrap_angle

logger = logging.getLogger(__name__)

HOURS = 24
DEFAULT_SCALE_HOURS = 24.0
DEFAULT_BASIS_SIZE = 24
DEFAULT_GRID_STEP = 0.1


@dataclass(frozen=True)
class HourlyProfile:
    """Normalized hour-of-day activity distribution (24 bins, UTC)."""

    p: np.ndarray
    support_counts: np.ndarray | None = None
    degenerate: bool = False

    def __post_init__(self) -> None:
        p = np.asarray(self.p, dtype=np.float64)
        if p.shape != (HOURS,):
            raise ValueError("profile must have 24 bins")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("profile must be a probability distribution")
        object.__setattr__(self, "p", p)


@dataclass(frozen=True)
class SmoothedProfile:
    """Cyclic-spline smoothed expected activity level by hour.

    ``lam`` holds the fitted level at the 24 integer hours; ``lam_grid`` the
    same curve on the fine search grid used for sub-hour minimum extraction.
    """

    lam: np.ndarray
    spline_coeffs: np.ndarray | None
    basis_size: int
    grid: np.ndarray | None = None
    lam_grid: np.ndarray | None = None
    converged: bool = True


@dataclass(frozen=True)
class RhythmFeatures:
    """Hour-of-day aggregates of the one-day-scale Morlet coefficients.

    ``power``     mean squared magnitude per hour,
    ``mean_phase`` circular mean coefficient angle per hour,
    ``coherence`` resultant length of the angles per hour (0..1),
    ``stability`` mean wrapped absolute day-over-day phase change per hour.
    """

    power: np.ndarray
    mean_phase: np.ndarray
    coherence: np.ndarray
    stability: np.ndarray
    scale_hours: float


@dataclass(frozen=True)
class ScalarFeatures:
    """Argmin summaries feeding the anchor-based inference methods."""

    h_min: int
    h_smooth_min: float
    h_stable_phase: int


@dataclass(frozen=True)
class CommunityFeatures:
    """Everything the inference methods need for one community."""

    profile: HourlyProfile
    smoothed: SmoothedProfile
    rhythm: RhythmFeatures
    scalars: ScalarFeatures


def hourly_profile(series: ActivitySeries) -> HourlyProfile:
    """Aggregate a detrended series into a 24-bin UTC hour-of-day distribution.

    Detrended values are shifted by their minimum so the aggregates are
    non-negative before normalization. An all-equal series carries no hour
    signal and yields the uniform distribution, flagged ``degenerate``.
    """
    if series.stage != STAGE_DETRENDED:
        raise ValueError("hourly_profile expects a detrended series")
    shifted = series.counts - series.counts.min()
    hours = series.hour_of_day
    sums = np.bincount(hours, weights=shifted, minlength=HOURS)
    # total accumulated in sorted order: invariant under bin rotation, so
    # rotating the series rotates p bitwise-exactly
    total = float(np.sort(sums).sum())
    if total <= 0:
        logger.warning("all-equal series: falling back to a uniform profile")
        return HourlyProfile(
            p=np.full(HOURS, 1.0 / HOURS), support_counts=sums, degenerate=True
        )
    return HourlyProfile(p=sums / total, support_counts=sums)


def _cardinal_cubic_bspline(u: np.ndarray) -> np.ndarray:
    """Cubic B-spline bump on (-2, 2) in knot units; integer shifts sum to 1."""
    a = np.abs(np.asarray(u, dtype=np.float64))
    out = np.zeros_like(a)
    inner = a < 1
    outer = (a >= 1) & (a < 2)
    out[inner] = (4.0 - 6.0 * a[inner] ** 2 + 3.0 * a[inner] ** 3) / 6.0
    out[outer] = (2.0 - a[outer]) ** 3 / 6.0
    return out


def cyclic_spline_basis(
    hours: np.ndarray, basis_size: int, period: float = 24.0
) -> np.ndarray:
    """Periodic cubic B-spline basis with evenly spaced knots on [0, period).

    Column j is the bump centered on knot j wrapped around the circle, so the
    fitted curve is continuous and smooth across the 23 -> 0 boundary.
    """
    if basis_size < 4:
        raise ValueError("need at least 4 cyclic basis functions")
    spacing = period / basis_size
    pos = np.asarray(hours, dtype=np.float64)[:, None] / spacing
    j = np.arange(basis_size)[None, :]
    d = pos - j
    d = (d + basis_size / 2.0) % basis_size - basis_size / 2.0
    return _cardinal_cubic_bspline(d)


def _helmert_complement(k: int) -> np.ndarray:
    """Orthonormal basis of the subspace of R^k orthogonal to the ones vector.

    The spline bumps sum to one everywhere, so the constant function is
    representable both by the intercept and by equal spline coefficients.
    Fitting in this complement removes that null direction while keeping the
    ridge penalty symmetric under circular permutation of the coefficients.
    """
    z = np.zeros((k, k - 1))
    for j in range(1, k):
        z[:j, j - 1] = 1.0
        z[j, j - 1] = -float(j)
        z[:, j - 1] /= np.sqrt(j * (j + 1.0))
    return z


def fit_cyclic_gam(
    counts: np.ndarray,
    basis_size: int = DEFAULT_BASIS_SIZE,
    ridge: float = 1e-8,
    tol: float = 1e-8,
    max_iter: int = 100,
    grid_step: float = DEFAULT_GRID_STEP,
) -> SmoothedProfile:
    """Fit a Poisson GAM with a cyclic cubic spline over the 24 hour bins.

    The log level is an intercept plus a periodic cubic B-spline expansion,
    estimated by iteratively reweighted least squares under the Poisson
    likelihood with a small ridge penalty on the non-intercept coefficients.
    The fitted curve is also evaluated on a ``grid_step``-spaced grid for
    sub-hour minimum extraction.
    """
    y = np.asarray(counts, dtype=np.float64)
    if y.shape != (HOURS,):
        raise ValueError("expected 24 hourly aggregates")
    if np.any(y < 0):
        raise ValueError("aggregates must be non-negative")
    if not np.any(y > 0):
        raise DataError("cannot smooth an all-zero profile")

    basis = cyclic_spline_basis(np.arange(HOURS), basis_size) - 1.0 / basis_size
    reduce_map = _helmert_complement(basis_size)
    design = np.column_stack([np.ones(HOURS), basis @ reduce_map])
    penalty = np.full(basis_size, ridge)
    penalty[0] = 0.0

    coef = np.zeros(basis_size)
    coef[0] = np.log(y.mean())
    converged = False
    for _ in range(max_iter):
        eta = np.clip(design @ coef, -50.0, 50.0)
        mu = np.exp(eta)
        z = eta + (y - mu) / mu
        wdesign = design * mu[:, None]
        lhs = wdesign.T @ design + np.diag(penalty)
        rhs = wdesign.T @ z
        new = np.linalg.solve(lhs, rhs)
        step = float(np.max(np.abs(new - coef)))
        coef = new
        if step < tol:
            converged = True
            break
    if not converged:
        logger.warning("cyclic GAM did not converge in %d iterations", max_iter)

    # canonical coefficients: intercept plus per-bump weights summing to zero
    beta = np.concatenate([[coef[0]], reduce_map @ coef[1:]])
    grid = np.arange(int(round(HOURS / grid_step))) * grid_step
    grid_basis = cyclic_spline_basis(grid, basis_size) - 1.0 / basis_size
    lam = np.exp(np.clip(design @ coef, -50.0, 50.0))
    lam_grid = np.exp(
        np.clip(coef[0] + grid_basis @ (reduce_map @ coef[1:]), -50.0, 50.0)
    )
    return SmoothedProfile(
        lam=lam,
        spline_coeffs=beta,
        basis_size=basis_size,
        grid=grid,
        lam_grid=lam_grid,
        converged=converged,
    )


def cwt_features(
    series: ActivitySeries,
    scale_hours: float = DEFAULT_SCALE_HOURS,
    band: tuple[float, float] | None = None,
) -> RhythmFeatures:
    """Morlet power/phase features at the one-day scale, aggregated by hour.

    Coefficients within one wavelet support radius (4 scales) of either edge
    are discarded before aggregation to avoid boundary artifacts, so the
    series must span at least one full wavelet support. When ``band`` is
    given, power is averaged over integer scales in that range while phase
    quantities stay at the center scale.
    """
    if series.stage != STAGE_DETRENDED:
        raise ValueError("cwt_features expects a detrended series")
    x = series.counts
    scales = [float(scale_hours)]
    if band is not None:
        lo, hi = band
        if not (0 < lo <= hi):
            raise ValueError("invalid scale band")
        scales = [float(s) for s in np.arange(int(np.ceil(lo)), int(np.floor(hi)) + 1)]
        if scale_hours not in scales:
            scales.append(float(scale_hours))
    max_half = int(round(4.0 * max(scales)))
    if len(x) < 2 * max_half + 1:
        raise DataError(
            f"insufficient span: need at least {2 * max_half + 1} hours for "
            f"scale {max(scales):g}, got {len(x)}"
        )

    center = morlet_coefficients(x, scale_hours)
    center_half = int(round(4.0 * scale_hours))
    crop = max_half - center_half
    coeff = center[crop : len(center) - crop] if crop else center

    power_stack = []
    for s in scales:
        half = int(round(4.0 * s))
        c = morlet_coefficients(x, s)
        off = max_half - half
        c = c[off : len(c) - off] if off else c
        power_stack.append(np.abs(c) ** 2)
    power_vals = np.mean(power_stack, axis=0)

    n = np.arange(max_half, max_half + len(coeff))
    hours = (series.start_hour + n) % HOURS
    phase = np.angle(coeff)
    power, mean_phase, coherence, stability = aggregate_rhythm(
        hours, power_vals, phase
    )
    return RhythmFeatures(
        power=power,
        mean_phase=mean_phase,
        coherence=coherence,
        stability=stability,
        scale_hours=float(scale_hours),
    )


def aggregate_rhythm(
    hours: np.ndarray, power_vals: np.ndarray, phase: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Hour-of-day aggregation of per-coefficient power and phase.

    Per hour bin: mean power, circular mean phase, resultant length of the
    phases (coherence), and the mean wrapped absolute phase change between
    consecutive visits (stability; NaN with fewer than two visits). Every
    hour must receive at least one coefficient.
    """
    k_h = np.bincount(hours, minlength=HOURS).astype(np.float64)
    if np.any(k_h == 0):
        raise DataError("insufficient span: some hours have no valid coefficients")
    power = np.bincount(hours, weights=power_vals, minlength=HOURS) / k_h
    sin_sum = np.bincount(hours, weights=np.sin(phase), minlength=HOURS)
    cos_sum = np.bincount(hours, weights=np.cos(phase), minlength=HOURS)
    mean_phase = np.arctan2(sin_sum / k_h, cos_sum / k_h)
    coherence = np.hypot(sin_sum / k_h, cos_sum / k_h)

    stability = np.full(HOURS, np.nan)
    for h in range(HOURS):
        idx = np.nonzero(hours == h)[0]
        if len(idx) < 2:
            continue
        deltas = wrap_angle(np.diff(phase[idx]))
        stability[h] = float(np.mean(np.abs(deltas)))
    return power, mean_phase, coherence, stability


def extract_scalars(
    profile: HourlyProfile,
    smoothed: SmoothedProfile,
    rhythm: RhythmFeatures,
) -> ScalarFeatures:
    """Arg-extrema of the three feature views (smallest index wins ties)."""
    h_min = int(np.argmin(profile.p))
    if smoothed.lam_grid is not None:
        idx = int(np.argmin(smoothed.lam_grid))
        h_smooth_min = idx / 10.0 if smoothed.grid is None else float(smoothed.grid[idx])
    else:
        h_smooth_min = float(np.argmin(smoothed.lam))
    if np.all(np.isnan(rhythm.stability)):
        raise DataError("phase stability undefined: series too short")
    h_stable_phase = int(np.nanargmin(rhythm.stability))
    return ScalarFeatures(
        h_min=h_min, h_smooth_min=h_smooth_min, h_stable_phase=h_stable_phase
    )


def featurize(
    series: ActivitySeries,
    detrend: DetrendConfig = DetrendConfig(),
    scale_hours: float = DEFAULT_SCALE_HOURS,
    band: tuple[float, float] | None = None,
    basis_size: int = DEFAULT_BASIS_SIZE,
) -> CommunityFeatures | None:
    """Preprocess a raw series and extract all features.

    Returns None when the sparsity gate rejects the series; raises DataError
    for series too short or degenerate to featurize.
    """
    detrended = preprocess(series, detrend)
    if detrended is None:
        return None
    profile = hourly_profile(detrended)
    if profile.degenerate:
        raise DataError("degenerate (all-equal) series cannot be featurized")
    smoothed = fit_cyclic_gam(profile.support_counts, basis_size=basis_size)
    rhythm = cwt_features(detrended, scale_hours=scale_hours, band=band)
    scalars = extract_scalars(profile, smoothed, rhythm)
    return CommunityFeatures(
        profile=profile, smoothed=smoothed, rhythm=rhythm, scalars=scalars
    )


# ---------------------------------------------------------------------------
# feature table serialization

_VECTOR_FIELDS = ("p", "lambda", "power", "phase", "coherence", "stability")
_SCALAR_FIELDS = ("h_min", "h_smooth_min", "h_stable_phase")


def feature_csv_header() -> list[str]:
    cols = ["community_id", "offset_minutes"]
    for name in _VECTOR_FIELDS:
        cols.extend(f"{name}_{h:02d}" for h in range(HOURS))
    cols.extend(_SCALAR_FIELDS)
    return cols


def write_features_csv(
    path: str,
    items: list[tuple[str, int | None, CommunityFeatures]],
) -> None:
    """Dump per-community features; ``offset_minutes`` empty when unlabeled."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(feature_csv_header())
        for community_id, offset, feats in sorted(items, key=lambda it: it[0]):
            row: list[str] = [community_id, "" if offset is None else str(int(offset))]
            vectors = (
                feats.profile.p,
                feats.smoothed.lam,
                feats.rhythm.power,
                feats.rhythm.mean_phase,
                feats.rhythm.coherence,
                feats.rhythm.stability,
            )
            for vec in vectors:
                row.extend(repr(float(v)) for v in vec)
            row.append(str(feats.scalars.h_min))
            row.append(repr(float(feats.scalars.h_smooth_min)))
            row.append(str(feats.scalars.h_stable_phase))
            writer.writerow(row)


def read_features_csv(path: str) -> list[tuple[str, int | None, CommunityFeatures]]:
    """Load a feature table written by :func:`write_features_csv`."""
    expected = feature_csv_header()
    out: list[tuple[str, int | None, CommunityFeatures]] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != expected:
            raise DataError(f"{path}: unexpected feature table header")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(expected):
                raise DataError(f"{path}:{lineno}: wrong column count")
            community_id = row[0]
            offset = None if row[1] == "" else int(row[1])
            vals = [float(v) for v in row[2:]]
            vecs = [
                np.asarray(vals[i * HOURS : (i + 1) * HOURS])
                for i in range(len(_VECTOR_FIELDS))
            ]
            p, lam, power, phase, coherence, stability = vecs
            scal = vals[len(_VECTOR_FIELDS) * HOURS :]
            feats = CommunityFeatures(
                profile=HourlyProfile(p=p),
                smoothed=SmoothedProfile(
                    lam=lam, spline_coeffs=None, basis_size=0
                ),
                rhythm=RhythmFeatures(
                    power=power,
                    mean_phase=phase,
                    coherence=coherence,
                    stability=stability,
                    scale_hours=DEFAULT_SCALE_HOURS,
                ),
                scalars=ScalarFeatures(
                    h_min=int(scal[0]),
                    h_smooth_min=float(scal[1]),
                    h_stable_phase=int(scal[2]),
                ),
            )
            out.append((community_id, offset, feats))
    return out
