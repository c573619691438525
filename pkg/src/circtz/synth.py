"""Synthetic community generator with known ground-truth offsets.

Counts are drawn from an hourly Poisson process whose local-time intensity
has a unique minimum at a configurable lull hour; the series is expressed in
UTC by rotating that intensity by the community's offset. Two intensity
shapes are available:

* ``cosine`` -- exp(concentration * cos(...)), a broad smooth trough;
* ``cusp``   -- log-intensity linear in circular distance from the lull,
  giving a sharply localized minimum ("clean trough").

``generate_corpus`` can reuse one base draw per member index across all
offset classes (``rotate_families=True``): classes then differ by an exact
whole-hour rotation, which makes rotation-covariance checks exact and keeps
class comparisons free of generator noise.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

import numpy as np

from .ingest import GroundTruthLabel, LabeledCorpus
from .preprocess import ActivitySeries, rotate
from .util import DataError, derive_seed

# epoch hour of 2015-01-01T00:00Z; keeps synthetic data in a plausible era
DEFAULT_START_EPOCH_HOUR = 394_464

TREND_KINDS = ("none", "linear_growth", "spike")
TROUGH_SHAPES = ("cosine", "cusp")


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of one synthetic community."""

    offset_minutes: int = 0
    n_days: int = 180
    mean_daily_events: float = 200.0
    trough_hour_local: float = 4.0
    trough_depth: float = 0.9
    concentration: float = 2.4
    trough_shape: str = "cusp"
    trend: str = "none"
    phase_jitter_rad: float = 0.0
    mixture_offset_minutes: int | None = None
    mixture_weight: float = 0.0
    start_epoch_hour: int = DEFAULT_START_EPOCH_HOUR
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_days < 1:
            raise ValueError("n_days must be >= 1")
        if self.mean_daily_events <= 0:
            raise ValueError("mean_daily_events must be positive")
        if not 0 < self.trough_depth <= 1:
            raise ValueError("trough_depth must be in (0, 1]")
        if self.trend not in TREND_KINDS:
            raise ValueError(f"trend must be one of {TREND_KINDS}")
        if self.trough_shape not in TROUGH_SHAPES:
            raise ValueError(f"trough_shape must be one of {TROUGH_SHAPES}")
        if not 0 <= self.mixture_weight < 1:
            raise ValueError("mixture_weight must be in [0, 1)")


def _circular_distance(h: np.ndarray, center: float) -> np.ndarray:
    d = np.abs(h - center) % 24.0
    return np.minimum(d, 24.0 - d)


def _shape(local_hour: np.ndarray, spec: SynthSpec) -> np.ndarray:
    """Unnormalized intensity as a function of local hour; min at the lull."""
    if spec.trough_shape == "cosine":
        peak = spec.trough_hour_local + 12.0
        g = np.exp(spec.concentration * np.cos(2.0 * np.pi * (local_hour - peak) / 24.0))
    else:
        g = np.exp(
            spec.concentration
            * _circular_distance(local_hour, spec.trough_hour_local)
            / 12.0
        )
    # affine floor so min/max hits the requested trough depth where reachable
    lo, hi = g.min(), g.max()
    target = 1.0 - spec.trough_depth
    floor = (target * hi - lo) / (1.0 - target) if target * hi > lo else 0.0
    return g + floor


def hourly_intensity(spec: SynthSpec) -> np.ndarray:
    """Expected UTC-hour event rate (24-vector) implied by the spec."""
    hours = np.arange(24.0)
    local = (hours + spec.offset_minutes / 60.0) % 24.0
    g = _shape(local, spec)
    if spec.mixture_offset_minutes is not None and spec.mixture_weight > 0:
        local2 = (hours + spec.mixture_offset_minutes / 60.0) % 24.0
        g2 = _shape(local2, spec)
        g = (1.0 - spec.mixture_weight) * g / g.mean() + spec.mixture_weight * g2 / g2.mean()
    return g / g.mean() * (spec.mean_daily_events / 24.0)


def _trend_multiplier(spec: SynthSpec, n_hours: int, rng: np.random.Generator) -> np.ndarray:
    if spec.trend == "none":
        return np.ones(n_hours)
    if spec.trend == "linear_growth":
        return np.linspace(0.5, 1.5, n_hours)
    # spike: a 48 h burst at 20x baseline, placed deterministically mid-series
    mult = np.ones(n_hours)
    start = max(0, int(0.4 * n_hours))
    mult[start : min(n_hours, start + 48)] = 20.0
    return mult


def generate(
    spec: SynthSpec, community_id: str = "synthetic"
) -> tuple[ActivitySeries, GroundTruthLabel]:
    """Draw one community's hourly counts plus its ground-truth label."""
    rng = np.random.default_rng(spec.seed)
    n_hours = spec.n_days * 24
    lam24 = hourly_intensity(spec)
    if spec.phase_jitter_rad > 0:
        # per-day circular shift of the intensity; linear interp between bins
        lam = np.empty(n_hours)
        base_hours = np.arange(24.0)
        for d in range(spec.n_days):
            delta_h = rng.normal(0.0, spec.phase_jitter_rad) * 24.0 / (2.0 * np.pi)
            pos = (base_hours - delta_h) % 24.0
            i0 = np.floor(pos).astype(int)
            frac = pos - i0
            day = lam24[i0] * (1.0 - frac) + lam24[(i0 + 1) % 24] * frac
            lam[d * 24 : (d + 1) * 24] = day
    else:
        lam = np.tile(lam24, spec.n_days)
    lam = lam * _trend_multiplier(spec, n_hours, rng)
    counts = rng.poisson(lam).astype(np.float64)
    series = ActivitySeries(start_hour=spec.start_epoch_hour, counts=counts)
    label = GroundTruthLabel(
        community_id=community_id, offset_minutes=spec.offset_minutes
    )
    return series, label


def generate_corpus(
    offsets_minutes: list[int],
    per_class: int | dict[int, int],
    template: SynthSpec = SynthSpec(),
    rotate_families: bool = True,
    seed: int = 0,
    member_start_step_hours: int = 0,
) -> LabeledCorpus:
    """Build a labeled corpus covering the requested offset classes.

    ``per_class`` is either a single member count or a per-offset map; every
    class must get at least 2 members. With ``rotate_families`` (integer-hour
    offsets only), member ``i`` of every class is the same base draw rotated
    to the class offset, so classes are exact rotations of one another.
    ``member_start_step_hours`` staggers member start times (useful to spread
    first-activity years for the longitudinal analytics).
    """
    sizes = (
        {int(o): int(per_class) for o in offsets_minutes}
        if isinstance(per_class, int)
        else {int(o): int(per_class[o]) for o in offsets_minutes}
    )
    if any(n < 2 for n in sizes.values()):
        raise ValueError("every offset class needs at least 2 members")
    if rotate_families and any(o % 60 != 0 for o in sizes):
        raise ValueError("rotate_families requires whole-hour offsets")

    def member_start(i: int) -> int:
        return template.start_epoch_hour + i * member_start_step_hours

    series: dict[str, ActivitySeries] = {}
    labels: dict[str, GroundTruthLabel] = {}
    bases: dict[int, ActivitySeries] = {}
    if rotate_families:
        for i in range(max(sizes.values())):
            member_spec = dataclasses.replace(
                template,
                offset_minutes=0,
                start_epoch_hour=member_start(i),
                seed=derive_seed(seed, "base", i),
            )
            bases[i], _ = generate(member_spec)

    for offset in sorted(sizes):
        for i in range(sizes[offset]):
            cid = f"s{offset:+05d}_{i:02d}"
            if rotate_families:
                # rotating a series dh hours later moves its trough to
                # UTC (lull + dh), i.e. realizes offset -dh
                series[cid] = rotate(bases[i], -offset // 60)
            else:
                spec = dataclasses.replace(
                    template,
                    offset_minutes=offset,
                    start_epoch_hour=member_start(i),
                    seed=derive_seed(seed, "member", offset, i),
                )
                series[cid], _ = generate(spec, cid)
            labels[cid] = GroundTruthLabel(community_id=cid, offset_minutes=offset)
    return LabeledCorpus(labels=labels, series=series)


def default_corpus_config() -> dict:
    """Small demonstration corpus: 24 offset classes, staggered start years."""
    return {
        "offsets_minutes": [o * 60 for o in range(-11, 13)],
        "per_class": 2,
        "n_days": 120,
        "mean_daily_events": 150.0,
        # 2012-01-02T00:00Z; the second member starts two years later
        "start_epoch_hour": 368_184,
        "member_start_step_hours": 17_544,
        "rotate_families": True,
    }


def spec_from_json(path: str) -> dict:
    """Load a corpus description: template fields plus corpus-level keys."""
    with open(path) as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise DataError(f"{path}: expected a JSON object")
    return raw


def corpus_from_config(config: dict, seed: int = 0) -> LabeledCorpus:
    """Build a corpus from a parsed JSON config (see ``spec_from_json``)."""
    known = {f.name for f in dataclasses.fields(SynthSpec)}
    template_fields = {k: v for k, v in config.items() if k in known}
    try:
        template = SynthSpec(**template_fields)
    except (TypeError, ValueError) as exc:
        raise DataError(f"invalid synthetic template: {exc}") from exc
    offsets = config.get("offsets_minutes", [o * 60 for o in range(-11, 13)])
    per_class = config.get("per_class", 2)
    if isinstance(per_class, dict):
        per_class = {int(k): int(v) for k, v in per_class.items()}
    rotate_fams = bool(config.get("rotate_families", True))
    return generate_corpus(
        [int(o) for o in offsets],
        per_class,
        template=template,
        rotate_families=rotate_fams,
        seed=seed,
        member_start_step_hours=int(config.get("member_start_step_hours", 0)),
    )
