"""UTC offset inference from circadian features.

Two paradigms are exposed through six named methods:

* Anchor methods assume the quietest local hour is 4 a.m. and convert an
  observed UTC lull hour into an offset: ``ActivityLull`` (raw histogram
  minimum), ``ActivityLullSmooth`` (spline-smoothed minimum), and
  ``MostStableRhythm`` (hour of most stable wavelet phase).
* Reference methods inherit the offset of the nearest labeled community
  under KL divergence: ``ActivityCounts`` (hourly profile),
  ``ActivityCountsSmooth`` (normalized smoothed curve), and ``Rhythm``
  (normalized wavelet power).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .features import CommunityFeatures
from .util import snap_offset_minutes

ANCHOR_METHODS = ("ActivityLull", "ActivityLullSmooth", "MostStableRhythm")
REFERENCE_METHODS = ("ActivityCounts", "ActivityCountsSmooth", "Rhythm")
METHODS = (
    "ActivityCounts",
    "ActivityLull",
    "ActivityCountsSmooth",
    "ActivityLullSmooth",
    "Rhythm",
    "MostStableRhythm",
)

DEFAULT_LULL_HOUR = 4.0
KL_EPSILON = 1e-9


@dataclass(frozen=True)
class OffsetPrediction:
    """One method's inferred UTC offset for one community."""

    offset_minutes: int
    method: str
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not -720 <= self.offset_minutes <= 840:
            raise ValueError(f"offset {self.offset_minutes} out of range")


@dataclass(frozen=True)
class ReferenceEntry:
    community_id: str
    offset_minutes: int
    features: CommunityFeatures


class ReferencePool:
    """Immutable pool of labeled communities for nearest-reference inference."""

    def __init__(self, entries: list[ReferenceEntry]):
        if not entries:
            raise ValueError("reference pool must not be empty")
        self.entries = sorted(entries, key=lambda e: e.community_id)
        # comparison vectors per feature kind, computed once
        self._vectors = {
            kind: [feature_vector(e.features, kind) for e in self.entries]
            for kind in ("profile", "smoothed_profile", "normalized_power")
        }

    @classmethod
    def from_features(
        cls, labeled: dict[str, tuple[int, CommunityFeatures]]
    ) -> "ReferencePool":
        return cls(
            [
                ReferenceEntry(community_id=cid, offset_minutes=off, features=f)
                for cid, (off, f) in labeled.items()
            ]
        )

    def offsets(self) -> list[int]:
        return [e.offset_minutes for e in self.entries]


def anchor_offset(h_obs: float, h_lull: float = DEFAULT_LULL_HOUR) -> int:
    """Offset (minutes) implied by an observed UTC lull hour.

    Takes the circular difference between the assumed local lull and the
    observed one, mapped to (-12 h, +12 h] and snapped to the 15-minute grid.
    """
    if not 0 <= h_obs < 24:
        raise ValueError("h_obs must be in [0, 24)")
    offset_hours = ((h_lull - h_obs + 12.0) % 24.0) - 12.0
    return snap_offset_minutes(offset_hours * 60.0)


def kl_divergence(p: np.ndarray, q: np.ndarray, eps: float = KL_EPSILON) -> float:
    """Kullback-Leibler divergence D(p || q) with 0*ln(0) = 0.

    ``q`` is smoothed by ``eps`` so zero reference bins cannot blow up; this
    perturbs the exact-equality zero by O(eps).
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError("distributions must have equal length")
    q = (q + eps) / (1.0 + len(q) * eps)
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def feature_vector(features: CommunityFeatures, kind: str) -> np.ndarray:
    """Comparison distribution for a feature kind, normalized to sum 1."""
    if kind == "profile":
        return features.profile.p
    if kind == "smoothed_profile":
        lam = features.smoothed.lam
        return lam / lam.sum()
    if kind == "normalized_power":
        power = features.rhythm.power
        return power / power.sum()
    raise ValueError(f"unknown feature kind {kind!r}")


def nearest_reference(
    target: CommunityFeatures, pool: ReferencePool, feature_kind: str
) -> OffsetPrediction:
    """Inherit the offset of the pool entry with minimal KL divergence.

    Ties break on smallest divergence, then lexicographic community id (the
    pool is stored sorted by id).
    """
    p = feature_vector(target, feature_kind)
    vectors = pool._vectors[feature_kind]
    best_idx = 0
    best_div = np.inf
    for i, q in enumerate(vectors):
        d = kl_divergence(p, q)
        if d < best_div:
            best_div = d
            best_idx = i
    entry = pool.entries[best_idx]
    method = {
        "profile": "ActivityCounts",
        "smoothed_profile": "ActivityCountsSmooth",
        "normalized_power": "Rhythm",
    }[feature_kind]
    return OffsetPrediction(
        offset_minutes=entry.offset_minutes,
        method=method,
        diagnostics={"matched_ref": entry.community_id, "divergence": best_div},
    )


def run_method(
    method: str,
    features: CommunityFeatures,
    pool: ReferencePool | None = None,
    lull_hour: float = DEFAULT_LULL_HOUR,
) -> OffsetPrediction:
    """Dispatch one of the six inference methods."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; valid: {', '.join(METHODS)}")
    if method in REFERENCE_METHODS:
        if pool is None:
            raise ValueError(f"method {method} requires a reference pool")
        kind = {
            "ActivityCounts": "profile",
            "ActivityCountsSmooth": "smoothed_profile",
            "Rhythm": "normalized_power",
        }[method]
        return nearest_reference(features, pool, kind)

    if method == "ActivityLull":
        h_obs = float(features.scalars.h_min)
    elif method == "ActivityLullSmooth":
        h_obs = float(features.scalars.h_smooth_min)
    else:  # MostStableRhythm
        h_obs = float(features.scalars.h_stable_phase)
    return OffsetPrediction(
        offset_minutes=anchor_offset(h_obs, lull_hour),
        method=method,
        diagnostics={"lull_hour": h_obs},
    )
