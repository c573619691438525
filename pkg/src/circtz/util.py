"""Shared helpers: circular arithmetic, seed derivation, file plumbing."""

from __future__ import annotations

import gzip
import hashlib
import math
from typing import IO

import numpy as np

MINUTES_PER_DAY = 1440
HOURS_PER_DAY = 24


class DataError(ValueError):
    """Invalid input data (bad file contents, contract violations)."""


def wrap_offset_minutes(minutes: float) -> float:
    """Map a UTC offset in minutes onto the canonical circle (-720, +720]."""
    r = (minutes + 720) % MINUTES_PER_DAY - 720
    return 720.0 if r == -720 else r


def wrap_offset_hours(hours: float) -> float:
    """Map a UTC offset in hours onto (-12, +12]."""
    r = (hours + 12) % HOURS_PER_DAY - 12
    return 12.0 if r == -12 else r


def round_half_away(value: float) -> int:
    """Round to the nearest integer with halves away from zero (+5.5 -> +6)."""
    return int(math.floor(value + 0.5)) if value >= 0 else int(math.ceil(value - 0.5))


def snap_offset_minutes(minutes: float, grid: int = 15) -> int:
    """Snap an offset to the nearest grid step (default 15 min), wrapped."""
    snapped = grid * round_half_away(minutes / grid)
    return int(wrap_offset_minutes(snapped))


def circular_distance_hours(a: float, b: float) -> float:
    """Shortest distance between two offsets on the 24 h circle, in [0, 12]."""
    d = abs(a - b) % HOURS_PER_DAY
    return min(d, HOURS_PER_DAY - d)


def wrap_angle(angle: np.ndarray | float) -> np.ndarray | float:
    """Wrap angles in radians to (-pi, pi]."""
    return np.angle(np.exp(1j * np.asarray(angle, dtype=np.float64)))


def circular_mean(angles: np.ndarray) -> float:
    """Mean direction of angles in radians (undefined input -> 0 resultant)."""
    return float(np.arctan2(np.mean(np.sin(angles)), np.mean(np.cos(angles))))


def resultant_length(angles: np.ndarray) -> float:
    """Length of the mean resultant vector, in [0, 1]."""
    return float(np.hypot(np.mean(np.sin(angles)), np.mean(np.cos(angles))))


def derive_seed(*parts: object) -> int:
    """Deterministic 64-bit seed from arbitrary labelled parts.

    Stable across runs and processes (hashlib, not hash()), so every stage of
    a run can draw an independent stream from one root seed.
    """
    text = "\x1f".join(repr(p) for p in parts)
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def open_maybe_gzip(path: str, mode: str = "rt") -> IO:
    """Open a text file, transparently decompressing ``*.gz``."""
    if str(path).endswith(".gz"):
        return gzip.open(path, mode)
    return open(path, mode)


def format_float(value: float) -> str:
    """Canonical float formatting for CSV output (repr round-trip, plain nan)."""
    if isinstance(value, float) and math.isnan(value):
        return "nan"
    return repr(float(value))
