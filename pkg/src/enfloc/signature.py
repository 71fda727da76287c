"""Location signatures: alignment, high-pass detail and pairwise correlation."""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _accel
from .core import CorrelationTable, DetailSignal, EnfSignal
from .errors import ConfigurationError, DegenerateSegmentError, InsufficientDataError

DEFAULT_FILTER_ORDER = 3
DEFAULT_SEGMENT_FRAMES = 600
DEFAULT_MAX_LAG = 120
MIN_OVERLAP = 10
WEAK_ALIGNMENT = 0.5


@dataclass(frozen=True)
class AlignmentResult:
    """``b(n) ~ a(n + lag_frames)`` maximizes the normalized cross-correlation."""

    lag_frames: int
    peak_correlation: float

    @property
    def weak(self) -> bool:
        return self.peak_correlation < WEAK_ALIGNMENT

    def to_dict(self) -> dict:
        return {"lag_frames": self.lag_frames, "peak_correlation": self.peak_correlation, "weak": self.weak}


def _search_order(max_lag):
    # 0, -1, +1, -2, +2, ...: a first-wins argmax then prefers small |lag|, then negative
    lags = [0]
    for k in range(1, max_lag + 1):
        lags += [-k, k]
    return np.array(lags, dtype=np.int64)


def align(a: EnfSignal, b: EnfSignal, max_lag_frames: int = DEFAULT_MAX_LAG) -> AlignmentResult:
    """Lag of ``b`` against ``a`` by mean-removed cross-correlation.

    A series delayed by ``k`` frames (``b(n) = a(n - k)``) yields ``-k``.
    """
    if max_lag_frames < 0:
        raise ConfigurationError("max_lag_frames must be non-negative")
    if not np.isclose(a.frame_period, b.frame_period, rtol=1e-9, atol=0.0):
        raise ConfigurationError("series must share frame_period")
    lags = _search_order(int(max_lag_frames))
    overlap = np.minimum(len(b), len(a) - lags) - np.maximum(0, -lags)
    if overlap.min() < MIN_OVERLAP:
        raise InsufficientDataError(
            f"overlap drops to {int(overlap.min())} frames within +/-{max_lag_frames} lags; "
            f"need at least {MIN_OVERLAP}"
        )
    scores = _accel.lagged_ncc(a.values, b.values, lags)
    k = int(np.argmax(scores))
    return AlignmentResult(int(lags[k]), float(np.clip(scores[k], -1.0, 1.0)))


def apply_alignment(a: EnfSignal, b: EnfSignal, lag_frames: int) -> tuple[EnfSignal, EnfSignal]:
    """Trim both series to their overlap under ``b(n) ~ a(n + lag)``."""
    lo = max(0, -lag_frames)
    hi = min(len(b), len(a) - lag_frames)
    if hi - lo < 1:
        raise InsufficientDataError("series do not overlap at this lag")
    return a.slice(lo + lag_frames, hi + lag_frames), b.slice(lo, hi)


def shift_frames(enf: EnfSignal, k: int) -> EnfSignal:
    """Delay a series by ``k`` frames (advance for negative ``k``), edge-padding.

    ``align(a, shift_frames(a, k))`` reports a lag of ``-k``.
    """
    v = enf.values
    if k >= 0:
        out = np.concatenate([np.full(k, v[0]), v[: v.size - k]])
    else:
        out = np.concatenate([v[-k:], np.full(-k, v[-1])])
    return enf.replace_values(out)


def highpass_detail(enf: EnfSignal, M: int = DEFAULT_FILTER_ORDER) -> DetailSignal:
    """Residual after subtracting a centered M-point moving average.

    Only interior samples with a full window are kept, so the output is
    ``M - 1`` samples shorter than the input.
    """
    if int(M) != M or M < 3 or M % 2 == 0:
        raise ConfigurationError(f"filter order M must be an odd integer >= 3, got {M}")
    if M > len(enf) - 1:
        raise ConfigurationError(f"filter order M={M} needs more than {len(enf)} samples")
    half = (M - 1) // 2
    values = _accel.detail_residual(enf.values, M)
    return DetailSignal(values, enf.frame_period, int(M), enf.start_time + half * enf.frame_period)


def _segment(d: DetailSignal, start: int, N: int) -> np.ndarray:
    if start < 0 or start + N > len(d):
        raise InsufficientDataError(
            f"segment [{start}, {start + N}) does not fit a series of {len(d)} samples"
        )
    return d.values[start : start + N]


def corrcoef(a: DetailSignal, b: DetailSignal, start: int, N: int, centered: bool = False) -> float:
    """Normalized inner product of two detail segments.

    Uncentered by default; ``centered=True`` subtracts segment means first
    (the Pearson coefficient).
    """
    if N < 2:
        raise ConfigurationError("segment length N must be >= 2")
    x = _segment(a, start, N)
    y = _segment(b, start, N)
    if centered:
        x = x - x.mean()
        y = y - y.mean()
    sxx = float(np.dot(x, x))
    syy = float(np.dot(y, y))
    if sxx == 0.0 or syy == 0.0:
        raise DegenerateSegmentError(f"zero-energy segment at frames [{start}, {start + N})")
    r = float(np.dot(x, y)) / np.sqrt(sxx * syy)
    return float(min(1.0, max(-1.0, r)))


def _check_common_base(details):
    first = details[0][1]
    for name, d in details[1:]:
        if not np.isclose(d.frame_period, first.frame_period, rtol=1e-9, atol=0.0):
            raise ConfigurationError(f"{name!r} has a different frame_period")
        if abs(d.start_time - first.start_time) > 0.5 * first.frame_period:
            raise ConfigurationError(
                f"{name!r} starts at {d.start_time} s, not on the common time base "
                f"({first.start_time} s); align the series first"
            )


def pairwise_table(
    details: Sequence[tuple[str, DetailSignal]],
    start: int,
    N: int,
    centered: bool = False,
    workers: int | None = None,
) -> CorrelationTable:
    """Correlation of every pair over the same window ``[start, start + N)``."""
    details = list(details)
    if not details:
        raise ConfigurationError("pairwise_table needs at least one series")
    names = tuple(n for n, _ in details)
    if len(set(names)) != len(names):
        raise ConfigurationError(f"series names must be unique: {names}")
    _check_common_base(details)
    k = len(details)
    rho = np.eye(k)
    pairs = list(itertools.combinations(range(k), 2))

    def one(pair):
        i, j = pair
        try:
            return corrcoef(details[i][1], details[j][1], start, N, centered)
        except DegenerateSegmentError as exc:
            raise DegenerateSegmentError(f"pair ({names[i]}, {names[j]}): {exc}") from exc

    if workers and workers > 1 and len(pairs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(one, pairs))
    else:
        values = [one(p) for p in pairs]
    for (i, j), r in zip(pairs, values):
        rho[i, j] = rho[j, i] = r
    return CorrelationTable(names, rho)


def segment_starts(length: int, N: int) -> list[int]:
    """Starts of the non-overlapping full segments of ``N`` frames."""
    if N < 2:
        raise ConfigurationError("segment length N must be >= 2")
    return list(range(0, length - N + 1, N))


def segment_tables(
    details: Sequence[tuple[str, DetailSignal]],
    N: int = DEFAULT_SEGMENT_FRAMES,
    centered: bool = False,
    workers: int | None = None,
) -> list[CorrelationTable]:
    """One table per non-overlapping segment common to all series."""
    length = min(len(d) for _, d in details)
    starts = segment_starts(length, N)
    if not starts:
        raise InsufficientDataError(f"series of {length} frames hold no {N}-frame segment")
    return [pairwise_table(details, s, N, centered, workers) for s in starts]
