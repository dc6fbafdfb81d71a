"""Transition timing, narrative-rhythm distance, and motion dynamics.

Boundary matching uses exact dynamic programming over order-preserving
one-to-one assignments (greedy nearest-neighbour is fragile near dense
cuts).  The rhythm gap between a generated pool and a reference set is the
Jensen-Shannon *distance* (square root of the divergence) with base-2 logs,
which makes it a proper metric bounded in [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import MetricError


@dataclass(frozen=True)
class BoundarySet:
    """Sorted transition frame indices inside a clip of ``clip_len`` frames."""

    frames: tuple[int, ...]
    clip_len: int

    def __post_init__(self) -> None:
        frames = tuple(int(f) for f in self.frames)
        object.__setattr__(self, "frames", frames)
        if any(b <= a for a, b in zip(frames, frames[1:])):
            raise ValueError("boundary frames must be strictly increasing")
        if frames and (frames[0] <= 0 or frames[-1] >= self.clip_len):
            raise ValueError("boundaries must lie strictly inside (0, clip_len)")


@dataclass(frozen=True)
class CoherenceHistogram:
    """Normalized histogram of coherence values over [-1, 1]."""

    bins: tuple[float, ...]

    def __post_init__(self) -> None:
        bins = tuple(float(b) for b in self.bins)
        object.__setattr__(self, "bins", bins)
        if len(bins) < 2:
            raise ValueError("need at least 2 bins")
        if any(b < 0 for b in bins):
            raise ValueError("bin masses must be non-negative")
        if abs(sum(bins) - 1.0) > 1e-9:
            raise ValueError(f"bin masses must sum to 1, got {sum(bins)}")

    @property
    def n_bins(self) -> int:
        return len(self.bins)


def expected_boundaries(shot_durations: Sequence[int]) -> BoundarySet:
    """Prompted transition positions: cumulative shot durations, final total excluded."""
    durations = [int(d) for d in shot_durations]
    if len(durations) < 2:
        raise MetricError("SINGLE_SHOT", "need >= 2 shots to have transitions")
    if any(d <= 0 for d in durations):
        raise ValueError("shot durations must be positive")
    cuts = np.cumsum(durations)
    return BoundarySet(frames=tuple(int(c) for c in cuts[:-1]), clip_len=int(cuts[-1]))


@dataclass(frozen=True)
class TransitionDeviation:
    """Matched-pair timing error plus unmatched boundary counts.

    ``mean_abs_dev`` is None when nothing could be matched (no detected
    boundaries); reports render that as "-".
    """

    mean_abs_dev: float | None
    misses: int
    extras: int
    matching: tuple[tuple[int, int], ...] = ()


def transition_deviation(expected: BoundarySet, detected: BoundarySet) -> TransitionDeviation:
    """Optimal order-preserving matching of detected to expected boundaries.

    Matches min(|expected|, |detected|) pairs monotonically, minimizing the
    total absolute frame deviation by dynamic programming; leftovers on the
    longer side are misses (expected) or extras (detected).
    """
    exp = list(expected.frames)
    det = list(detected.frames)
    if not exp:
        raise MetricError("SINGLE_SHOT", "expected boundary set is empty")
    if not det:
        return TransitionDeviation(mean_abs_dev=None, misses=len(exp), extras=0)

    swapped = len(exp) > len(det)
    short, long_ = (det, exp) if swapped else (exp, det)
    n, m = len(short), len(long_)

    # cost[i][j]: best total |delta| matching short[:i] into long_[:j], i <= j.
    inf = float("inf")
    cost = np.full((n + 1, m + 1), inf)
    cost[0, :] = 0.0
    choice = np.zeros((n + 1, m + 1), dtype=np.uint8)  # 1 = pair (i-1, j-1)
    for i in range(1, n + 1):
        for j in range(i, m + 1):
            skip = cost[i, j - 1]
            pair = cost[i - 1, j - 1] + abs(short[i - 1] - long_[j - 1])
            if pair <= skip:
                cost[i, j] = pair
                choice[i, j] = 1
            else:
                cost[i, j] = skip

    pairs = []
    i, j = n, m
    while i > 0:
        if choice[i, j]:
            pairs.append((short[i - 1], long_[j - 1]))
            i -= 1
        j -= 1
    pairs.reverse()
    if swapped:
        pairs = [(e, d) for d, e in pairs]

    mean_dev = float(np.mean([abs(e - d) for e, d in pairs]))
    return TransitionDeviation(
        mean_abs_dev=mean_dev,
        misses=len(exp) - len(pairs),
        extras=len(det) - len(pairs),
        matching=tuple(pairs),
    )


def coherence_histogram(values: Sequence[float], n_bins: int) -> CoherenceHistogram:
    """Equal-width histogram over [-1, 1], right-inclusive at +1, normalized."""
    arr = np.asarray(list(values), dtype=np.float64)
    if arr.size == 0:
        raise MetricError("EMPTY", "no coherence values")
    if np.any(np.abs(arr) > 1.0 + 1e-6):
        raise ValueError("coherence values must lie in [-1, 1]")
    arr = np.clip(arr, -1.0, 1.0)
    counts, _ = np.histogram(arr, bins=n_bins, range=(-1.0, 1.0))
    return CoherenceHistogram(bins=tuple(counts / arr.size))


def js_distance(p: CoherenceHistogram, q: CoherenceHistogram) -> float:
    """Jensen-Shannon distance with base-2 logs: sqrt(JSD(p, m) half-sum).

    Zero-probability bins contribute nothing (0*log 0 = 0), and disjoint
    supports give exactly 1.0.
    """
    if p.n_bins != q.n_bins:
        raise MetricError("BIN_MISMATCH", f"{p.n_bins} vs {q.n_bins} bins")
    pa = np.asarray(p.bins)
    qa = np.asarray(q.bins)
    m = 0.5 * (pa + qa)

    def kl(a: np.ndarray) -> float:
        mask = a > 0
        return float(np.sum(a[mask] * np.log2(a[mask] / m[mask])))

    divergence = 0.5 * kl(pa) + 0.5 * kl(qa)
    return float(np.sqrt(max(divergence, 0.0)))


def consistency_gap(values_per_video: Sequence[Sequence[float]],
                    reference: CoherenceHistogram) -> float:
    """Rhythm gap: pooled adjacent-shot coherence vs the reference distribution.

    Callers pass only motion-gated videos; the pool is histogrammed with the
    reference's bin count and compared by Jensen-Shannon distance.
    """
    pooled = [v for video in values_per_video for v in video]
    if not pooled:
        raise MetricError("ALL_GATED_OUT", "no videos survived the motion gate")
    return js_distance(coherence_histogram(pooled, reference.n_bins), reference)


def action_strength(flow_mag: Sequence[float]) -> float:
    """Mean of per-frame mean optical-flow magnitudes (pixels)."""
    arr = np.asarray(list(flow_mag), dtype=np.float64)
    if arr.size == 0:
        raise MetricError("EMPTY", "no flow magnitudes")
    return float(arr.mean())


@dataclass(frozen=True)
class GateResult:
    passed: bool
    reason: str | None = None  # STATIC | CHAOTIC


def motion_gate(score: float, lo: float, hi: float) -> GateResult:
    """Inclusive motion-range gate; rejects static and chaotic clips."""
    if not lo < hi:
        raise ValueError("lo must be < hi")
    if score < lo:
        return GateResult(False, "STATIC")
    if score > hi:
        return GateResult(False, "CHAOTIC")
    return GateResult(True)
