"""Statistical toolkit over request traces: popularity ranking, spectral
analysis of hourly volume, request entropies, divergence/similarity measures,
and the two correlation fits.

Entropies and KL divergence use natural log (values in nats); normalized
entropies divide by log(support size) and are defined as 0 for singleton
support.
"""
from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Hashable, Iterable, Mapping, Optional, Sequence

import numpy as np

from .geo import CellId, cell_of
from .trace import (
    DEFAULT_UTC_OFFSET_HOURS,
    RequestRecord,
    cell_assignment,
    classify_users,
    local_day,
)

KL_SMOOTHING_EPS = 1e-6


@dataclass
class PopularityReport:
    """Videos ranked by descending request count plus a log-log slope fit."""

    video_ids: list[str]
    counts: np.ndarray
    slope: Optional[float]
    degenerate: bool


@dataclass
class Spectrum:
    """DFT of an hourly series: X[k] = sum_{n=1..N} x_n e^{-2 pi i k n / N}."""

    n: int
    amplitudes: np.ndarray
    phases: np.ndarray


@dataclass
class PeriodPeak:
    k: int
    period_hours: float
    amplitude: float


@dataclass
class EntropyReport:
    raw: float
    normalized: float
    support_size: int


@dataclass
class FitResult:
    coefficients: tuple[float, ...]
    residual: float


@dataclass
class DecayProfile:
    """Per-day request volume for a category, normalized by the first day."""

    day_indices: list[int]
    normalized: np.ndarray
    decay_rate: float


def popularity_histogram(records: Sequence[RequestRecord]) -> PopularityReport:
    """Rank-frequency table with a least-squares log-log slope.

    The slope is fit on ranks [10, 0.9*n] (head and tail trimmed); it is None
    and the report marked degenerate when fewer than two ranks survive.
    """
    if not records:
        raise ValueError("no samples")
    counts = Counter(r.video_id for r in records)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    video_ids = [v for v, _ in ranked]
    values = np.array([c for _, c in ranked], dtype=np.float64)
    n = len(values)
    lo = min(10, n) - 1
    hi = max(lo + 1, int(math.floor(0.9 * n)))
    ranks = np.arange(1, n + 1, dtype=np.float64)[lo:hi]
    trimmed = values[lo:hi]
    mask = trimmed > 0
    if mask.sum() < 2 or len(set(ranks[mask])) < 2:
        return PopularityReport(video_ids, values, None, True)
    slope, _ = np.polyfit(np.log(ranks[mask]), np.log(trimmed[mask]), 1)
    return PopularityReport(video_ids, values, float(slope), False)


@dataclass
class LocalRankReport:
    """Average local rank percentile per globally top-n video, with its CDF."""

    per_video: dict[str, float]
    cdf: list[tuple[float, float]]


def local_global_rank(records: Sequence[RequestRecord], top_n: int) -> LocalRankReport:
    """Average per-cell popularity-rank percentile of the global top-n videos."""
    counts = Counter(r.video_id for r in records)
    if top_n > len(counts):
        raise ValueError("top_n exceeds distinct videos")
    top = [v for v, _ in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:top_n]]
    per_cell: dict[CellId, Counter] = defaultdict(Counter)
    for r in records:
        per_cell[cell_of(r.position)][r.video_id] += 1
    # local rank percentile of each video in each cell where it was requested
    percentiles: dict[str, list[float]] = defaultdict(list)
    top_set = set(top)
    for cell, cell_counts in per_cell.items():
        ordered = sorted(cell_counts.items(), key=lambda kv: (-kv[1], kv[0]))
        m = len(ordered)
        for rank, (video, _) in enumerate(ordered, start=1):
            if video in top_set:
                percentiles[video].append(rank / m)
    per_video = {v: float(np.mean(percentiles[v])) for v in top if percentiles[v]}
    values = sorted(per_video.values())
    n = len(values)
    cdf = [(x, (i + 1) / n) for i, x in enumerate(values)]
    return LocalRankReport(per_video, cdf)


def dft_spectrum(series: Sequence[float]) -> Spectrum:
    """Discrete Fourier transform with the series indexed from n = 1.

    Matches the direct formula X[k] = sum_{n=1..N} x_n e^{-2 pi i k n / N};
    computed via FFT with the一-step phase twiddle applied per bin.
    """
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 1 or len(x) < 1:
        raise ValueError("series must be a non-empty 1-d sequence")
    if not np.all(np.isfinite(x)):
        raise ValueError("series values must be finite")
    n = len(x)
    k = np.arange(n)
    spectrum = np.fft.fft(x) * np.exp(-2j * np.pi * k / n)
    return Spectrum(n=n, amplitudes=np.abs(spectrum), phases=np.angle(spectrum))


def dominant_periods(spectrum: Spectrum, k_max: int = 3) -> list[PeriodPeak]:
    """Top non-DC peaks by amplitude, mirrors collapsed, ties by smaller k."""
    n = spectrum.n
    half = n // 2
    candidates = [
        PeriodPeak(k=k, period_hours=n / k, amplitude=float(spectrum.amplitudes[k]))
        for k in range(1, half + 1)
    ]
    candidates.sort(key=lambda p: (-p.amplitude, p.k))
    return candidates[:k_max]


def entropy_from_counts(counts: Sequence[float]) -> EntropyReport:
    """Shannon entropy (nats) of a count vector plus its normalized form."""
    values = [c for c in counts if c > 0]
    if not values:
        raise ValueError("no positive counts")
    total = float(sum(values))
    raw = -sum((c / total) * math.log(c / total) for c in values)
    raw = max(0.0, raw)
    support = len(values)
    normalized = raw / math.log(support) if support >= 2 else 0.0
    return EntropyReport(raw=raw, normalized=min(1.0, normalized), support_size=support)


def video_entropy(records: Sequence[RequestRecord], video_id: str) -> EntropyReport:
    """Entropy of one video's request distribution over grid cells."""
    counts: Counter[CellId] = Counter()
    for r in records:
        if r.video_id == video_id:
            counts[cell_of(r.position)] += 1
    if not counts:
        raise ValueError(f"unknown video {video_id!r}")
    return entropy_from_counts(list(counts.values()))


def location_entropy(records: Sequence[RequestRecord], cell: CellId) -> EntropyReport:
    """Entropy of one cell's request distribution over videos."""
    counts: Counter[str] = Counter()
    for r in records:
        if cell_of(r.position) == cell:
            counts[r.video_id] += 1
    if not counts:
        raise ValueError(f"no requests in cell {cell}")
    return entropy_from_counts(list(counts.values()))


def entropy_poi_fit(samples: Sequence[tuple[float, float]]) -> FitResult:
    """Least-squares quadratic y = a*x^2 + b*x + c."""
    if len({x for x, _ in samples}) < 3:
        raise ValueError("need at least 3 distinct x values")
    xs = np.array([x for x, _ in samples], dtype=np.float64)
    ys = np.array([y for _, y in samples], dtype=np.float64)
    design = np.column_stack([xs**2, xs, np.ones_like(xs)])
    if np.linalg.matrix_rank(design) < 3:
        raise ValueError("rank-deficient design")
    coeffs, _, _, _ = np.linalg.lstsq(design, ys, rcond=None)
    residual = float(np.sum((design @ coeffs - ys) ** 2))
    return FitResult(tuple(float(c) for c in coeffs), residual)


def entropy_mobility_fit(samples: Sequence[tuple[float, float]]) -> FitResult:
    """Least-squares log-linear y = a*log(x) + b; requires positive x."""
    if any(x <= 0 for x, _ in samples):
        raise ValueError("x values must be positive")
    if len({x for x, _ in samples}) < 2:
        raise ValueError("need at least 2 distinct x values")
    xs = np.log(np.array([x for x, _ in samples], dtype=np.float64))
    ys = np.array([y for _, y in samples], dtype=np.float64)
    design = np.column_stack([xs, np.ones_like(xs)])
    coeffs, _, _, _ = np.linalg.lstsq(design, ys, rcond=None)
    residual = float(np.sum((design @ coeffs - ys) ** 2))
    return FitResult(tuple(float(c) for c in coeffs), residual)


def kl_divergence(p: Sequence[float], q: Sequence[float], eps: float = KL_SMOOTHING_EPS) -> float:
    """KL divergence D(P || Q) in nats with additive smoothing on both sides.

    Both inputs must already sum to 1 (tolerance 1e-9); each is shifted by eps
    and renormalized before the sum, so zero-probability bins in Q stay finite.
    """
    pa = np.asarray(p, dtype=np.float64)
    qa = np.asarray(q, dtype=np.float64)
    if pa.shape != qa.shape or pa.ndim != 1 or len(pa) == 0:
        raise ValueError("distributions must be equal-length non-empty vectors")
    if np.any(pa < 0) or np.any(qa < 0):
        raise ValueError("probabilities must be non-negative")
    if abs(pa.sum() - 1.0) > 1e-9 or abs(qa.sum() - 1.0) > 1e-9:
        raise ValueError("distributions must each sum to 1")
    ps = (pa + eps) / (1.0 + eps * len(pa))
    qs = (qa + eps) / (1.0 + eps * len(qa))
    return float(np.sum(ps * np.log(ps / qs)))


def jaccard(video_set_a: Iterable[Hashable], video_set_b: Iterable[Hashable]) -> float:
    """|A intersect B| / |A union B|; defined as 0 when both sets are empty."""
    a = set(video_set_a)
    b = set(video_set_b)
    union = len(a | b)
    if union == 0:
        return 0.0
    return len(a & b) / union


def category_decay_profile(
    records: Sequence[RequestRecord],
    category: str,
    video_category: Mapping[str, str],
    utc_offset_hours: int = DEFAULT_UTC_OFFSET_HOURS,
) -> DecayProfile:
    """Daily volume of one category normalized by its first day, plus the
    fitted exponential decay rate (least squares on log counts vs day)."""
    per_day: Counter[int] = Counter()
    for r in records:
        if video_category.get(r.video_id) == category:
            per_day[local_day(r.timestamp, utc_offset_hours)] += 1
    if len(per_day) < 2:
        raise ValueError("category must span at least 2 days")
    first = min(per_day)
    last = max(per_day)
    days = list(range(first, last + 1))
    series = np.array([per_day.get(d, 0) for d in days], dtype=np.float64)
    normalized = series / series[0] if series[0] > 0 else series
    xs = np.array([d - first for d, c in zip(days, series) if c > 0], dtype=np.float64)
    ys = np.log(series[series > 0])
    if len(xs) < 2:
        raise ValueError("category must span at least 2 days with requests")
    slope, _ = np.polyfit(xs, ys, 1)
    return DecayProfile(day_indices=days, normalized=normalized, decay_rate=float(-slope))


def cell_mobility_intensity(
    records: Sequence[RequestRecord],
    utc_offset_hours: int = DEFAULT_UTC_OFFSET_HOURS,
) -> dict[CellId, float]:
    """Mean daily count of distinct multi-location users requesting in each
    cell; cells never visited by a moving user are omitted."""
    if not records:
        return {}
    classes = classify_users(records, cell_assignment(), utc_offset_hours)
    multi = {
        (c.user_id, c.day)
        for c in classes
        if c.user_class.value == "multi"
    }
    day_span = {local_day(r.timestamp, utc_offset_hours) for r in records}
    n_days = max(day_span) - min(day_span) + 1
    visitors: dict[CellId, set[tuple[str, int]]] = defaultdict(set)
    for r in records:
        day = local_day(r.timestamp, utc_offset_hours)
        from .trace import day_to_date

        if (r.user_id, day_to_date(day)) in multi:
            visitors[cell_of(r.position)].add((r.user_id, day))
    return {cell: len(v) / n_days for cell, v in visitors.items() if v}


def request_counts_by_cell(records: Sequence[RequestRecord]) -> dict[CellId, int]:
    counts: Counter[CellId] = Counter()
    for r in records:
        counts[cell_of(r.position)] += 1
    return dict(counts)
