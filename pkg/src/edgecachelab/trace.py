"""Request-trace data model: CSV ingestion/serialization, user-day
classification, and per-user mobility statistics.

Trace CSV schema (header required): user_id,timestamp,lat,lon,video_id with
integer epoch-second timestamps. Days are cut at local midnight of a
configurable UTC offset (default +8).
"""
from __future__ import annotations

import csv
import enum
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from typing import Callable, Hashable, Iterable, Optional, Sequence, TextIO

import numpy as np

from .geo import CellId, GeoPoint, NodeIndex, NodeKind, PoiLabel, POI_LABELS, cell_of, haversine

DEFAULT_UTC_OFFSET_HOURS = 8
SECONDS_PER_DAY = 86_400

# consecutive-movement bucket edges (minutes and km/h)
INTERVAL_BUCKETS_MIN = ((0.0, 10.0), (10.0, 60.0), (60.0, math.inf))
SPEED_BUCKETS_KMH = ((0.0, 5.6), (5.6, 40.0), (40.0, math.inf))


@dataclass(frozen=True, slots=True)
class RequestRecord:
    """One mobile video request."""

    user_id: str
    timestamp: int
    position: GeoPoint
    video_id: str


class UserClass(enum.Enum):
    SINGLE_LOCATION = "single"
    MULTI_LOCATION = "multi"


@dataclass(frozen=True, slots=True)
class UserDayClass:
    user_id: str
    day: date
    user_class: UserClass
    locations_visited: int


@dataclass(frozen=True, slots=True)
class RejectedLine:
    line_no: int
    reason: str


@dataclass
class MobilityStats:
    """Day-level movement statistics for multi-location user-days.

    Histogram masses sum to 1; CDFs are sorted (x, F(x)) pairs. A movement is
    a consecutive same-day request pair at distinct locations.
    """

    movements_per_day: dict[int, float]
    locations_per_day: dict[int, float]
    consecutive_distance_cdf: dict[str, list[tuple[float, float]]]
    consecutive_interval_cdf: dict[str, list[tuple[float, float]]]
    migration_pattern_fractions: dict[str, float]
    total_movements: int = 0


def local_day(timestamp: int, utc_offset_hours: int = DEFAULT_UTC_OFFSET_HOURS) -> int:
    """Day index (days since epoch) at the given local offset."""
    return (timestamp + utc_offset_hours * 3600) // SECONDS_PER_DAY


def local_hour(timestamp: int, utc_offset_hours: int = DEFAULT_UTC_OFFSET_HOURS) -> int:
    """Hour of local day in [0, 24)."""
    return ((timestamp + utc_offset_hours * 3600) // 3600) % 24


def day_to_date(day_index: int) -> date:
    return datetime.fromtimestamp(day_index * SECONDS_PER_DAY, tz=timezone.utc).date()


_TRACE_HEADER = ["user_id", "timestamp", "lat", "lon", "video_id"]


def parse_trace(stream: TextIO) -> tuple[list[RequestRecord], list[RejectedLine]]:
    """Parse a trace CSV into time-sorted records plus a rejected-line report.

    Malformed lines are reported with their line number and a reason; they are
    never silently dropped. Raises ValueError on a missing/invalid header.
    """
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise ValueError("missing header") from None
    if [h.strip() for h in header] != _TRACE_HEADER:
        raise ValueError(f"bad header: expected {','.join(_TRACE_HEADER)}")
    records: list[RequestRecord] = []
    rejected: list[RejectedLine] = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 5:
            rejected.append(RejectedLine(lineno, "expected 5 fields"))
            continue
        user_s, ts_s, lat_s, lon_s, video_s = (f.strip() for f in row)
        if not user_s:
            rejected.append(RejectedLine(lineno, "empty user_id"))
            continue
        if not video_s:
            rejected.append(RejectedLine(lineno, "empty video_id"))
            continue
        try:
            ts = int(ts_s)
        except ValueError:
            rejected.append(RejectedLine(lineno, "timestamp not an integer"))
            continue
        try:
            lat = float(lat_s)
            lon = float(lon_s)
        except ValueError:
            rejected.append(RejectedLine(lineno, "coordinates not numeric"))
            continue
        if not math.isfinite(lat) or not -90.0 <= lat <= 90.0:
            rejected.append(RejectedLine(lineno, "latitude out of range"))
            continue
        if not math.isfinite(lon) or not -180.0 <= lon <= 180.0:
            rejected.append(RejectedLine(lineno, "longitude out of range"))
            continue
        records.append(RequestRecord(user_s, ts, GeoPoint(lat, lon), video_s))
    records.sort(key=lambda r: r.timestamp)
    return records, rejected


def write_trace(records: Iterable[RequestRecord], stream: TextIO) -> None:
    """Serialize records to the trace CSV; floats use repr so parse round-trips."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(_TRACE_HEADER)
    for r in records:
        writer.writerow([r.user_id, r.timestamp, repr(r.position.lat), repr(r.position.lon), r.video_id])


LocationOf = Callable[[RequestRecord], Hashable]


def cell_assignment() -> LocationOf:
    """Location keyed by grid cell."""
    return lambda r: cell_of(r.position)


def node_assignment(index: NodeIndex, kind: Optional[NodeKind] = None) -> LocationOf:
    """Location keyed by serving node id, falling back to the grid cell when
    no node of the kind covers the request."""

    def assign(r: RequestRecord) -> Hashable:
        found = index.nearest_in_range(r.position, kind)
        if found is None:
            return cell_of(r.position)
        return found[0].id

    return assign


def _by_user_day(
    records: Sequence[RequestRecord], utc_offset_hours: int
) -> dict[tuple[str, int], list[RequestRecord]]:
    groups: dict[tuple[str, int], list[RequestRecord]] = defaultdict(list)
    for r in records:
        groups[(r.user_id, local_day(r.timestamp, utc_offset_hours))].append(r)
    for reqs in groups.values():
        reqs.sort(key=lambda r: r.timestamp)
    return groups


def classify_users(
    records: Sequence[RequestRecord],
    location_of: LocationOf,
    utc_offset_hours: int = DEFAULT_UTC_OFFSET_HOURS,
) -> list[UserDayClass]:
    """Partition user-days into single- and multi-location classes.

    A user-day is multi-location when requests were issued from two or more
    distinct locations (per `location_of`) within that day; the same user may
    fall in different classes on different days.
    """
    out = []
    for (user, day), reqs in sorted(_by_user_day(records, utc_offset_hours).items()):
        n_locs = len({location_of(r) for r in reqs})
        cls = UserClass.MULTI_LOCATION if n_locs >= 2 else UserClass.SINGLE_LOCATION
        out.append(UserDayClass(user, day_to_date(day), cls, n_locs))
    return out


def active_users(
    records: Sequence[RequestRecord],
    threshold: int = 10,
    utc_offset_hours: int = DEFAULT_UTC_OFFSET_HOURS,
) -> set[str]:
    """Users with at least `threshold` requests on every day they appear."""
    per_user_day: dict[str, dict[int, int]] = defaultdict(lambda: defaultdict(int))
    for r in records:
        per_user_day[r.user_id][local_day(r.timestamp, utc_offset_hours)] += 1
    return {
        user for user, days in per_user_day.items() if all(c >= threshold for c in days.values())
    }


def _canonical_pattern(visits: Sequence[Hashable]) -> str:
    letters: dict[Hashable, str] = {}
    out = []
    for loc in visits:
        if loc not in letters:
            letters[loc] = chr(ord("A") + len(letters)) if len(letters) < 26 else "?"
        out.append(letters[loc])
    return "".join(out)


def _cdf(values: Sequence[float]) -> list[tuple[float, float]]:
    if not values:
        return []
    xs = sorted(values)
    n = len(xs)
    out = []
    prev = None
    for i, x in enumerate(xs, start=1):
        if x == prev:
            out[-1] = (x, i / n)
        else:
            out.append((x, i / n))
            prev = x
    return out


def movement_stats(
    records: Sequence[RequestRecord],
    location_of: LocationOf,
    utc_offset_hours: int = DEFAULT_UTC_OFFSET_HOURS,
) -> MobilityStats:
    """Movement histograms, distance/interval CDFs, and migration patterns.

    Distance CDFs are bucketed by the elapsed interval between the consecutive
    requests; interval CDFs by the implied movement speed. Patterns label each
    day's visited locations in order of first appearance (ABAB etc.).
    """
    movement_counts: Counter[int] = Counter()
    location_counts: Counter[int] = Counter()
    patterns: Counter[str] = Counter()
    distances_by_interval: dict[str, list[float]] = {"[0,10)": [], "[10,60)": [], "[60,inf)": []}
    intervals_by_speed: dict[str, list[float]] = {"<5.6": [], "[5.6,40)": [], ">=40": []}
    interval_keys = list(distances_by_interval)
    speed_keys = list(intervals_by_speed)
    total_movements = 0

    for (_user, _day), reqs in sorted(_by_user_day(records, utc_offset_hours).items()):
        locs = [location_of(r) for r in reqs]
        n_moves = 0
        visits: list[Hashable] = [locs[0]]
        for prev, cur, lprev, lcur in zip(reqs, reqs[1:], locs, locs[1:]):
            if lcur == lprev:
                continue
            n_moves += 1
            visits.append(lcur)
            dist_m = haversine(prev.position, cur.position)
            interval_min = (cur.timestamp - prev.timestamp) / 60.0
            for key, (lo, hi) in zip(interval_keys, INTERVAL_BUCKETS_MIN):
                if lo <= interval_min < hi:
                    distances_by_interval[key].append(dist_m)
                    break
            speed_kmh = math.inf if interval_min == 0 else (dist_m / 1000.0) / (interval_min / 60.0)
            for key, (lo, hi) in zip(speed_keys, SPEED_BUCKETS_KMH):
                if lo <= speed_kmh < hi or (hi is math.inf and speed_kmh == math.inf):
                    intervals_by_speed[key].append(interval_min)
                    break
        if n_moves == 0:
            continue
        total_movements += n_moves
        movement_counts[n_moves] += 1
        location_counts[len(set(locs))] += 1
        patterns[_canonical_pattern(visits)] += 1

    def normalize(counter: Counter) -> dict:
        total = sum(counter.values())
        if total == 0:
            return {}
        return {k: v / total for k, v in sorted(counter.items())}

    return MobilityStats(
        movements_per_day=normalize(movement_counts),
        locations_per_day=normalize(location_counts),
        consecutive_distance_cdf={k: _cdf(v) for k, v in distances_by_interval.items()},
        consecutive_interval_cdf={k: _cdf(v) for k, v in intervals_by_speed.items()},
        migration_pattern_fractions=normalize(patterns),
        total_movements=total_movements,
    )


def migration_matrix(
    records: Sequence[RequestRecord],
    cell_poi: dict[CellId, PoiLabel],
    utc_offset_hours: int = DEFAULT_UTC_OFFSET_HOURS,
) -> tuple[np.ndarray, int]:
    """7x7 movement counts between PoI-labeled cells.

    Entry (i, j) counts same-day consecutive request pairs moving from a cell
    labeled i to a cell labeled j. Movements touching unlabeled cells are
    excluded from the matrix but tallied in the returned sidecar count.
    """
    order = {label: i for i, label in enumerate(POI_LABELS)}
    matrix = np.zeros((len(POI_LABELS), len(POI_LABELS)), dtype=np.int64)
    unlabeled = 0
    for (_user, _day), reqs in _by_user_day(records, utc_offset_hours).items():
        cells = [cell_of(r.position) for r in reqs]
        for cprev, ccur in zip(cells, cells[1:]):
            if ccur == cprev:
                continue
            src = cell_poi.get(cprev)
            dst = cell_poi.get(ccur)
            if src is None or dst is None:
                unlabeled += 1
                continue
            matrix[order[src], order[dst]] += 1
    return matrix, unlabeled


def hourly_series(
    records: Sequence[RequestRecord],
    n_hours: Optional[int] = None,
    utc_offset_hours: int = DEFAULT_UTC_OFFSET_HOURS,
    cells: Optional[set[CellId]] = None,
) -> np.ndarray:
    """Requests per hour, optionally restricted to a cell subset.

    The series starts at the local midnight of the first request's day and
    spans `n_hours` when given (default: through the last request).
    """
    if not records:
        raise ValueError("no samples")
    offset = utc_offset_hours * 3600
    ts = [r.timestamp for r in records]
    start_day = min(local_day(t, utc_offset_hours) for t in ts)
    start = start_day * SECONDS_PER_DAY - offset
    if n_hours is None:
        n_hours = (max(ts) - start) // 3600 + 1
    series = np.zeros(int(n_hours), dtype=np.float64)
    for r in records:
        if cells is not None and cell_of(r.position) not in cells:
            continue
        idx = (r.timestamp - start) // 3600
        if 0 <= idx < len(series):
            series[idx] += 1.0
    return series
