"""Geographic primitives: grid cells, great-circle distance, edge infrastructure
nodes, and a bucketed spatial index for nearest-node routing.

Cells are 0.01 deg x 0.01 deg squares addressed by floor-quantized (row, col)
indices; a point lying exactly on a cell edge belongs to the cell whose lower
edge it is (exact decimal semantics, robust to float noise).
"""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, TextIO

EARTH_RADIUS_M = 6_371_000.0
CELL_DEG = 0.01

# meters per degree of latitude along a meridian
_MERIDIAN_M_PER_DEG = math.pi * EARTH_RADIUS_M / 180.0
# snap tolerance for points within float noise of a cell edge
_EDGE_EPS = 1e-7


class PoiLabel(enum.Enum):
    """Functional category of a grid cell (point-of-interest label)."""

    BUSINESS = "business"
    HOSPITAL = "hospital"
    RESIDENT = "resident"
    CAMPUS = "campus"
    SCENERY = "scenery"
    SHOPPING = "shopping"
    HOTEL = "hotel"


POI_LABELS: tuple[PoiLabel, ...] = tuple(PoiLabel)
_POI_ORDER = {label: i for i, label in enumerate(POI_LABELS)}


class NodeKind(enum.Enum):
    WIFI_AP = "ap"
    CELLULAR_BS = "bs"


DEFAULT_RADIUS_M = {NodeKind.WIFI_AP: 100.0, NodeKind.CELLULAR_BS: 500.0}
DEFAULT_CONCURRENCY = {NodeKind.WIFI_AP: 20, NodeKind.CELLULAR_BS: 100}
DEFAULT_BANDWIDTH = {NodeKind.WIFI_AP: 20.0, NodeKind.CELLULAR_BS: 100.0}


@dataclass(frozen=True)
class GeoPoint:
    """A WGS-ish latitude/longitude pair in degrees. Validated on construction."""

    lat: float
    lon: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise ValueError(f"non-finite coordinates ({self.lat}, {self.lon})")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude out of range: {self.lat}")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude out of range: {self.lon}")


@dataclass(frozen=True, order=True)
class CellId:
    """Identity of one 0.01-degree grid square."""

    row: int
    col: int

    def center(self) -> GeoPoint:
        return GeoPoint((self.row + 0.5) * CELL_DEG, (self.col + 0.5) * CELL_DEG)


def _grid_index(deg: float) -> int:
    scaled = deg / CELL_DEG
    nearest = round(scaled)
    # 0.03/0.01 evaluates to 2.999...96 in binary floats; snap exact-decimal
    # edges back before flooring so equal decimals land in equal cells.
    if abs(scaled - nearest) < _EDGE_EPS:
        scaled = nearest
    return math.floor(scaled)


def cell_of(p: GeoPoint) -> CellId:
    """Quantize a point to its grid cell."""
    return CellId(_grid_index(p.lat), _grid_index(p.lon))


def haversine(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in meters (mean Earth radius 6,371 km)."""
    phi1 = math.radians(a.lat)
    phi2 = math.radians(b.lat)
    dphi = phi2 - phi1
    dlam = math.radians(b.lon - a.lon)
    s = math.sin(dphi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(s)))


@dataclass(frozen=True)
class InfrastructureNode:
    """A Wi-Fi access point or cellular base station.

    radius/concurrency/bandwidth default by kind (100 m, 20 tx, 20 items/slot
    for APs; 500 m, 100 tx, 100 items/slot for base stations). bandwidth is in
    video-size units per resource slot.
    """

    id: str
    kind: NodeKind
    position: GeoPoint
    radius: float = 0.0
    capacity: int = 20
    concurrency: int = 0
    bandwidth: float = 0.0
    poi: Optional[PoiLabel] = None

    def __post_init__(self) -> None:
        if not self.radius:
            object.__setattr__(self, "radius", DEFAULT_RADIUS_M[self.kind])
        if not self.concurrency:
            object.__setattr__(self, "concurrency", DEFAULT_CONCURRENCY[self.kind])
        if not self.bandwidth:
            object.__setattr__(self, "bandwidth", DEFAULT_BANDWIDTH[self.kind])
        if self.radius <= 0:
            raise ValueError(f"node {self.id}: radius must be positive")
        if self.capacity < 0:
            raise ValueError(f"node {self.id}: capacity must be >= 0")
        if self.concurrency < 1 or self.bandwidth < 1:
            raise ValueError(f"node {self.id}: concurrency and bandwidth must be >= 1")

    @property
    def cell(self) -> CellId:
        return cell_of(self.position)


class NodeIndex:
    """Grid-bucketed spatial index over infrastructure nodes.

    Built once, read-only afterwards; lookups are expanding ring searches over
    grid cells with a distance lower bound per ring, falling back to having
    covered the whole indexed bounding box, so results equal a linear scan.
    """

    def __init__(self, nodes: Iterable[InfrastructureNode]):
        self.nodes: list[InfrastructureNode] = list(nodes)
        self._buckets: dict[tuple[int, int], list[InfrastructureNode]] = {}
        self._bounds: dict[Optional[NodeKind], tuple[int, int, int, int]] = {}
        for node in self.nodes:
            c = node.cell
            self._buckets.setdefault((c.row, c.col), []).append(node)
            for key in (None, node.kind):
                b = self._bounds.get(key)
                if b is None:
                    self._bounds[key] = (c.row, c.row, c.col, c.col)
                else:
                    self._bounds[key] = (
                        min(b[0], c.row), max(b[1], c.row),
                        min(b[2], c.col), max(b[3], c.col),
                    )
        self.max_radius = {
            kind: max((n.radius for n in self.nodes if n.kind is kind), default=0.0)
            for kind in NodeKind
        }

    def has_kind(self, kind: Optional[NodeKind]) -> bool:
        return self._bounds.get(kind) is not None

    def _ring_lower_bound(self, p: GeoPoint, k: int) -> float:
        # Any node in a cell at Chebyshev ring distance k differs from p by
        # more than (k-1)*CELL_DEG on at least one axis; its latitude stays
        # within (k+1)*CELL_DEG of p's, which bounds the cos factor.
        if k <= 0:
            return 0.0
        gap = (k - 1) * CELL_DEG
        lat_bound = gap * _MERIDIAN_M_PER_DEG
        max_abs_lat = min(90.0, abs(p.lat) + (k + 1) * CELL_DEG)
        cos_factor = max(0.0, math.cos(math.radians(max_abs_lat)))
        lon_bound = 2.0 * EARTH_RADIUS_M * cos_factor * math.sin(math.radians(gap) / 2.0)
        return min(lat_bound, lon_bound)

    def nearest(
        self, p: GeoPoint, kind: Optional[NodeKind] = None
    ) -> Optional[tuple[InfrastructureNode, float]]:
        """Closest node of `kind` (any kind if None); ties broken by node id."""
        bounds = self._bounds.get(kind)
        if bounds is None:
            return None
        row0, col0 = _grid_index(p.lat), _grid_index(p.lon)
        min_row, max_row, min_col, max_col = bounds
        best: Optional[InfrastructureNode] = None
        best_d = math.inf
        k = 0
        while True:
            if best is not None and best_d <= self._ring_lower_bound(p, k):
                break
            # ring k: cells at Chebyshev distance exactly k
            lo_r, hi_r = row0 - k, row0 + k
            lo_c, hi_c = col0 - k, col0 + k
            if lo_r < min_row and hi_r > max_row and lo_c < min_col and hi_c > max_col:
                break  # whole indexed box covered
            if k == 0:
                ring = [(row0, col0)]
            else:
                ring = [(lo_r, c) for c in range(lo_c, hi_c + 1)]
                ring += [(hi_r, c) for c in range(lo_c, hi_c + 1)]
                ring += [(r, lo_c) for r in range(lo_r + 1, hi_r)]
                ring += [(r, hi_c) for r in range(lo_r + 1, hi_r)]
            for key in ring:
                for node in self._buckets.get(key, ()):
                    if kind is not None and node.kind is not kind:
                        continue
                    d = haversine(p, node.position)
                    if d < best_d or (d == best_d and best is not None and node.id < best.id):
                        best, best_d = node, d
            k += 1
        if best is None:
            return None
        return best, best_d

    def nearest_in_range(
        self, p: GeoPoint, kind: Optional[NodeKind] = None, radius_override: Optional[float] = None
    ) -> Optional[tuple[InfrastructureNode, float]]:
        """Closest node whose coverage radius reaches p; None when uncovered.

        With uniform radii this equals nearest() filtered by range; with mixed
        radii a farther node with a larger radius can win, so candidates are
        collected out to the kind's maximum radius.
        """
        bounds = self._bounds.get(kind)
        if bounds is None:
            return None
        limit = radius_override if radius_override is not None else (
            self.max_radius[kind] if kind is not None else max(self.max_radius.values())
        )
        row0, col0 = _grid_index(p.lat), _grid_index(p.lon)
        min_row, max_row, min_col, max_col = bounds
        best: Optional[InfrastructureNode] = None
        best_d = math.inf
        k = 0
        while True:
            lb = self._ring_lower_bound(p, k)
            if lb > limit or (best is not None and best_d <= lb):
                break
            lo_r, hi_r = row0 - k, row0 + k
            lo_c, hi_c = col0 - k, col0 + k
            if lo_r < min_row and hi_r > max_row and lo_c < min_col and hi_c > max_col:
                break
            if k == 0:
                ring = [(row0, col0)]
            else:
                ring = [(lo_r, c) for c in range(lo_c, hi_c + 1)]
                ring += [(hi_r, c) for c in range(lo_c, hi_c + 1)]
                ring += [(r, lo_c) for r in range(lo_r + 1, hi_r)]
                ring += [(r, hi_c) for r in range(lo_r + 1, hi_r)]
            for key in ring:
                for node in self._buckets.get(key, ()):
                    if kind is not None and node.kind is not kind:
                        continue
                    d = haversine(p, node.position)
                    r = radius_override if radius_override is not None else node.radius
                    if d > r:
                        continue
                    if d < best_d or (d == best_d and best is not None and node.id < best.id):
                        best, best_d = node, d
            k += 1
        if best is None:
            return None
        return best, best_d


def nearest_node(
    p: GeoPoint,
    nodes: Iterable[InfrastructureNode] | NodeIndex,
    kind: Optional[NodeKind] = None,
) -> Optional[tuple[InfrastructureNode, float]]:
    """Minimum-distance node of the requested kind; ties by smallest node id."""
    index = nodes if isinstance(nodes, NodeIndex) else NodeIndex(nodes)
    return index.nearest(p, kind)


def _positions(requests: Iterable) -> list[GeoPoint]:
    return [getattr(r, "position", r) for r in requests]


def coverage_cdf(
    requests: Iterable,
    nodes: Iterable[InfrastructureNode] | NodeIndex,
    kind: Optional[NodeKind] = None,
    breakpoints: Optional[Sequence[float]] = None,
) -> list[tuple[float, float]]:
    """Empirical CDF of request-to-nearest-node distances.

    Sampled at `breakpoints` when given, otherwise at the observed distances.
    Accepts request records (anything with a .position) or bare GeoPoints.
    """
    points = _positions(requests)
    if not points:
        raise ValueError("no samples")
    index = nodes if isinstance(nodes, NodeIndex) else NodeIndex(nodes)
    if not index.has_kind(kind):
        raise ValueError("no nodes of requested kind")
    dists = sorted(index.nearest(p, kind)[1] for p in points)
    n = len(dists)
    if breakpoints is None:
        xs = sorted(set(dists))
    else:
        xs = sorted(breakpoints)
    out = []
    import bisect

    for x in xs:
        out.append((x, bisect.bisect_right(dists, x) / n))
    return out


@dataclass
class DistanceGapReport:
    """Per-request (nearest-BS distance - nearest-AP distance) gaps."""

    gaps: list[float]
    fraction_positive: float


def distance_gap(
    requests: Iterable,
    nodes: Iterable[InfrastructureNode] | NodeIndex,
) -> DistanceGapReport:
    """Signed distance gaps; positive means the AP is closer than the BS."""
    points = _positions(requests)
    index = nodes if isinstance(nodes, NodeIndex) else NodeIndex(nodes)
    if not index.has_kind(NodeKind.WIFI_AP) or not index.has_kind(NodeKind.CELLULAR_BS):
        raise ValueError("both AP and BS nodes are required")
    gaps = []
    for p in points:
        d_ap = index.nearest(p, NodeKind.WIFI_AP)[1]
        d_bs = index.nearest(p, NodeKind.CELLULAR_BS)[1]
        gaps.append(d_bs - d_ap)
    frac = sum(1 for g in gaps if g > 0) / len(gaps) if gaps else 0.0
    return DistanceGapReport(gaps, frac)


def _max_min_normalize(values: Sequence[float]) -> list[float]:
    lo, hi = min(values), max(values)
    if hi == lo:
        return [0.0 if hi == 0 else 1.0] * len(values)
    return [(v - lo) / (hi - lo) for v in values]


def intensity_similarity(request_counts: Sequence[float], node_counts: Sequence[float]) -> float:
    """Cosine similarity of max-min-normalized per-cell count vectors, in [0,1]."""
    if len(request_counts) != len(node_counts):
        raise ValueError("vectors must cover the same cell universe")
    if not request_counts:
        raise ValueError("undefined similarity")
    if any(v < 0 for v in request_counts) or any(v < 0 for v in node_counts):
        raise ValueError("counts must be non-negative")
    q = _max_min_normalize(request_counts)
    a = _max_min_normalize(node_counts)
    nq = math.sqrt(sum(x * x for x in q))
    na = math.sqrt(sum(x * x for x in a))
    if nq == 0 or na == 0:
        raise ValueError("undefined similarity")
    return sum(x * y for x, y in zip(q, a)) / (nq * na)


def dominant_poi(nodes: Iterable[InfrastructureNode]) -> dict[CellId, PoiLabel]:
    """Per-cell dominant PoI label (largest node count; ties by label order)."""
    counts: dict[CellId, dict[PoiLabel, int]] = {}
    for node in nodes:
        if node.poi is None:
            continue
        counts.setdefault(node.cell, {}).setdefault(node.poi, 0)
        counts[node.cell][node.poi] += 1
    out = {}
    for cell, by_label in counts.items():
        out[cell] = max(by_label, key=lambda lb: (by_label[lb], -_POI_ORDER[lb]))
    return out


def poi_label_counts(nodes: Iterable[InfrastructureNode]) -> dict[CellId, int]:
    """Number of distinct PoI labels observed per cell."""
    labels: dict[CellId, set[PoiLabel]] = {}
    for node in nodes:
        if node.poi is not None:
            labels.setdefault(node.cell, set()).add(node.poi)
    return {cell: len(s) for cell, s in labels.items()}


_INFRA_HEADER = ["id", "kind", "lat", "lon", "poi"]


def load_infrastructure(stream: TextIO) -> list[InfrastructureNode]:
    """Read the infrastructure CSV (`id,kind,lat,lon,poi`); strict on errors."""
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise ValueError("missing header") from None
    if [h.strip() for h in header] != _INFRA_HEADER:
        raise ValueError(f"bad header: expected {','.join(_INFRA_HEADER)}")
    nodes = []
    seen: set[str] = set()
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 5:
            raise ValueError(f"line {lineno}: expected 5 fields")
        ident, kind_s, lat_s, lon_s, poi_s = (f.strip() for f in row)
        if not ident:
            raise ValueError(f"line {lineno}: empty id")
        if ident in seen:
            raise ValueError(f"line {lineno}: duplicate id {ident!r}")
        seen.add(ident)
        try:
            kind = NodeKind(kind_s)
        except ValueError:
            raise ValueError(f"line {lineno}: unknown kind {kind_s!r}") from None
        try:
            position = GeoPoint(float(lat_s), float(lon_s))
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
        if poi_s == "unlabeled":
            poi = None
        else:
            try:
                poi = PoiLabel(poi_s)
            except ValueError:
                raise ValueError(f"line {lineno}: unknown poi {poi_s!r}") from None
        nodes.append(InfrastructureNode(id=ident, kind=kind, position=position, poi=poi))
    return nodes


def write_infrastructure(nodes: Iterable[InfrastructureNode], stream: TextIO) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(_INFRA_HEADER)
    for node in nodes:
        writer.writerow([
            node.id,
            node.kind.value,
            repr(node.position.lat),
            repr(node.position.lon),
            node.poi.value if node.poi is not None else "unlabeled",
        ])
