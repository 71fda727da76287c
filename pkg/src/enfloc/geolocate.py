"""Localization from query-to-anchor correlations.

Three raster methods share one report type:

* half-plane intersection: for every anchor pair, the query lies on the
  side of the perpendicular bisector nearer the anchor it correlates with
  more strongly (pairs whose correlation gap is below ``epsilon`` are
  skipped);
* correlation quantization: each anchor's correlation picks a distance
  interval, giving an annulus around that anchor;
* combined: the intersection of both.

Also here: the linear (two-point) distance estimator and the
hit-rate/area metrics.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import _accel
from .core import (
    AnchorSite,
    FeasibleRegion,
    GridDomain,
    QuantBin,
    QuantizationScheme,
    check_unique_names,
)
from .errors import (
    ConfigurationError,
    DegenerateConstraintError,
    DegenerateSlopeError,
    FittingError,
    OutOfDomainError,
)

METHODS = ("halfplane", "quantization", "combined")
DEFAULT_EPSILONS = (0.0, 0.01, 0.02, 0.05, 0.1)
DEFAULT_MARGIN = 0.25


class QuantizationRepairWarning(UserWarning):
    """Fitted distance intervals overlapped and were clipped."""


# ---------------------------------------------------------------------------
# linear distance estimation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DistanceEstimate:
    miles: float
    valid: bool

    def __float__(self):
        return self.miles


def estimate_distance_linear(rho_12: float, d_12: float, rho_23: float, d_23: float, rho_13: float) -> DistanceEstimate:
    """Distance 1-3 read off the line through (rho_12, d_12) and (rho_23, d_23).

    Negative estimates are returned as-is with ``valid=False``.
    """
    if rho_12 == rho_23:
        raise DegenerateSlopeError("rho_12 == rho_23: the reference points share a correlation")
    d = d_12 + (d_12 - d_23) / (rho_12 - rho_23) * (rho_13 - rho_12)
    return DistanceEstimate(float(d), bool(d >= 0))


def mean_distance_error(estimates: Iterable, true_distance: float) -> float:
    est = np.array([float(e) for e in estimates], dtype=np.float64)
    if est.size == 0:
        raise ConfigurationError("mean_distance_error needs at least one estimate")
    return float(np.mean(np.abs(est - true_distance)))


# ---------------------------------------------------------------------------
# queries and reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LocalizationQuery:
    anchors: tuple
    rho_query: Mapping[str, float]
    epsilon: float
    domain: GridDomain

    def __post_init__(self):
        anchors = tuple(self.anchors)
        check_unique_names(anchors)
        names = {a.name for a in anchors}
        rho = {str(k): float(v) for k, v in dict(self.rho_query).items()}
        if set(rho) != names:
            raise ConfigurationError(
                f"rho_query keys {sorted(rho)} do not match anchor names {sorted(names)}"
            )
        for k, v in rho.items():
            if not -1.0 <= v <= 1.0:
                raise ConfigurationError(f"rho for {k!r} is {v}, outside [-1, 1]")
        if not self.epsilon >= 0:
            raise ConfigurationError("epsilon must be non-negative")
        object.__setattr__(self, "anchors", anchors)
        object.__setattr__(self, "rho_query", rho)
        object.__setattr__(self, "epsilon", float(self.epsilon))

    def sorted_anchors(self) -> list[AnchorSite]:
        return sorted(self.anchors, key=lambda a: a.name)

    def with_epsilon(self, epsilon: float) -> "LocalizationQuery":
        return LocalizationQuery(self.anchors, self.rho_query, epsilon, self.domain)


@dataclass(frozen=True, eq=False)
class LocalizationReport:
    region: FeasibleRegion
    constraints_applied: int
    constraints_skipped: int
    method: str
    skipped_pairs: tuple = field(default=())

    @property
    def constraints_considered(self) -> int:
        return self.constraints_applied + self.constraints_skipped

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "constraints_applied": self.constraints_applied,
            "constraints_skipped": self.constraints_skipped,
            "skipped_pairs": [list(p) for p in self.skipped_pairs],
            "area_fraction": self.region.area_fraction(),
            "region": self.region.to_dict(),
        }

    @classmethod
    def from_dict(cls, d) -> "LocalizationReport":
        return cls(
            FeasibleRegion.from_dict(d["region"]),
            int(d["constraints_applied"]),
            int(d["constraints_skipped"]),
            d["method"],
            tuple(tuple(p) for p in d.get("skipped_pairs", [])),
        )


def default_domain(points, margin: float = DEFAULT_MARGIN, cell_size: float | None = None) -> GridDomain:
    """Bounding box of ``points`` grown by ``margin`` of its extent on each side."""
    return GridDomain.around(points, margin, cell_size)


# ---------------------------------------------------------------------------
# half-plane intersection
# ---------------------------------------------------------------------------


def halfplane_region(domain: GridDomain, p_i, p_j, delta_rho: float, epsilon: float) -> FeasibleRegion | None:
    """Feasible side of the bisector of ``p_i`` and ``p_j``, or ``None`` if skipped.

    ``delta_rho = rho(j, query) - rho(i, query)``. A positive gap keeps the
    cells strictly nearer ``p_j``; otherwise the cells no farther from
    ``p_i`` are kept. Gaps with ``|delta_rho| < epsilon`` skip the pair.
    """
    p_i = tuple(map(float, p_i))
    p_j = tuple(map(float, p_j))
    if p_i == p_j:
        raise DegenerateConstraintError(f"anchors coincide at {p_i}; no bisector exists")
    if abs(delta_rho) < epsilon:
        return None
    far_from_i = _accel.bisector_far_mask(domain.x_centers(), domain.y_centers(), p_i, p_j)
    mask = far_from_i if delta_rho > 0 else ~far_from_i
    return FeasibleRegion(domain, mask)


def _halfplane_mask(query: LocalizationQuery):
    anchors = query.sorted_anchors()
    mask = np.ones(query.domain.shape, dtype=bool)
    applied = 0
    skipped = []
    for a, b in itertools.combinations(anchors, 2):
        delta = query.rho_query[b.name] - query.rho_query[a.name]
        region = halfplane_region(query.domain, a.position, b.position, delta, query.epsilon)
        if region is None:
            skipped.append((a.name, b.name))
        else:
            mask &= region.mask
            applied += 1
    return mask, applied, tuple(skipped)


def halfplane_locate(query: LocalizationQuery) -> LocalizationReport:
    if len(query.anchors) < 2:
        raise ConfigurationError("half-plane localization needs at least 2 anchors")
    mask, applied, skipped = _halfplane_mask(query)
    return LocalizationReport(FeasibleRegion(query.domain, mask), applied, len(skipped), "halfplane", skipped)


# ---------------------------------------------------------------------------
# correlation quantization
# ---------------------------------------------------------------------------


def quantile_edges(rhos: Sequence[float], n_bins: int) -> list[float]:
    """Interior rho thresholds splitting ``rhos`` into ``n_bins`` equal-count bins."""
    if n_bins < 1:
        raise ConfigurationError("n_bins must be >= 1")
    r = np.sort(np.asarray(rhos, dtype=np.float64))
    if n_bins == 1:
        return []
    if r.size < n_bins:
        raise FittingError(f"{r.size} samples cannot fill {n_bins} bins")
    edges = []
    for k in range(1, n_bins):
        # midway between the neighbouring order statistics keeps samples off the edges
        i = k * r.size // n_bins
        edges.append(float(0.5 * (r[i - 1] + r[i])))
    return edges


def fit_quantization(
    samples: Iterable[tuple[float, float]],
    bin_edges: Sequence[float],
    open_ended: bool = False,
    from_zero: bool = False,
) -> QuantizationScheme:
    """Fit distance intervals to correlation bins from ``(distance, rho)`` samples.

    ``bin_edges`` are interior thresholds in (-1, 1); bins are
    ``(-1, e1], (e1, e2], ..., (ek, 1]``. Each bin starts as
    ``[min d, max d)`` of its samples; neighbouring intervals are then made
    contiguous by placing each shared boundary midway between the nearer
    bin's largest and the farther bin's smallest distance (a clip when the
    raw intervals overlap, which also emits a warning).

    ``open_ended=True`` lets the lowest-correlation bin extend to infinity
    and ``from_zero=True`` starts the highest-correlation bin at distance
    0, so queries farther or nearer than every fitted sample still land in
    a bin.
    """
    samples = [(float(d), float(r)) for d, r in samples]
    edges = sorted(float(e) for e in bin_edges)
    if any(not -1.0 < e < 1.0 for e in edges) or len(set(edges)) != len(edges):
        raise ConfigurationError("bin edges must be distinct values inside (-1, 1)")
    bounds = [-1.0] + edges + [1.0]
    members = [[] for _ in range(len(bounds) - 1)]
    for d, r in samples:
        if not -1.0 <= r <= 1.0:
            raise FittingError(f"sample rho {r} outside [-1, 1]")
        k = int(np.searchsorted(edges, r, side="left"))
        members[k].append(d)
    for k, m in enumerate(members):
        if not m:
            raise FittingError(f"no samples in rho bin ({bounds[k]}, {bounds[k + 1]}]")

    # walk bins from the highest correlation (shortest distance) outward
    order = list(range(len(members)))[::-1]
    lo = [min(members[k]) for k in order]
    hi = [max(members[k]) for k in order]
    cuts = [0.0 if from_zero else lo[0]]
    repaired = False
    for near in range(len(order) - 1):
        if hi[near] > lo[near + 1]:
            repaired = True
        cuts.append(0.5 * (hi[near] + lo[near + 1]))
    cuts.append(math.inf if open_ended else hi[-1])
    monotone = list(np.maximum.accumulate(cuts))
    if monotone != cuts:
        repaired = True
    for a, b, k in zip(monotone, monotone[1:], order):
        if not a < b:
            raise FittingError(
                f"rho bin ({bounds[k]}, {bounds[k + 1]}] collapses to an empty distance interval"
            )
    if repaired:
        warnings.warn("fitted distance intervals overlapped and were clipped", QuantizationRepairWarning, stacklevel=2)
    bins = [
        QuantBin(bounds[k], bounds[k + 1], monotone[pos], monotone[pos + 1])
        for pos, k in enumerate(order)
    ]
    return QuantizationScheme(tuple(bins))


def annulus_region(domain: GridDomain, p_i, rho_i: float, scheme: QuantizationScheme) -> FeasibleRegion:
    """Cells whose center distance to ``p_i`` lies in the interval selected by ``rho_i``."""
    if not -1.0 <= rho_i <= 1.0:
        raise ConfigurationError(f"rho {rho_i} outside [-1, 1]")
    d_min, d_max = scheme.lookup(rho_i)
    mask = _accel.ring_mask(domain.x_centers(), domain.y_centers(), p_i, d_min, d_max)
    return FeasibleRegion(domain, mask)


def quantization_locate(query: LocalizationQuery, scheme: QuantizationScheme) -> LocalizationReport:
    if scheme is None:
        raise ConfigurationError("quantization localization needs a scheme")
    if len(query.anchors) < 1:
        raise ConfigurationError("quantization localization needs at least 1 anchor")
    mask = np.ones(query.domain.shape, dtype=bool)
    for a in query.sorted_anchors():
        mask &= annulus_region(query.domain, a.position, query.rho_query[a.name], scheme).mask
    return LocalizationReport(FeasibleRegion(query.domain, mask), len(query.anchors), 0, "quantization")


def combined_locate(query: LocalizationQuery, scheme: QuantizationScheme) -> LocalizationReport:
    hp = halfplane_locate(query)
    qz = quantization_locate(query, scheme)
    return LocalizationReport(
        hp.region & qz.region,
        hp.constraints_applied + qz.constraints_applied,
        hp.constraints_skipped + qz.constraints_skipped,
        "combined",
        hp.skipped_pairs,
    )


def locate(query: LocalizationQuery, method: str, scheme: QuantizationScheme | None = None) -> LocalizationReport:
    if method == "halfplane":
        return halfplane_locate(query)
    if method == "quantization":
        return quantization_locate(query, scheme)
    if method == "combined":
        if scheme is None:
            raise ConfigurationError("combined localization needs a scheme")
        return combined_locate(query, scheme)
    raise ConfigurationError(f"unknown method {method!r}; expected one of {METHODS}")


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LocalizationMetrics:
    p_loc: float
    a_loc: float
    a_loc_hits: float
    queries: int
    hits: int


def metrics(results: Sequence[tuple[LocalizationReport, tuple[float, float]]]) -> LocalizationMetrics:
    """Hit rate and mean area fraction over ``(report, true_position)`` pairs.

    ``a_loc`` counts a miss as zero area; ``a_loc_hits`` averages over hits
    only (NaN when there are none). A truth outside the domain is a miss.
    """
    results = list(results)
    if not results:
        raise ConfigurationError("metrics need at least one report")
    hits = []
    areas = []
    for report, truth in results:
        try:
            hit = report.region.contains(truth)
        except OutOfDomainError:
            hit = False
        hits.append(hit)
        areas.append(report.region.area_fraction() if hit else 0.0)
    n = len(results)
    n_hit = int(sum(hits))
    hit_areas = [a for a, h in zip(areas, hits) if h]
    return LocalizationMetrics(
        p_loc=n_hit / n,
        a_loc=float(sum(areas) / n),
        a_loc_hits=float(np.mean(hit_areas)) if hit_areas else math.nan,
        queries=n,
        hits=n_hit,
    )


# ---------------------------------------------------------------------------
# GeoJSON export
# ---------------------------------------------------------------------------


def region_to_geojson(region: FeasibleRegion, properties: Mapping | None = None) -> dict:
    """Feasible cells merged into a (Multi)Polygon Feature in planar miles."""
    from shapely.geometry import box, mapping
    from shapely.ops import unary_union

    dom = region.domain
    x0, y0 = dom.x_range[0], dom.y_range[0]
    boxes = []
    for row in range(dom.ny):
        line = region.mask[row]
        if not line.any():
            continue
        padded = np.concatenate([[False], line, [False]])
        change = np.flatnonzero(padded[1:] != padded[:-1])
        for start, stop in zip(change[::2], change[1::2]):
            boxes.append(box(x0 + start * dom.dx, y0 + row * dom.dy, x0 + stop * dom.dx, y0 + (row + 1) * dom.dy))
    geometry = mapping(unary_union(boxes)) if boxes else None
    props = {"area_fraction": region.area_fraction(), "units": "miles"}
    props.update(properties or {})
    return {"type": "Feature", "geometry": _plain(geometry), "properties": props}


def _plain(obj):
    # shapely mappings hold tuples; JSON wants lists
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj
