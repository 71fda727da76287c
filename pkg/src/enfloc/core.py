"""Domain types: recordings, ENF series, sites, raster regions, correlation tables.

Every type is an immutable value object. Arrays are copied on construction
and marked read-only, so instances can be shared between threads.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ConfigurationError, OutOfDomainError, SchemeCoverageError

EARTH_RADIUS_MILES = 3958.8
DEFAULT_RASTER_CELLS = 200


def _frozen_array(values, dtype=np.float64) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class RawRecording:
    """One-dimensional power-mains (or audio) recording."""

    samples: np.ndarray
    sample_rate: float
    start_time: float = 0.0

    def __post_init__(self):
        samples = _frozen_array(self.samples)
        if samples.ndim != 1 or samples.size == 0:
            raise ConfigurationError("recording samples must be a nonempty 1-D sequence")
        if not np.all(np.isfinite(samples)):
            raise ConfigurationError("recording contains non-finite samples")
        if not self.sample_rate > 0:
            raise ConfigurationError(f"sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", float(self.sample_rate))
        object.__setattr__(self, "start_time", float(self.start_time))

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def with_samples(self, samples) -> "RawRecording":
        return RawRecording(samples, self.sample_rate, self.start_time)


@dataclass(frozen=True, eq=False)
class EnfSignal:
    """Per-frame instantaneous frequency estimates in Hz.

    ``flags`` marks frames whose estimate is retained but suspect (peak on
    the scan-band edge, weak tonality). It is all-False for simulated data.
    """

    values: np.ndarray
    frame_period: float = 1.0
    start_time: float = 0.0
    nominal: float = 60.0
    flags: np.ndarray | None = None

    def __post_init__(self):
        values = _frozen_array(self.values)
        if values.ndim != 1:
            raise ConfigurationError("ENF values must be 1-D")
        if not self.frame_period > 0:
            raise ConfigurationError("frame_period must be positive")
        if not np.all(np.isfinite(values)):
            raise ConfigurationError("ENF values must be finite")
        if values.size and np.max(np.abs(values - self.nominal)) > 1.0:
            raise ConfigurationError(
                f"ENF values must stay within nominal +/- 1 Hz of {self.nominal}"
            )
        flags = np.zeros(values.size, dtype=bool) if self.flags is None else self.flags
        flags = _frozen_array(flags, dtype=bool)
        if flags.shape != values.shape:
            raise ConfigurationError("flags must match values in length")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "flags", flags)
        object.__setattr__(self, "frame_period", float(self.frame_period))
        object.__setattr__(self, "start_time", float(self.start_time))
        object.__setattr__(self, "nominal", float(self.nominal))

    def __len__(self):
        return self.values.size

    @property
    def times(self) -> np.ndarray:
        return self.start_time + self.frame_period * np.arange(self.values.size)

    def replace_values(self, values, flags=None) -> "EnfSignal":
        return EnfSignal(values, self.frame_period, self.start_time, self.nominal, flags)

    def slice(self, start: int, stop: int) -> "EnfSignal":
        return EnfSignal(
            self.values[start:stop],
            self.frame_period,
            self.start_time + start * self.frame_period,
            self.nominal,
            self.flags[start:stop],
        )


@dataclass(frozen=True, eq=False)
class DetailSignal:
    """High-pass residual of an :class:`EnfSignal` (its location signature)."""

    values: np.ndarray
    frame_period: float
    origin_filter_order: int
    start_time: float = 0.0

    def __post_init__(self):
        order = self.origin_filter_order
        if int(order) != order or order < 3 or order % 2 == 0:
            raise ConfigurationError(f"filter order must be odd and >= 3, got {order}")
        object.__setattr__(self, "values", _frozen_array(self.values))
        object.__setattr__(self, "origin_filter_order", int(order))
        object.__setattr__(self, "frame_period", float(self.frame_period))

    def __len__(self):
        return self.values.size


@dataclass(frozen=True, eq=False)
class AnchorSite:
    name: str
    position: tuple[float, float]
    enf: EnfSignal | None = None

    def __post_init__(self):
        x, y = (float(v) for v in self.position)
        if not (math.isfinite(x) and math.isfinite(y)):
            raise ConfigurationError(f"anchor {self.name!r} has a non-finite position")
        object.__setattr__(self, "position", (x, y))


def check_unique_names(sites: Sequence[AnchorSite]) -> None:
    names = [s.name for s in sites]
    if len(set(names)) != len(names):
        raise ConfigurationError(f"anchor names must be unique: {names}")


def project_latlon(latlon: Sequence[tuple[float, float]]) -> np.ndarray:
    """Equirectangular projection to planar miles about the centroid.

    Returns an ``(n, 2)`` array of ``(x, y)`` miles, x pointing east.
    """
    pts = np.asarray(latlon, dtype=np.float64)
    lat0 = np.radians(pts[:, 0].mean())
    lon0 = pts[:, 1].mean()
    lat_c = pts[:, 0].mean()
    x = EARTH_RADIUS_MILES * np.radians(pts[:, 1] - lon0) * np.cos(lat0)
    y = EARTH_RADIUS_MILES * np.radians(pts[:, 0] - lat_c)
    return np.column_stack([x, y])


# ---------------------------------------------------------------------------
# raster domain and regions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridDomain:
    """Rectangular localization domain rasterized into cells.

    ``cell_size`` is nominal: the axis is split into ``round(width / cell_size)``
    equal cells, so cells tile the rectangle exactly. When omitted it
    defaults to 1/200 of the larger side.
    """

    x_range: tuple[float, float]
    y_range: tuple[float, float]
    cell_size: float | None = None

    def __post_init__(self):
        x0, x1 = (float(v) for v in self.x_range)
        y0, y1 = (float(v) for v in self.y_range)
        if not (x1 > x0 and y1 > y0):
            raise ConfigurationError("domain ranges must satisfy max > min")
        cell = self.cell_size
        if cell is None:
            cell = max(x1 - x0, y1 - y0) / DEFAULT_RASTER_CELLS
        if not cell > 0:
            raise ConfigurationError("cell_size must be positive")
        object.__setattr__(self, "x_range", (x0, x1))
        object.__setattr__(self, "y_range", (y0, y1))
        object.__setattr__(self, "cell_size", float(cell))
        if self.nx < 2 or self.ny < 2:
            raise ConfigurationError("domain needs at least 2 cells per axis")

    @classmethod
    def around(cls, points, margin: float = 0.25, cell_size: float | None = None) -> "GridDomain":
        """Bounding box of ``points`` expanded by ``margin`` of its extent per side."""
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        lo = pts.min(axis=0)
        hi = pts.max(axis=0)
        span = hi - lo
        # degenerate (collinear / single point) boxes still need a 2-D extent
        span = np.where(span > 0, span, max(span.max(), 1.0))
        pad = margin * span
        return cls((lo[0] - pad[0], hi[0] + pad[0]), (lo[1] - pad[1], hi[1] + pad[1]), cell_size)

    @property
    def width(self) -> float:
        return self.x_range[1] - self.x_range[0]

    @property
    def height(self) -> float:
        return self.y_range[1] - self.y_range[0]

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def nx(self) -> int:
        return max(1, int(round(self.width / self.cell_size)))

    @property
    def ny(self) -> int:
        return max(1, int(round(self.height / self.cell_size)))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def cell_count(self) -> int:
        return self.nx * self.ny

    @property
    def dx(self) -> float:
        return self.width / self.nx

    @property
    def dy(self) -> float:
        return self.height / self.ny

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    def x_centers(self) -> np.ndarray:
        return self.x_range[0] + (np.arange(self.nx) + 0.5) * self.dx

    def y_centers(self) -> np.ndarray:
        return self.y_range[0] + (np.arange(self.ny) + 0.5) * self.dy

    def contains_point(self, point) -> bool:
        x, y = point
        return self.x_range[0] <= x <= self.x_range[1] and self.y_range[0] <= y <= self.y_range[1]

    def cell_of(self, point) -> tuple[int, int]:
        """``(row, col)`` of the cell holding ``point``.

        A point on an edge shared by two cells goes to the one with the
        smaller row-major index.
        """
        if not self.contains_point(point):
            raise OutOfDomainError(f"point {tuple(point)} lies outside the domain")
        x, y = point
        col = math.ceil((x - self.x_range[0]) / self.dx) - 1
        row = math.ceil((y - self.y_range[0]) / self.dy) - 1
        return min(max(row, 0), self.ny - 1), min(max(col, 0), self.nx - 1)

    def to_dict(self) -> dict:
        return {"x_range": list(self.x_range), "y_range": list(self.y_range), "cell_size": self.cell_size}

    @classmethod
    def from_dict(cls, d) -> "GridDomain":
        return cls(tuple(d["x_range"]), tuple(d["y_range"]), d.get("cell_size"))


_RLE_TOKEN = re.compile(r"([FT])(\d+)")


def encode_rle(bits) -> str:
    """Run-length encode a flat boolean array as e.g. ``"F12T40F3"``."""
    flat = np.asarray(bits, dtype=bool).ravel()
    if flat.size == 0:
        return ""
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    starts = np.concatenate([[0], change])
    lengths = np.diff(np.concatenate([starts, [flat.size]]))
    return "".join(f"{'T' if flat[s] else 'F'}{n}" for s, n in zip(starts, lengths))


def decode_rle(text: str, size: int | None = None) -> np.ndarray:
    pos = 0
    chunks = []
    for m in _RLE_TOKEN.finditer(text):
        if m.start() != pos:
            raise ValueError(f"malformed RLE mask near offset {pos}")
        chunks.append(np.full(int(m.group(2)), m.group(1) == "T"))
        pos = m.end()
    if pos != len(text):
        raise ValueError(f"malformed RLE mask near offset {pos}")
    bits = np.concatenate(chunks) if chunks else np.zeros(0, dtype=bool)
    if size is not None and bits.size != size:
        raise ValueError(f"RLE mask has {bits.size} cells, expected {size}")
    return bits


@dataclass(frozen=True, eq=False)
class FeasibleRegion:
    """Boolean raster over a :class:`GridDomain`; row 0 sits at ``y_min``."""

    domain: GridDomain
    mask: np.ndarray

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool)
        if mask.size != self.domain.cell_count:
            raise ConfigurationError(
                f"mask has {mask.size} cells, domain has {self.domain.cell_count}"
            )
        object.__setattr__(self, "mask", _frozen_array(mask.reshape(self.domain.shape), dtype=bool))

    @classmethod
    def full(cls, domain: GridDomain) -> "FeasibleRegion":
        return cls(domain, np.ones(domain.shape, dtype=bool))

    @classmethod
    def empty(cls, domain: GridDomain) -> "FeasibleRegion":
        return cls(domain, np.zeros(domain.shape, dtype=bool))

    @property
    def flat(self) -> np.ndarray:
        return self.mask.ravel()

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.mask))

    @property
    def is_empty(self) -> bool:
        return self.count == 0

    def area_fraction(self) -> float:
        return self.count * self.domain.cell_area / self.domain.area

    def contains(self, point) -> bool:
        row, col = self.domain.cell_of(point)
        return bool(self.mask[row, col])

    def issubset(self, other: "FeasibleRegion") -> bool:
        self._check_same_domain(other)
        return not np.any(self.mask & ~other.mask)

    def __and__(self, other: "FeasibleRegion") -> "FeasibleRegion":
        self._check_same_domain(other)
        return FeasibleRegion(self.domain, self.mask & other.mask)

    def __eq__(self, other):
        if not isinstance(other, FeasibleRegion):
            return NotImplemented
        return self.domain == other.domain and np.array_equal(self.mask, other.mask)

    __hash__ = None

    def _check_same_domain(self, other):
        if self.domain != other.domain:
            raise ConfigurationError("regions live on different domains")

    def to_dict(self) -> dict:
        return {"domain": self.domain.to_dict(), "shape": list(self.domain.shape), "mask_rle": encode_rle(self.flat)}

    @classmethod
    def from_dict(cls, d) -> "FeasibleRegion":
        domain = GridDomain.from_dict(d["domain"])
        return cls(domain, decode_rle(d["mask_rle"], domain.cell_count))


def intersect(*regions: FeasibleRegion) -> FeasibleRegion:
    if not regions:
        raise ConfigurationError("intersect needs at least one region")
    mask = regions[0].mask.copy()
    for r in regions[1:]:
        regions[0]._check_same_domain(r)
        mask &= r.mask
    return FeasibleRegion(regions[0].domain, mask)


def region_area_fraction(region: FeasibleRegion) -> float:
    """(true cells x cell area) / domain area."""
    return region.area_fraction()


def region_contains(region: FeasibleRegion, point) -> bool:
    return region.contains(point)


# ---------------------------------------------------------------------------
# correlation tables and quantization schemes
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CorrelationTable:
    site_names: tuple[str, ...]
    rho: np.ndarray

    def __post_init__(self):
        names = tuple(self.site_names)
        rho = _frozen_array(self.rho)
        k = len(names)
        if len(set(names)) != k:
            raise ConfigurationError("site names must be unique")
        if rho.shape != (k, k):
            raise ConfigurationError(f"rho must be {k}x{k}")
        if not np.array_equal(rho, rho.T):
            raise ConfigurationError("rho must be symmetric")
        if np.any(np.abs(rho) > 1.0) or not np.all(np.diag(rho) == 1.0):
            raise ConfigurationError("rho entries must lie in [-1, 1] with a unit diagonal")
        object.__setattr__(self, "site_names", names)
        object.__setattr__(self, "rho", rho)

    def get(self, a: str, b: str) -> float:
        i = self.site_names.index(a)
        j = self.site_names.index(b)
        return float(self.rho[i, j])

    def __eq__(self, other):
        if not isinstance(other, CorrelationTable):
            return NotImplemented
        return self.site_names == other.site_names and np.array_equal(self.rho, other.rho)

    __hash__ = None

    def to_dict(self) -> dict:
        return {"site_names": list(self.site_names), "rho": self.rho.tolist()}

    @classmethod
    def from_dict(cls, d) -> "CorrelationTable":
        return cls(tuple(d["site_names"]), np.array(d["rho"], dtype=np.float64))


class QuantBin(NamedTuple):
    """``rho_lower < rho <= rho_upper``  maps to  ``d_min <= d < d_max``."""

    rho_lower: float
    rho_upper: float
    d_min: float
    d_max: float  # math.inf for the open-ended far bin


@dataclass(frozen=True)
class QuantizationScheme:
    bins: tuple[QuantBin, ...]

    def __post_init__(self):
        bins = tuple(sorted((QuantBin(*map(float, b)) for b in self.bins), key=lambda b: b.rho_lower))
        if not bins:
            raise ConfigurationError("a quantization scheme needs at least one bin")
        if bins[0].rho_lower != -1.0 or bins[-1].rho_upper != 1.0:
            raise ConfigurationError("rho bins must cover (-1, 1]")
        for lo, hi in zip(bins, bins[1:]):
            if lo.rho_upper != hi.rho_lower:
                raise ConfigurationError("rho bins must be contiguous")
            # higher correlation must map to shorter distance
            if hi.d_max > lo.d_min:
                raise ConfigurationError("distance intervals must be ordered inversely to rho")
        for b in bins:
            if not b.rho_lower < b.rho_upper:
                raise ConfigurationError(f"empty rho interval in {b}")
            if not (0 <= b.d_min < b.d_max):
                raise ConfigurationError(f"invalid distance interval in {b}")
        object.__setattr__(self, "bins", bins)

    def bin_index(self, rho: float) -> int:
        rho = float(rho)
        for k, b in enumerate(self.bins):
            if b.rho_lower < rho <= b.rho_upper or (k == 0 and rho == b.rho_lower):
                return k
        raise SchemeCoverageError(f"rho={rho!r} falls in no quantization bin")

    def lookup(self, rho: float) -> tuple[float, float]:
        b = self.bins[self.bin_index(rho)]
        return b.d_min, b.d_max

    def to_dict(self) -> dict:
        return {
            "bins": [
                {
                    "rho_lower": b.rho_lower,
                    "rho_upper": b.rho_upper,
                    "d_min": b.d_min,
                    "d_max": None if math.isinf(b.d_max) else b.d_max,
                }
                for b in self.bins
            ]
        }

    @classmethod
    def from_dict(cls, d) -> "QuantizationScheme":
        return cls(
            tuple(
                QuantBin(
                    b["rho_lower"],
                    b["rho_upper"],
                    b["d_min"],
                    math.inf if b.get("d_max") is None else b["d_max"],
                )
                for b in d["bins"]
            )
        )
