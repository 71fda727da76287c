"""Ready-made geometries, schemes and pipeline settings."""

from __future__ import annotations

import math

import numpy as np

from .core import QuantBin, QuantizationScheme, project_latlon

# (name, latitude, longitude)
FIVE_CITIES = (
    ("Champaign", 40.1164, -88.2434),
    ("Raleigh", 35.7796, -78.6382),
    ("Atlanta", 33.7490, -84.3880),
    ("CollegePark", 38.9807, -76.9369),
    ("Princeton", 40.3573, -74.6672),
)

# three sites on a line: 150 mi, 540 mi and 690 mi apart
COLLINEAR_SITES = (("S1", 0.0, 0.0), ("S2", 150.0, 0.0), ("S3", 690.0, 0.0))

PAPER_FILTER_ORDER = 3
PAPER_FRAME_SECONDS = 1.0
PAPER_SEGMENT_FRAMES = 600


def five_city_sites() -> tuple[tuple[str, float, float], ...]:
    """The five cities projected to planar miles about their centroid."""
    xy = project_latlon([(lat, lon) for _, lat, lon in FIVE_CITIES])
    return tuple((name, float(x), float(y)) for (name, _, _), (x, y) in zip(FIVE_CITIES, xy))


def paper_scheme() -> QuantizationScheme:
    """Correlation bins and distance ranges of the published five-city fit."""
    return QuantizationScheme(
        (
            QuantBin(0.9, 1.0, 100.0, 220.0),
            QuantBin(0.83, 0.9, 220.0, 450.0),
            QuantBin(0.55, 0.83, 450.0, 900.0),
            QuantBin(-1.0, 0.55, 900.0, math.inf),
        )
    )


def pairwise_distances(sites) -> np.ndarray:
    p = np.array([(x, y) for _, x, y in sites], dtype=np.float64)
    return np.sqrt(((p[:, None] - p[None]) ** 2).sum(-1))
