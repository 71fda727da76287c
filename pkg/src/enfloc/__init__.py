"""Electric network frequency extraction, location signatures and grid localization."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    AnchorSite,
    CorrelationTable,
    DetailSignal,
    EnfSignal,
    FeasibleRegion,
    GridDomain,
    QuantBin,
    QuantizationScheme,
    RawRecording,
    intersect,
    region_area_fraction,
    region_contains,
)
from .errors import *  # noqa: E402,F401,F403
from .extraction import ExtractionConfig, extract_enf  # noqa: E402
from .geolocate import (  # noqa: E402
    LocalizationQuery,
    LocalizationReport,
    combined_locate,
    estimate_distance_linear,
    fit_quantization,
    halfplane_locate,
    metrics,
    quantization_locate,
)
from .gridsim import SimConfig, add_awgn_to_enf, simulate_enf_grid, synthesize_waveform  # noqa: E402
from .signature import align, corrcoef, highpass_detail, pairwise_table  # noqa: E402
