"""deltamaps: spatial domains of gridded time series and the lagged network between them."""

__version__ = "0.1.0"

from .errors import (ConfigError, DataError, DegenerateSeriesError, DeltaMapsError,
                     EmptyGridError, NoSignalError)
from .grid import GridGraph, build_grid, from_adjacency, k_neighborhood, is_contiguous
from .ingest import Field, preprocess, read_field, write_field
from .delta import estimate_delta
from .domains import DomainSet, identify_domains
from .network import DomainNetwork, benjamini_hochberg, infer_network
from .analysis import analyze
from .synth import SyntheticSpec, generate

__all__ = [
    "ConfigError", "DataError", "DegenerateSeriesError", "DeltaMapsError", "EmptyGridError",
    "NoSignalError", "GridGraph", "build_grid", "from_adjacency", "k_neighborhood",
    "is_contiguous", "Field", "preprocess", "read_field", "write_field", "estimate_delta",
    "DomainSet", "identify_domains", "DomainNetwork", "benjamini_hochberg", "infer_network",
    "analyze", "SyntheticSpec", "generate",
]
