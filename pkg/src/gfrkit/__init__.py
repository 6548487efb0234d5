"""Gabor-filter residual features (GFR, GFR-GSM, GFR-GW) for JPEG steganalysis."""

from .errors import GfrError
from .features import FeatureParams, FeatureVector, expected_dim, extract
from .jpeg import QuantizedJpeg, QuantTable, SpatialImage, decompress_unrounded, parse_jpeg

__version__ = "0.1.0"

__all__ = [
    "FeatureParams", "FeatureVector", "GfrError", "QuantTable", "QuantizedJpeg",
    "SpatialImage", "decompress_unrounded", "expected_dim", "extract", "parse_jpeg",
]
