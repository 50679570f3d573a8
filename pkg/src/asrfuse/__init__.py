"""asrfuse: SSL speech objectives, articulatory inversion, system combination
and evaluation statistics at desk scale, on seeded float64 numerics."""

from . import a2a, bottleneck, combine, features, formats, numcore, scoring
from . import ssl_objectives

__version__ = "0.1.0"

__all__ = [
    "a2a",
    "bottleneck",
    "combine",
    "features",
    "formats",
    "numcore",
    "scoring",
    "ssl_objectives",
]
