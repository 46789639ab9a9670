from .grid import Grid, SampledFunction, forward_ft, inverse_ft, spectral_derivative
from .partition import DyadicSystem, build_dyadic_system, dyadic_block
from .spaces import BesovParams, NormReport, besov_lions_norm, besov_norm, verify_embedding
from .weights import Weight

__all__ = [
    "Grid",
    "SampledFunction",
    "forward_ft",
    "inverse_ft",
    "spectral_derivative",
    "DyadicSystem",
    "build_dyadic_system",
    "dyadic_block",
    "BesovParams",
    "NormReport",
    "besov_lions_norm",
    "besov_norm",
    "verify_embedding",
    "Weight",
]
