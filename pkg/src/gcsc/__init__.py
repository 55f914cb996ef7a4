"""Convolutional sparse coding with Gaussian-mixture noise (GCSC).

Filters and codes are fitted by EM; the M-step solves a weighted CSC
problem with a nonconvex accelerated proximal gradient method. ADMM-based
square-loss and l1-loss CSC baselines and a synthetic benchmark are included.
"""

from .csc_core import csc_objective, random_init, reconstruct
from .errors import CSCError, DimensionError, InvalidInputError, NumericalError
from .gcsc_em import GcscConfig, GcscModel, fit
from .gmm_noise import GmmParams

__version__ = "0.1.0"

__all__ = [
    "CSCError", "DimensionError", "GcscConfig", "GcscModel", "GmmParams",
    "InvalidInputError", "NumericalError", "csc_objective", "fit", "random_init",
    "reconstruct",
]
