"""Vine-copula block grouping and effective-number-of-tests calibration."""
from .dissmann import pseudo_obs, select_structure
from .estimators import BlockMeffTest, VineCopula
from .exceptions import (CalibrationError, ConfigurationError, DegenerateError, DomainError,
                         OptimizationError, StructureError, VineMeffError)
from .grouping import Grouping, greedy_grouping
from .meff import Calibration, calibrate, decide
from .numerics import RngStream
from .pair_copulas import Family, PairCopulaSpec
from .sampler import sample, sample_with_marginals
from .vine_model import VineEdge, VineModel, VineStructure

__version__ = "0.1.0"

__all__ = [
    "BlockMeffTest",
    "Calibration",
    "CalibrationError",
    "ConfigurationError",
    "DegenerateError",
    "DomainError",
    "Family",
    "Grouping",
    "OptimizationError",
    "PairCopulaSpec",
    "RngStream",
    "StructureError",
    "VineCopula",
    "VineEdge",
    "VineMeffError",
    "VineModel",
    "VineStructure",
    "calibrate",
    "decide",
    "greedy_grouping",
    "pseudo_obs",
    "sample",
    "sample_with_marginals",
    "select_structure",
]
