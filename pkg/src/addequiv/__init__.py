"""Simulation and verification toolkit for the white-noise equivalence of
additive nonparametric regression with random design."""

__version__ = "0.1.0"

from .basis import build_basis, project, approximation_error
from .design import DesignModel, HistogramDensity, sample_design
from .functions import AdditiveFunction, ComponentFunction, additive, center_components
from .errors import AddEquivError

__all__ = [
    "AddEquivError",
    "AdditiveFunction",
    "ComponentFunction",
    "DesignModel",
    "HistogramDensity",
    "additive",
    "approximation_error",
    "build_basis",
    "center_components",
    "project",
    "sample_design",
]
