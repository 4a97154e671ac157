"""Bayesian subset premiums under a fixed modulating scale."""

from .bayes import posterior_density, posterior_expectation, sigma_weight
from .config import load_scenario, load_shipped, scenario_from_doc, scenario_to_doc
from .model import Scenario, SubsetOmega
from .quadrature import QuadratureConfig

__all__ = [
    "QuadratureConfig",
    "Scenario",
    "SubsetOmega",
    "load_scenario",
    "load_shipped",
    "posterior_density",
    "posterior_expectation",
    "scenario_from_doc",
    "scenario_to_doc",
    "sigma_weight",
]

__version__ = "0.1.0"
