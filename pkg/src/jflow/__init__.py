"""Numerical laboratory for the J-flow on the flat complex 2-torus.

Modules:

* ``torus``        spectral calculus and Hermitian form fields
* ``cohomology``   classes, pairings, cone conditions, divisor model
* ``split``        product-backend factor calculus
* ``flow``         the RK4 method-of-lines integrator and family driver
* ``ma``           complex Monge-Ampere Newton solver and closed-form oracles
* ``functionals``  energy functionals (J, I, E, Mabuchi)
* ``diagnostics``  estimate monitors and fits
* ``presets``      pinned experiment configurations
* ``cli``          command-line driver (``jflow``)
"""

__version__ = "0.1.0"

from .cohomology import (
    ClosedForm,
    CohomologyClass,
    c_constant,
    class_pairing,
    cone_condition,
)
from .flow import FlowConfig, epsilon_family, evolve
from .ma import MASolverConfig, solve_ma, solve_ma_split, split_critical
from .presets import build_preset
from .torus import Grid, HermitianFormField, ScalarField

__all__ = [
    "__version__",
    "CohomologyClass",
    "ClosedForm",
    "class_pairing",
    "c_constant",
    "cone_condition",
    "FlowConfig",
    "evolve",
    "epsilon_family",
    "MASolverConfig",
    "solve_ma",
    "solve_ma_split",
    "split_critical",
    "build_preset",
    "Grid",
    "HermitianFormField",
    "ScalarField",
]
