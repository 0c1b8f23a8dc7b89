"""Numerical toolkit for the Aronsson equation of symmetric control systems.

Modules
-------
sysmodel    polynomial control fields, the catalog and the Hamiltonian
candidates  candidate value functions with exact derivatives
dynamics    closed-loop integration with event detection
aronsson    residuals, monotonicity certificates, minimality and representation checks
mintime     reach-time bounds, the grid oracle and regularity probes
cli         config-driven experiment runner
"""

from . import aronsson, candidates, dynamics, errors, mintime, sysmodel
from .candidates import AbsPower, Gauge, Quadratic, example_counterexample
from .sysmodel import grushin, hamiltonian, hormander, isotropic

__all__ = [
    "aronsson",
    "candidates",
    "dynamics",
    "errors",
    "mintime",
    "sysmodel",
    "AbsPower",
    "Gauge",
    "Quadratic",
    "example_counterexample",
    "grushin",
    "hamiltonian",
    "hormander",
    "isotropic",
]

__version__ = "0.1.0"
