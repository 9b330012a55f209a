"""Dispersive atom-light interface of cold cesium atoms near an optical nanofiber.

Modules
-------
fiber_modes          HE11 dispersion, mode profiles, normalisation, areas
dyadic_greens        guided Green's function, Gamma_1D, transmission/reflection
atomic_structure     cesium data, Clebsch-Gordan/6-j algebra, clock polarizability
squeezing_dynamics   magic frequencies, couplings, pumping rates, moment equations
cli                  the ``nanofiber-qsim`` batch command
"""

__version__ = "0.1.0"

from .atomic_structure import AtomicSystem, QuantizationAxis, load_system
from .fiber_modes import FiberSpec, GuidedModeSolution, ModeField, solve_he11

__all__ = [
    "AtomicSystem",
    "FiberSpec",
    "GuidedModeSolution",
    "ModeField",
    "QuantizationAxis",
    "load_system",
    "solve_he11",
]
