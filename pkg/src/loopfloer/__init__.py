"""Discrete loop-space heat flow, its eps-Floer lifts, and numerical checks of the analytic estimates.

Submodules:

``geometry``        flat torus and round sphere backends
``loops``           discrete loops, perturbations and action functionals
``critical``        periodic orbits, Hessians, Morse indices
``heatflow``        heat-flow cylinders and the linearized parabolic operator
``floer``           eps-Floer lifts by Newton-Picard iteration
``homology``        Z/2 Morse complexes, filtrations and their maps
``lab``             numerical checks of the analytic estimates
``driver``          scenarios, run store and the ``loopfloer`` command line
"""

from . import critical, errors, floer, geometry, heatflow, homology, kernels, lab, loops, stencils
from .critical import PeriodicOrbit, SamplingPlan, enumerate_orbits, find_orbit, morse_index, spectrum
from .errors import LoopFloerError
from .floer import enumerate_M_eps, newton_picard_lift
from .geometry import FlatTorus, Sphere2, make_backend
from .heatflow import Cylinder, enumerate_M0
from .homology import build_complex, homology_ranks
from .loops import (DiscreteLoop, FourierPotential, Perturbation, cosine_potential, moving_cosine_potential,
                    wobble_potential)

__version__ = "0.1.0"

__all__ = [
    "critical", "errors", "floer", "geometry", "heatflow", "homology", "kernels", "lab", "loops", "stencils",
    "PeriodicOrbit", "SamplingPlan", "enumerate_orbits", "find_orbit", "morse_index", "spectrum",
    "LoopFloerError", "enumerate_M_eps", "newton_picard_lift", "FlatTorus", "Sphere2", "make_backend",
    "Cylinder", "enumerate_M0", "build_complex", "homology_ranks", "DiscreteLoop", "FourierPotential",
    "Perturbation", "cosine_potential", "moving_cosine_potential", "wobble_potential", "__version__",
]
