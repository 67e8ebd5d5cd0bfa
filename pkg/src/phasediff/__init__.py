"""Joint estimation of a phase and its Gaussian diffusion amplitude."""
from .encoding import ParamPoint, QubitPrep, equatorial_state, two_copy_equatorial
from .information import bell_merit_analytic, figure_of_merit, qfim, qfim_analytic
from .linalg import Povm, solve_sld
from .measurement import bell_povm, bell_probs, build_walk_unitary, walk_to_povm

__version__ = "0.1.0"

__all__ = [
    "ParamPoint",
    "Povm",
    "QubitPrep",
    "bell_merit_analytic",
    "bell_povm",
    "bell_probs",
    "build_walk_unitary",
    "equatorial_state",
    "figure_of_merit",
    "qfim",
    "qfim_analytic",
    "solve_sld",
    "two_copy_equatorial",
    "walk_to_povm",
]
