"""Eyring-Kramers predictions and cross-validation for Witten Laplacians
of confining Morse-Bott potentials."""

from .potential import Potential, parse_potential, check_confinement
from .manifolds import (CriticalManifold, manifold_point, manifold_sphere,
                        manifold_parametrized, verify_critical,
                        classify_index, negative_direction_field)
from .sublevel import sample_grid, components, classify_separating
from .labeling import run_labeling, check_generic, SaddleRecord
from .kramers import prefactor, radial_predict, predict_all
from .spectral import assemble_witten, assemble_radial, smallest_eigs, count_small
from .quasimodes import agmon_distance, build_gluing, build_psi, rayleigh
from .sde import LangevinConfig, simulate_exit, arrhenius_fit

__version__ = "0.1.0"
