"""Fokker-Planck relaxation through weighted-Laplacian spectra and contact Hamiltonian flows.

Typical use::

    from gfc import Grid, PotentialSpec, gibbs_state, laplacian_G, eigendecompose

    grid = Grid(-10.0, 10.0, 2001)
    gibbs = gibbs_state(PotentialSpec.quadratic(mu=1.0, beta=1.0), grid)
    spec = eigendecompose(laplacian_G(gibbs), k=8)
"""

from .contact import (
    ContactTrajectory,
    GeneralHamiltonian,
    RelaxationHamiltonian,
    TiltedHamiltonian,
    alt_z_flows,
    equivalence_check,
    flow_closed_form,
    flow_rk4,
    tilted_contact_field,
    vector_field,
)
from .evolution import (
    ModeCoefficients,
    StateField,
    TrajectorySample,
    advance,
    band_limited,
    crank_nicolson,
    density,
    expand,
    free_energy,
    ground_state_transform,
    lyapunov,
    project_slowest,
    propagate,
    slowest_field,
    step_crank_nicolson,
)
from .geometry import Grid, WeightedLaplacian, codiff, codiff_G, d, inner_G, laplacian_G, norm_G
from .model import GibbsState, ObservableSet, PotentialSpec, gibbs_state, parse_potential, tilt
from .operators import D_dagger_D, L_beta_h, fp_rhs, li_rhs, witten_variants
from .spectral import Spectrum, eigendecompose, lambda1_sensitivity, slow_group, tilted_lambda1
from .thermo import ThermoPoint, expectation, legendrian, moment_observables, psi_G

__version__ = "0.1.0"

__all__ = [
    "ContactTrajectory", "GeneralHamiltonian", "RelaxationHamiltonian", "TiltedHamiltonian",
    "alt_z_flows", "equivalence_check", "flow_closed_form", "flow_rk4", "tilted_contact_field",
    "vector_field", "ModeCoefficients", "StateField", "TrajectorySample", "advance", "band_limited",
    "crank_nicolson", "density", "expand", "free_energy", "ground_state_transform", "lyapunov",
    "project_slowest", "propagate", "slowest_field", "step_crank_nicolson", "Grid",
    "WeightedLaplacian", "codiff", "codiff_G", "d", "inner_G", "laplacian_G", "norm_G",
    "GibbsState", "ObservableSet", "PotentialSpec", "gibbs_state", "parse_potential", "tilt",
    "D_dagger_D", "L_beta_h", "fp_rhs", "li_rhs", "witten_variants", "Spectrum", "eigendecompose",
    "lambda1_sensitivity", "slow_group", "tilted_lambda1", "ThermoPoint", "expectation",
    "legendrian", "moment_observables", "psi_G",
]
