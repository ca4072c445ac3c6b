"""Bethe ansatz layer: eigenvalue formulas, Bethe equations, root solvers and ED matching."""

from .equations import (
    bae_jacobian, bae_jacobian_y, bae_residual, bae_residual_general, bae_residual_y,
    conserved_weighted_sum, energy_from_roots, energy_from_y, qc_conserved_eigenvalue,
    qc_conserved_eigenvalue_general, qc_conserved_eigenvalues, residual_norm, weighted_sum_closed_form,
)
from .full_eta import (
    bae_from_pole, bae_full_quasiclassical, bae_full_residual, boundary_constant,
    full_eta_energies_single, lambda_full, lambda_full_residue, pole_limit, solve_full_bae_single,
)
from .pipeline import (
    SpectrumMatchReport, StateRecord, StateSolution, cluster_polynomial, roots_from_conserved,
    roots_from_conserved_general, solve_state, spectrum_match,
)
from .roots import BetheRoots, ProjectiveQ, QPolynomial, polynomial_roots, roots_from_log_derivative
from .solvers import (
    HeineStieltjesResult, PathPoint, continuation_solve, heine_stieltjes_from_conserved,
    heine_stieltjes_projective, heine_stieltjes_residual, heine_stieltjes_solve, newton_refine,
    newton_solve, van_vleck_for, van_vleck_from_conserved,
)
