"""Degenerate Ornstein-Uhlenbeck problems under time-dependent diffusive perturbations.

Monte Carlo Duhamel solvers with Poisson randomisation of the perturbation,
closed-form Gaussian oracles, and anisotropic Hoelder/Sobolev seminorm
estimators.
"""

from .levy import (NonDegeneracyReport, SpectralMeasure, check_nondegeneracy, levy_exponent,
                   sample_stable_increment, stable_constant)
from .norms import (FracQuad, HolderGrid, LatticeField, NormConfig, RatioReport,
                    frac_laplacian_dir, holder_seminorm_aniso, sobolev_seminorm_aniso)
from .oracle import (CovarianceTable, GridSpec, closed_form_field, gaussian_closed_form,
                     grid_solve_kinetic, van_loan_integral)
from .perturb import (JumpSystem, PerturbationSchedule, PoissonPath, TimeTransform, apply_J,
                      build_jump_system, build_surrogate, elliptic_embed_check, epsilon_sweep,
                      psd_sqrt, psd_sqrt_integral, sample_compound_shift, solve_perturbed,
                      solve_perturbed_batch, transform_T_solve)
from .semigroup import (BatchEstimate, DuhamelField, Estimate, MCParams, ou_covariance,
                        sample_ou_integral, solve_unperturbed, solve_unperturbed_batch)
from .sources import GaussianBump, SourceFunction, cos_window, make_term, polynomial_window
from .structure import (KalmanStructure, OperatorSpec, ValidationError, check_kalman,
                        dilation_apply, intrinsic_exponents, intrinsic_scaling,
                        is_dilation_invariant, parabolic_distance)

__version__ = "0.1.0"
