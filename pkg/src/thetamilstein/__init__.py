"""(theta, sigma)-Milstein simulation of scalar SDEs: implicit stepping,
positivity certificates, mean-square stability and strong convergence."""

__version__ = "0.1.0"

from .models import (AssumptionConstants, AuditReport, DomainError, SdeModel, audit_assumptions,
                     builtin_model, builtin_names, default_grid, estimate_growth_constants)
from .implicit import (SchemeParams, SolveOutcome, SolverError, closed_form_heston_step, eval_F,
                       max_stable_dt, solve_F)
from .rng import IncrementStream, coupled_increments
from .stepper import PathResult, b_rhs, simulate_path, simulate_paths, step
from .positivity import PositivityCertificate, certify, margin, max_dt_for_positivity
from .stability import (empirical_decay, growth_factor, lyapunov_lhs, pqr, raster_region,
                        scheme_ms_stable)
from .convergence import ConvergenceReport, fit_rate, moment_bound_check, strong_error
