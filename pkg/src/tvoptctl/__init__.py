"""Drive feedback-linearizable plants to the optimum of a time-varying objective.

The toolkit designs Hurwitz error dynamics for the stacked gradient of a
strongly convex time-varying objective, assembles the matching control law
through the plant's feedback-linearization data, simulates the closed loop,
and verifies the exponential convergence certificate numerically.
"""
from ._backend import HAVE_COMPILED, selected_backend
from .derivatives import (DerivativeStack, finite_difference_gradient_derivative,
                          total_gradient_derivative)
from .errors import (ConfigError, ConvergenceError, DomainError, FitError,
                     GainError, OrderError, SingularityError, SolveError,
                     StiffnessError, TvoptError, ValidationError)
from .objectives import (BarrierSum, Objective, ObjectivePartials,
                         QuadraticTracking, SwitchingBlend, barrier_sum,
                         evaluate_partials, quadratic_tracking, switching_blend)
from .paths import PolynomialPath, Waypoint, constant_path, fit_polynomial_path
from .planner import (ControlAction, ControlDiagnostics, GainProfile,
                      closed_loop_error_matrix, control_input_nonuniform,
                      control_input_uniform, design_gains,
                      plan_output_derivative)
from .plants import (ChainExtendedPlant, IntegratorPlant, ParallelPlants,
                     PlantModel, WMRPlant, attach_auxiliary_chains,
                     integrator_plant, validate_linearization, wmr_plant)
from .sim import (BoundReport, ImplicitPlanningController, SimConfig, SimTrace,
                  check_bound, error_dynamics_residual, integrate,
                  solve_optimizer, write_trace_csv)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
