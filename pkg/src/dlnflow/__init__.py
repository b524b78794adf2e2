"""Variable-step DLN time integration with stability diagnostics and a periodic flow testbed."""

from .core import (OdeSystem, SchemeCoefficients, SolutionWindow, StepStats, Trajectory,
                   dln_step, g_norm_sq, integrate_dln, one_leg_residual, scheme_coefficients,
                   step_variability)
from .bdf2 import bdf2_coefficients, bdf2_step, integrate_bdf2
from .solvers import SolverConfig, solve_fixed_point, solve_newton
from .errors import (ConvergenceError, DegenerateWindowError, DivergenceError, DLNError,
                     InvalidParameterError, InvalidStepError, SingularJacobianError,
                     SolverError, StepFailure)

__version__ = "0.1.0"
