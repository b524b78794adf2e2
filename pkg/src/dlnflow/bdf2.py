"""Variable-step BDF2, the comparison integrator.

With ``r = k_n / k_{n-1}`` the step reads

    (1+2r)/(1+r) y_{n+1} - (1+r) y_n + r^2/(1+r) y_{n-1} = k_n f(t_{n+1}, y_{n+1}).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (SolutionWindow, StepStats, Trajectory, _check_step,
                   bootstrap_window, march)
from .errors import InvalidStepError, SolverError, StepFailure
from .solvers import SolverConfig, solve_fixed_point, solve_newton


@dataclass(frozen=True)
class Bdf2Coefficients:
    ratio: float
    leading: float
    mid: float
    trailing: float


def bdf2_coefficients(k_prev: float, k_curr: float) -> Bdf2Coefficients:
    _check_step(k_prev, "k_prev")
    _check_step(k_curr, "k_curr")
    r = k_curr / k_prev
    return Bdf2Coefficients(r, (1 + 2 * r) / (1 + r), -(1 + r), r * r / (1 + r))


def bdf2_parasitic_root(r: float) -> float:
    """Non-principal root ``r^2 / (1 + 2r)`` of the homogeneous recurrence.

    Exceeds one (zero-instability) once ``r > 1 + sqrt(2)``.
    """
    if not r > 0:
        raise InvalidStepError(f"step ratio must be positive, got {r!r}")
    return r * r / (1.0 + 2.0 * r)


def bdf2_step(system, window: SolutionWindow, k_next: float,
              config: SolverConfig = SolverConfig(), guess=None):
    _check_step(k_next, "k_next")
    c = bdf2_coefficients(window.k_prev, k_next)
    t_next = window.t_curr + k_next
    history_part = c.mid * window.y_curr + c.trailing * window.y_prev
    if guess is None:
        guess = window.y_curr + (k_next / window.k_prev) * (window.y_curr - window.y_prev)

    def residual(y):
        return c.leading * y + history_part - k_next * system(t_next, y)

    try:
        if config.method == "fixed_point":
            y_next, iters = solve_fixed_point(
                lambda y: (k_next * system(t_next, y) - history_part) / c.leading,
                guess, config)
        else:
            jacobian = None
            if getattr(system, "jacobian", None) is not None:
                dim = window.y_curr.size

                def jacobian(y):
                    return c.leading * np.eye(dim) - k_next * np.atleast_2d(system.jacobian(t_next, y))
            y_next, iters = solve_newton(residual, guess, config, jacobian=jacobian)
    except SolverError as exc:
        raise StepFailure(f"BDF2 step at t={window.t_curr} failed: {exc}", cause=exc,
                          last_iterate=getattr(exc, "last_iterate", None),
                          residual_norm=getattr(exc, "residual_norm", math.nan),
                          history=getattr(exc, "history", ())) from exc
    rn = float(np.linalg.norm(residual(y_next)))
    return y_next, StepStats(iters, rn, config.method)


def integrate_bdf2(system, t0: float, y0, steps: Sequence[float],
                   config: SolverConfig = SolverConfig(), y1=None) -> Trajectory:
    """BDF2 over ``steps``; the first step is a midpoint step unless ``y1`` is given."""
    steps = list(steps)
    if not steps:
        raise InvalidStepError("need at least one step")
    if y1 is None:
        window = bootstrap_window(system, t0, y0, steps[0], config)
    else:
        window = SolutionWindow(t0, t0 + steps[0], y0, y1, steps[0])
    return march(lambda s, w, k, cfg: bdf2_step(s, w, k, cfg), system, window,
                 steps[1:], config)
