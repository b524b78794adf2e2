"""Variable-step one-leg DLN integrator for first-order systems ``y' = f(t, y)``.

The family is parametrized by ``theta`` in [0, 1]; ``theta = 1`` is the one-leg
midpoint rule. Coefficients depend on the step pair only through the step
variability ``eps = (k_n - k_{n-1}) / (k_n + k_{n-1})``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (DegenerateWindowError, InvalidParameterError,
                     InvalidStepError, SolverError, StepFailure)
from .solvers import SolverConfig, solve_fixed_point, solve_newton

DEGENERACY_GUARD = 1e-12


@dataclass(frozen=True)
class SchemeCoefficients:
    theta: float
    eps: float
    alpha: tuple  # (alpha_2, alpha_1, alpha_0)
    beta: tuple   # (beta_2, beta_1, beta_0)
    a: tuple      # (a_2, a_1, a_0)
    k_hat: float
    k_prev: float
    k_curr: float

    def combine(self, weights, y_prev, y_curr, y_next):
        w2, w1, w0 = weights
        return w2 * np.asarray(y_next) + w1 * np.asarray(y_curr) + w0 * np.asarray(y_prev)

    def t_star(self, t_curr: float) -> float:
        """Evaluation time sum(beta_l t_{n-1+l}), written relative to t_n."""
        b2, _, b0 = self.beta
        return t_curr + b2 * self.k_curr - b0 * self.k_prev


@dataclass(frozen=True)
class OdeSystem:
    """Right-hand side ``rhs(t, y)`` plus an optional Jacobian ``jacobian(t, y)``."""

    rhs: Callable[[float, np.ndarray], np.ndarray]
    jacobian: Optional[Callable[[float, np.ndarray], np.ndarray]] = None
    dim: Optional[int] = None

    def __call__(self, t, y):
        return np.asarray(self.rhs(t, y), dtype=float)


@dataclass(frozen=True)
class SolutionWindow:
    """The two retained states ``(y_{n-1}, y_n)``: the method's whole memory."""

    t_prev: float
    t_curr: float
    y_prev: np.ndarray
    y_curr: np.ndarray
    k_prev: float

    def __post_init__(self):
        if not (self.k_prev > 0 and math.isfinite(self.k_prev)):
            raise InvalidStepError(f"window step must be positive, got {self.k_prev!r}")
        scale = max(1.0, abs(self.t_curr))
        if abs(self.t_curr - self.t_prev - self.k_prev) > 1e-12 * scale:
            raise InvalidStepError("window times inconsistent with k_prev")
        object.__setattr__(self, "y_prev", np.array(self.y_prev, dtype=float, ndmin=1))
        object.__setattr__(self, "y_curr", np.array(self.y_curr, dtype=float, ndmin=1))
        if self.y_prev.shape != self.y_curr.shape:
            raise InvalidParameterError("window states differ in shape")

    @classmethod
    def from_states(cls, t_prev, y_prev, t_curr, y_curr):
        return cls(t_prev, t_curr, y_prev, y_curr, t_curr - t_prev)

    def advance(self, y_next, k_next) -> "SolutionWindow":
        return SolutionWindow(self.t_curr, self.t_curr + k_next, self.y_curr,
                              y_next, k_next)


@dataclass
class StepStats:
    iterations: int
    residual_norm: float
    method: str


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # shape (n_steps + 1, dim)
    stats: list = field(default_factory=list)

    @property
    def steps(self):
        return np.diff(self.times)


def _check_step(k, name="step"):
    if not (isinstance(k, (int, float, np.floating, np.integer)) and k > 0 and math.isfinite(k)):
        raise InvalidStepError(f"{name} must be positive and finite, got {k!r}")


def _check_theta(theta):
    if not (0.0 <= theta <= 1.0):
        raise InvalidParameterError(f"theta must lie in [0, 1], got {theta!r}")


def step_variability(k_prev: float, k_curr: float) -> float:
    _check_step(k_prev, "k_prev")
    _check_step(k_curr, "k_curr")
    return (k_curr - k_prev) / (k_curr + k_prev)


def scheme_coefficients(theta: float, k_prev: float, k_curr: float) -> SchemeCoefficients:
    """DLN coefficients for the window with steps ``k_{n-1} = k_prev``, ``k_n = k_curr``."""
    _check_theta(theta)
    eps = step_variability(k_prev, k_curr)
    denom = 1.0 + eps * theta
    if denom < DEGENERACY_GUARD:
        raise DegenerateWindowError(
            f"1 + eps*theta = {denom:.3e} below guard (eps={eps}, theta={theta})")

    alpha = (0.5 * (theta + 1.0), -theta, 0.5 * (theta - 1.0))

    q = (1.0 - theta * theta) / denom**2
    b2 = 0.25 * (1.0 + q + eps * eps * theta * q + theta)
    b1 = 0.5 * (1.0 - q)
    b0 = 0.25 * (1.0 + q - eps * eps * theta * q - theta)

    a1 = -math.sqrt(theta * (1.0 - theta * theta)) / (math.sqrt(2.0) * denom)
    a2 = -0.5 * (1.0 - eps) * a1
    a0 = -0.5 * (1.0 + eps) * a1

    k_hat = 0.5 * (1.0 + theta) * k_curr + 0.5 * (1.0 - theta) * k_prev
    return SchemeCoefficients(theta=theta, eps=eps, alpha=alpha, beta=(b2, b1, b0),
                              a=(a2, a1, a0), k_hat=k_hat, k_prev=k_prev,
                              k_curr=k_curr)


def g_norm_sq(theta: float, u, v) -> float:
    """``||(u, v)||_G^2 = (1+theta)/4 ||u||^2 + (1-theta)/4 ||v||^2``."""
    _check_theta(theta)
    u = np.asarray(u)
    v = np.asarray(v)
    if u.shape != v.shape:
        raise InvalidParameterError(f"dimension mismatch: {u.shape} vs {v.shape}")
    return (0.25 * (1.0 + theta) * float(np.vdot(u, u).real)
            + 0.25 * (1.0 - theta) * float(np.vdot(v, v).real))


def one_leg_residual(coeffs: SchemeCoefficients, window: SolutionWindow, y_next,
                     system) -> np.ndarray:
    """``sum(alpha y) - k_hat f(t_*, y_*)``; zero exactly when ``y_next`` solves the step."""
    y_next = np.asarray(y_next, dtype=float)
    lhs = coeffs.combine(coeffs.alpha, window.y_prev, window.y_curr, y_next)
    y_star = coeffs.combine(coeffs.beta, window.y_prev, window.y_curr, y_next)
    return lhs - coeffs.k_hat * np.asarray(system(coeffs.t_star(window.t_curr), y_star), dtype=float)


def numerical_dissipation(coeffs: SchemeCoefficients, y_prev, y_curr, y_next) -> float:
    """``||sum(a_l y_{n-1+l})||^2 / k_hat``."""
    y_prev, y_curr, y_next = (np.asarray(y) for y in (y_prev, y_curr, y_next))
    if not (y_prev.shape == y_curr.shape == y_next.shape):
        raise InvalidParameterError("dimension mismatch between states")
    d = coeffs.combine(coeffs.a, y_prev, y_curr, y_next)
    return float(np.vdot(d, d).real) / coeffs.k_hat


def dln_step(system, window: SolutionWindow, k_next: float, theta: float = 0.5,
             config: SolverConfig = SolverConfig(), guess=None):
    """Advance one DLN step of size ``k_next``. Returns ``(y_next, StepStats)``."""
    _check_step(k_next, "k_next")
    coeffs = scheme_coefficients(theta, window.k_prev, k_next)
    a2, a1, a0 = coeffs.alpha
    b2, b1, b0 = coeffs.beta
    t_star = coeffs.t_star(window.t_curr)
    history_part = a1 * window.y_curr + a0 * window.y_prev
    beta_part = b1 * window.y_curr + b0 * window.y_prev

    if guess is None:
        guess = window.y_curr + (k_next / window.k_prev) * (window.y_curr - window.y_prev)

    def residual(y):
        return a2 * y + history_part - coeffs.k_hat * system(t_star, b2 * y + beta_part)

    try:
        if config.method == "fixed_point":
            def fixed_map(y):
                return (coeffs.k_hat * system(t_star, b2 * y + beta_part) - history_part) / a2
            y_next, iters = solve_fixed_point(fixed_map, guess, config)
        else:
            jacobian = None
            if getattr(system, "jacobian", None) is not None:
                dim = window.y_curr.size

                def jacobian(y):
                    jf = np.atleast_2d(system.jacobian(t_star, b2 * y + beta_part))
                    return a2 * np.eye(dim) - coeffs.k_hat * b2 * jf
            y_next, iters = solve_newton(residual, guess, config, jacobian=jacobian)
    except SolverError as exc:
        raise StepFailure(f"DLN step at t={window.t_curr} failed: {exc}", cause=exc,
                          last_iterate=getattr(exc, "last_iterate", None),
                          residual_norm=getattr(exc, "residual_norm", float("nan")),
                          history=getattr(exc, "history", ())) from exc
    rn = float(np.linalg.norm(residual(y_next)))
    return y_next, StepStats(iterations=iters, residual_norm=rn, method=config.method)


def bootstrap_window(system, t0: float, y0, k0: float,
                     config: SolverConfig = SolverConfig()) -> SolutionWindow:
    """Build the first window with one midpoint (theta = 1) step of size ``k0``."""
    _check_step(k0, "k0")
    y0 = np.array(y0, dtype=float, ndmin=1)
    dummy = SolutionWindow(t0 - k0, t0, y0, y0, k0)
    y1, _ = dln_step(system, dummy, k0, theta=1.0, config=config, guess=y0)
    return SolutionWindow(t0, t0 + k0, y0, y1, k0)


def march(stepper, system, window: SolutionWindow, steps: Sequence[float],
          config: SolverConfig = SolverConfig()) -> Trajectory:
    """Run ``stepper(system, window, k, config)`` over ``steps`` from ``window``."""
    times = [window.t_prev, window.t_curr]
    states = [window.y_prev, window.y_curr]
    stats = []
    for k in steps:
        y_next, st = stepper(system, window, k, config)
        window = window.advance(y_next, k)
        times.append(window.t_curr)
        states.append(y_next)
        stats.append(st)
    return Trajectory(np.array(times), np.array(states), stats)


def integrate_dln(system, t0: float, y0, steps: Sequence[float], theta: float = 0.5,
                  config: SolverConfig = SolverConfig(), y1=None) -> Trajectory:
    """Integrate over ``steps`` (``steps[0]`` is the startup step).

    The second state comes from ``y1`` when given, otherwise from a midpoint step.
    """
    steps = list(steps)
    if not steps:
        raise InvalidStepError("need at least one step")
    if y1 is None:
        window = bootstrap_window(system, t0, y0, steps[0], config)
    else:
        window = SolutionWindow(t0, t0 + steps[0], y0, y1, steps[0])

    def stepper(sys_, win, k, cfg):
        return dln_step(sys_, win, k, theta, cfg)

    return march(stepper, system, window, steps[1:], config)
