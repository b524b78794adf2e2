"""Root finders for the per-step implicit equations.

Both solvers share one stopping contract: the returned point ``x`` satisfies
``||residual(x)|| <= abs_tol + rel_tol * ||x||`` in the Euclidean norm.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from .errors import (ConvergenceError, DivergenceError, InvalidParameterError,
                     SingularJacobianError)

Vector = np.ndarray


@dataclass(frozen=True)
class SolverConfig:
    method: str = "newton"  # "newton" | "fixed_point"
    abs_tol: float = 1e-12
    rel_tol: float = 1e-12
    max_iter: int = 50
    fd_epsilon: float = 1e-7
    damping: float = 1.0

    def __post_init__(self):
        if self.method not in ("newton", "fixed_point"):
            raise InvalidParameterError(f"unknown solver method {self.method!r}")
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise InvalidParameterError("tolerances must be positive")
        if self.max_iter < 1:
            raise InvalidParameterError("max_iter must be >= 1")
        if self.fd_epsilon <= 0:
            raise InvalidParameterError("fd_epsilon must be positive")
        if not 0 < self.damping <= 1:
            raise InvalidParameterError("damping must lie in (0, 1]")

    def tolerance(self, x: Vector) -> float:
        return self.abs_tol + self.rel_tol * float(np.linalg.norm(x))


def _check_finite(x, history, it):
    if not np.all(np.isfinite(x)):
        raise DivergenceError("iterate became non-finite", last_iterate=x,
                              residual_norm=float("inf"), iterations=it,
                              history=history)


def solve_fixed_point(fixed_map: Callable[[Vector], Vector], guess,
                      config: SolverConfig = SolverConfig(method="fixed_point")):
    """Damped Picard iteration ``x <- x + w (g(x) - x)`` for ``x = g(x)``.

    The residual is ``g(x) - x``. Returns ``(root, iterations)`` where
    ``iterations`` counts the updates applied to ``guess``.
    """
    x = np.array(guess, dtype=float, copy=True, ndmin=1)
    history = []
    for it in range(config.max_iter + 1):
        r = np.asarray(fixed_map(x), dtype=float) - x
        rn = float(np.linalg.norm(r))
        history.append(rn)
        if not np.isfinite(rn):
            raise DivergenceError("fixed-point residual became non-finite",
                                  last_iterate=x, residual_norm=rn,
                                  iterations=it, history=history)
        if rn <= config.tolerance(x):
            return x, it
        if it == config.max_iter:
            break
        x = x + config.damping * r
        _check_finite(x, history, it + 1)
    raise ConvergenceError(
        f"fixed-point iteration did not converge in {config.max_iter} iterations "
        f"(residual {history[-1]:.3e})",
        last_iterate=x, residual_norm=history[-1], iterations=config.max_iter,
        history=history)


def fd_jacobian(residual: Callable[[Vector], Vector], x: Vector, fd_epsilon: float,
                r0: Optional[Vector] = None) -> np.ndarray:
    """Forward-difference Jacobian with per-component step ``eps*max(1,|x_i|)``."""
    x = np.asarray(x, dtype=float)
    if r0 is None:
        r0 = np.asarray(residual(x), dtype=float)
    jac = np.empty((r0.size, x.size))
    for i in range(x.size):
        h = fd_epsilon * max(1.0, abs(x[i]))
        xp = x.copy()
        xp[i] += h
        jac[:, i] = (np.asarray(residual(xp), dtype=float) - r0) / h
    return jac


def _lu_solve(jac: np.ndarray, rhs: Vector) -> Vector:
    if not np.all(np.isfinite(jac)):
        raise SingularJacobianError("Jacobian contains non-finite entries")
    lu, piv = scipy.linalg.lu_factor(jac, check_finite=False)
    diag = np.abs(np.diag(lu))
    if diag.size and (diag.min() == 0.0 or diag.min() <= 1e-14 * diag.max()):
        raise SingularJacobianError("Jacobian is numerically singular")
    return scipy.linalg.lu_solve((lu, piv), rhs, check_finite=False)


def solve_newton(residual: Callable[[Vector], Vector], guess,
                 config: SolverConfig = SolverConfig(),
                 jacobian: Optional[Callable[[Vector], np.ndarray]] = None):
    """Newton iteration with dense LU; finite differences when ``jacobian`` is None."""
    x = np.array(guess, dtype=float, copy=True, ndmin=1)
    history = []
    for it in range(config.max_iter + 1):
        r = np.atleast_1d(np.asarray(residual(x), dtype=float))
        rn = float(np.linalg.norm(r))
        history.append(rn)
        if not np.isfinite(rn):
            raise DivergenceError("Newton residual became non-finite",
                                  last_iterate=x, residual_norm=rn,
                                  iterations=it, history=history)
        if rn <= config.tolerance(x):
            return x, it
        if it == config.max_iter:
            break
        if jacobian is None:
            jac = fd_jacobian(residual, x, config.fd_epsilon, r0=r)
        else:
            jac = np.atleast_2d(np.asarray(jacobian(x), dtype=float))
        x = x - _lu_solve(jac, r)
        _check_finite(x, history, it + 1)
    raise ConvergenceError(
        f"Newton iteration did not converge in {config.max_iter} iterations "
        f"(residual {history[-1]:.3e})",
        last_iterate=x, residual_norm=history[-1], iterations=config.max_iter,
        history=history)
