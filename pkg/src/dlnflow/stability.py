"""Executable checks of the DLN stability and consistency properties."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .bdf2 import bdf2_step
from .core import (OdeSystem, SolutionWindow, bootstrap_window, dln_step,
                   g_norm_sq, march, scheme_coefficients)
from .errors import InvalidParameterError
from .solvers import SolverConfig


def _coefficient_arrays(theta, eps):
    # any step pair with the requested variability; the identity is scale free
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    eps = np.broadcast_to(np.asarray(eps, dtype=float), theta.shape)
    cs = [scheme_coefficients(float(t), 1.0 - float(e), 1.0 + float(e))
          for t, e in zip(theta.ravel(), eps.ravel())]
    alpha = np.array([c.alpha for c in cs]).reshape(theta.shape + (3,))
    beta = np.array([c.beta for c in cs]).reshape(theta.shape + (3,))
    a = np.array([c.a for c in cs]).reshape(theta.shape + (3,))
    return theta, alpha, beta, a


def g_identity_terms(theta, eps, y_prev, y_curr, y_next):
    """Both sides of the G-stability identity, evaluated independently.

    Returns ``(lhs, rhs, scale)`` with ``lhs = (sum alpha y, sum beta y)`` and
    ``rhs = G(y_{n+1}, y_n) - G(y_n, y_{n-1}) + ||sum a y||^2``. ``scale`` bounds
    the magnitude of the floating point terms entering either side. States may
    carry leading batch axes matching ``theta``/``eps``; the last axis is the
    state dimension.
    """
    scalar = np.ndim(theta) == 0
    theta, alpha, beta, a = _coefficient_arrays(theta, eps)
    ys = [np.asarray(y, dtype=float).reshape(theta.shape + (-1,))
          for y in (y_next, y_curr, y_prev)]

    def comb(w):
        return sum(w[..., i, None] * ys[i] for i in range(3))

    lin_a, lin_b, lin_d = comb(alpha), comb(beta), comb(a)
    sq = [np.sum(y * y, axis=-1) for y in ys]
    lhs = np.sum(lin_a * lin_b, axis=-1)
    g_new = 0.25 * (1 + theta) * sq[0] + 0.25 * (1 - theta) * sq[1]
    g_old = 0.25 * (1 + theta) * sq[1] + 0.25 * (1 - theta) * sq[2]
    diss = np.sum(lin_d * lin_d, axis=-1)
    rhs = g_new - g_old + diss

    norms = np.sqrt(np.stack(sq, axis=-1))

    def bound(w):
        return np.sum(np.abs(w) * norms, axis=-1)

    scale = bound(alpha) * bound(beta) + g_new + g_old + bound(a) ** 2
    if scalar:
        return float(lhs[0]), float(rhs[0]), float(scale[0])
    return lhs, rhs, scale


def g_identity_gap(theta, eps, y_prev, y_curr, y_next, relative=False):
    """Absolute (or scale-relative) defect of the G-stability identity."""
    lhs, rhs, scale = g_identity_terms(theta, eps, y_prev, y_curr, y_next)
    gap = np.abs(np.asarray(lhs) - np.asarray(rhs))
    if relative:
        gap = np.where(np.asarray(scale) > 0, gap / np.where(np.asarray(scale) > 0, scale, 1.0), 0.0)
    return float(gap) if np.ndim(gap) == 0 else gap


def g_identity_fuzz(n_samples: int, seed: int = 0, max_dim: int = 8,
                    eps_bound: float = 0.999):
    """Randomized sweep; returns a record array of (theta, eps, dim, gap, rel_gap).

    Dimensions are drawn in ``1..max_dim``; unused trailing components are zero.
    State magnitudes span six decades.
    """
    rng = np.random.default_rng(seed)
    thetas = rng.uniform(0.0, 1.0, n_samples)
    epss = rng.uniform(-eps_bound, eps_bound, n_samples)
    dims = rng.integers(1, max_dim + 1, n_samples)
    mags = 10.0 ** rng.uniform(-3, 3, n_samples)
    ys = rng.standard_normal((3, n_samples, max_dim)) * mags[None, :, None]
    ys *= (np.arange(max_dim)[None, None, :] < dims[None, :, None])
    lhs, rhs, scale = g_identity_terms(thetas, epss, ys[2], ys[1], ys[0])
    out = np.zeros(n_samples, dtype=[("theta", float), ("eps", float), ("dim", int),
                                     ("gap", float), ("rel_gap", float)])
    gap = np.abs(lhs - rhs)
    out["theta"], out["eps"], out["dim"] = thetas, epss, dims
    out["gap"] = gap
    out["rel_gap"] = np.where(scale > 0, gap / np.where(scale > 0, scale, 1.0), 0.0)
    return out


@dataclass(frozen=True)
class BoundaryLocus:
    theta: float
    phi: np.ndarray
    z: np.ndarray
    pole: np.ndarray  # True where sigma(e^{i phi}) vanishes

    @property
    def samples(self):
        return list(zip(self.phi, self.z))

    def min_real(self) -> float:
        return float(np.min(self.z.real[~self.pole]))

    def max_abs_real(self) -> float:
        return float(np.max(np.abs(self.z.real[~self.pole])))


def _locus(rho, sigma, n_samples, theta, pole_tol):
    # z = rho * conj(sigma) / |sigma|^2 with both products expanded in cos/sin of
    # (l - m) phi, so exact cancellations (e.g. Re z = 0 for the midpoint rule)
    # survive near the poles of sigma.
    if n_samples < 1:
        raise InvalidParameterError("n_samples must be positive")
    phi = 2.0 * np.pi * np.arange(n_samples) / n_samples
    deg = len(rho) - 1
    num_re = np.zeros(n_samples)
    num_im = np.zeros(n_samples)
    den = np.zeros(n_samples)
    for i, (r_i, s_i) in enumerate(zip(rho, sigma)):
        for j, s_j in enumerate(sigma):
            shift = (j - i) * phi  # powers deg-i and deg-j
            num_re += r_i * s_j * np.cos(shift)
            num_im += r_i * s_j * np.sin(shift)
            den += s_i * s_j * np.cos(shift)
    pole = den <= (pole_tol * sum(abs(x) for x in sigma)) ** 2
    safe = np.where(pole, 1.0, den)
    z = np.where(pole, np.nan + 0j, (num_re + 1j * num_im) / safe)
    return BoundaryLocus(theta, phi, z, pole)


def root_locus(theta: float, n_samples: int = 10_000, pole_tol: float = 1e-12) -> BoundaryLocus:
    """Boundary ``z(phi) = rho(e^{i phi}) / sigma(e^{i phi})`` of constant-step DLN."""
    c = scheme_coefficients(theta, 1.0, 1.0)
    return _locus(list(c.alpha), list(c.beta), n_samples, theta, pole_tol)


def bdf2_root_locus(n_samples: int = 10_000) -> BoundaryLocus:
    """Constant-step BDF2 boundary, for side-by-side plots."""
    return _locus([1.5, -2.0, 0.5], [1.0, 0.0, 0.0], n_samples, float("nan"), 1e-12)


@dataclass
class ConsistencyResult:
    ks: np.ndarray
    state_errors: np.ndarray
    derivative_errors: np.ndarray
    order_state: float
    order_derivative: float


def fit_order(ks, errors, finest: int = 4) -> float:
    """Least-squares slope of log(error) against log(k) over the ``finest`` levels."""
    ks = np.asarray(ks, dtype=float)[-finest:]
    errors = np.asarray(errors, dtype=float)[-finest:]
    if np.any(errors <= 0) or not np.all(np.isfinite(errors)):
        return float("nan")
    slope, _ = np.polyfit(np.log(ks), np.log(errors), 1)
    return float(slope)


STEP_LAWS = {
    "constant": ((1.0, 1.0),),
    "alternating": ((1.0, 2.0), (2.0, 1.0)),
}


def consistency_order(u: Callable[[float], float], du: Callable[[float], float],
                      theta: float, step_law="constant", levels: int = 6,
                      k0: float = 0.1, anchors: Sequence[float] = (0.3, 0.7, 1.1)
                      ) -> ConsistencyResult:
    """Measure the local consistency errors of the state and derivative functionals.

    At each level ``k = k0 * 2^-j`` the window step pairs come from ``step_law``
    (a name in ``STEP_LAWS`` or a sequence of ``(m_prev, m_curr)`` multipliers of
    k); errors are the maxima over the anchor times ``t_n`` and step pairs of

        |sum(beta u(t_l)) - u(t_*)|   and   |sum(alpha u(t_l)) / k_hat - u'(t_*)|.
    """
    pairs = STEP_LAWS[step_law] if isinstance(step_law, str) else tuple(step_law)
    ks = k0 * 2.0 ** -np.arange(levels)
    es, ed = np.zeros(levels), np.zeros(levels)
    for j, k in enumerate(ks):
        for mp, mc in pairs:
            c = scheme_coefficients(theta, mp * k, mc * k)
            for tn in anchors:
                ts = (tn + mc * k, tn, tn - mp * k)
                vals = [u(t) for t in ts]
                t_star = c.t_star(tn)
                state = sum(w * v for w, v in zip(c.beta, vals)) - u(t_star)
                deriv = sum(w * v for w, v in zip(c.alpha, vals)) / c.k_hat - du(t_star)
                es[j] = max(es[j], abs(state))
                ed[j] = max(ed[j], abs(deriv))
    return ConsistencyResult(ks, es, ed, fit_order(ks, es), fit_order(ks, ed))


@dataclass
class LinearRun:
    times: np.ndarray
    y: np.ndarray        # complex trajectory
    g_norms: np.ndarray  # G(y_{n+1}, y_n) for every window after the first


def _complex_system(lambda_fn):
    def rhs(t, y):
        lam = complex(lambda_fn(t))
        return np.array([lam.real * y[0] - lam.imag * y[1],
                         lam.imag * y[0] + lam.real * y[1]])

    def jac(t, y):
        lam = complex(lambda_fn(t))
        return np.array([[lam.real, -lam.imag], [lam.imag, lam.real]])

    return OdeSystem(rhs, jacobian=jac, dim=2)


def linear_test_run(lambda_fn: Callable[[float], complex], steps: Sequence[float],
                    theta: float = 0.5, y0: complex = 1.0, t0: float = 0.0,
                    method: str = "dln") -> LinearRun:
    """Integrate ``y' = lambda(t) y`` with complex ``y`` stored as a real 2-vector.

    ``steps[0]`` is the midpoint startup step; ``method`` is ``"dln"`` or ``"bdf2"``.
    The G-norm series is reported with ``theta`` for either method.
    """
    system = _complex_system(lambda_fn)
    config = SolverConfig(method="newton", abs_tol=1e-300, rel_tol=1e-13)
    y0v = np.array([complex(y0).real, complex(y0).imag])
    steps = list(steps)
    window = bootstrap_window(system, t0, y0v, steps[0], config)
    if method == "dln":
        stepper = lambda s, w, k, cfg: dln_step(s, w, k, theta, cfg)
    elif method == "bdf2":
        stepper = lambda s, w, k, cfg: bdf2_step(s, w, k, cfg)
    else:
        raise InvalidParameterError(f"unknown method {method!r}")
    traj = march(stepper, system, window, steps[1:], config)
    y = traj.states[:, 0] + 1j * traj.states[:, 1]
    g = np.array([g_norm_sq(theta, traj.states[i + 1], traj.states[i])
                  for i in range(len(traj.states) - 1)])
    return LinearRun(traj.times, y, g)
