"""2D incompressible Navier-Stokes on a periodic square, pseudo-spectral in space.

Velocity is stored as Fourier coefficients ``u_hat[c, ix, iy]`` normalized so
that ``u(x) = sum_k u_hat_k exp(i k.x)``; with this scaling
``||u||^2 = L^2 sum |u_hat|^2``. Pressure never appears: every right side is
Leray-projected, and quadratic products are dealiased by the 2/3 rule so the
skew-symmetric convection form conserves energy to rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np
import scipy.sparse.linalg as spla

from .bdf2 import bdf2_coefficients
from .core import SchemeCoefficients, scheme_coefficients
from .errors import InvalidParameterError, StepFailure

fft2 = np.fft.fft2
ifft2 = np.fft.ifft2


class SpectralGrid:
    """Square periodic grid with ``n`` points (modes) per direction."""

    def __init__(self, n: int, length: float = 2.0 * math.pi):
        if n < 8 or n & (n - 1):
            raise InvalidParameterError(f"n must be a power of two >= 8, got {n}")
        if not length > 0:
            raise InvalidParameterError("domain length must be positive")
        self.n = int(n)
        self.length = float(length)

    def __repr__(self):
        return f"SpectralGrid(n={self.n}, length={self.length!r})"

    def __eq__(self, other):
        return (isinstance(other, SpectralGrid) and self.n == other.n
                and self.length == other.length)

    def __hash__(self):
        return hash((self.n, self.length))

    @cached_property
    def index(self):
        """Integer wavenumbers ``(m_x, m_y)`` in FFT order."""
        m = np.fft.fftfreq(self.n, 1.0 / self.n)
        return np.meshgrid(m, m, indexing="ij")

    @cached_property
    def kx(self):
        return (2.0 * math.pi / self.length) * self.index[0]

    @cached_property
    def ky(self):
        return (2.0 * math.pi / self.length) * self.index[1]

    @cached_property
    def k2(self):
        return self.kx**2 + self.ky**2

    @cached_property
    def mask(self):
        mx, my = self.index
        return (np.abs(mx) <= self.n / 3) & (np.abs(my) <= self.n / 3)

    @cached_property
    def coords(self):
        x = np.arange(self.n) * (self.length / self.n)
        return np.meshgrid(x, x, indexing="ij")

    @property
    def area(self):
        return self.length**2

    def mode_slot(self, mx: int, my: int):
        return (mx % self.n, my % self.n)

    # -- transforms ---------------------------------------------------------
    def to_spectral(self, f):
        return fft2(f, axes=(-2, -1)) / self.n**2

    def to_physical(self, f_hat, real=True):
        f = ifft2(f_hat, axes=(-2, -1)) * self.n**2
        return f.real if real else f

    def zeros(self):
        return np.zeros((2, self.n, self.n), dtype=complex)

    # -- spectral calculus ----------------------------------------------------
    def inner(self, a_hat, b_hat) -> float:
        return self.area * float(np.sum((a_hat * np.conj(b_hat)).real))

    def norm_sq(self, a_hat) -> float:
        return self.area * float(np.sum(np.abs(a_hat) ** 2))

    def grad_norm_sq(self, a_hat) -> float:
        return self.area * float(np.sum(self.k2 * np.abs(a_hat) ** 2))

    def dual_norm_sq(self, f_hat) -> float:
        """``sup_v (f, v)^2 / ||grad v||^2`` over divergence-free ``v``."""
        pf = leray_project(self, f_hat)
        if np.any(np.abs(pf[:, 0, 0]) > 0):
            return math.inf
        k2 = np.where(self.k2 == 0, 1.0, self.k2)
        return self.area * float(np.sum(np.abs(pf) ** 2 / k2))

    def divergence(self, u_hat):
        return 1j * (self.kx * u_hat[0] + self.ky * u_hat[1])

    def dealias(self, f_hat):
        return f_hat * self.mask


@dataclass
class FlowState:
    u_hat: np.ndarray  # (2, n, n) complex
    t: float
    grid: SpectralGrid

    def copy(self):
        return FlowState(self.u_hat.copy(), self.t, self.grid)

    def velocity(self):
        return self.grid.to_physical(self.u_hat)

    @property
    def kinetic_energy(self) -> float:
        return 0.5 * self.grid.norm_sq(self.u_hat)

    def max_divergence(self) -> float:
        return float(np.max(np.abs(self.grid.divergence(self.u_hat))))


@dataclass(frozen=True)
class FlowProblem:
    nu: float
    grid: SpectralGrid
    force: Optional[Callable[[float], np.ndarray]] = None

    def __post_init__(self):
        if not self.nu > 0:
            raise InvalidParameterError("viscosity must be positive")

    def force_hat(self, t: float):
        if self.force is None:
            return None
        return self.force(t)


@dataclass(frozen=True)
class FlowSolverConfig:
    abs_tol: float = 1e-10
    rel_tol: float = 1e-10
    max_sweeps: int = 50
    gmres_rtol: float = 1e-13
    gmres_maxiter: int = 200
    gmres_restart: int = 40


@dataclass(frozen=True)
class FlowWindow:
    prev: FlowState
    curr: FlowState
    k_prev: float

    @classmethod
    def from_states(cls, prev: FlowState, curr: FlowState):
        return cls(prev, curr, curr.t - prev.t)

    def advance(self, new: FlowState, k: float):
        return FlowWindow(self.curr, new, k)


@dataclass
class FlowStepStats:
    sweeps: int
    residual_norm: float
    gmres_iterations: int
    residual_history: list = field(default_factory=list)


# -- projection and convection ------------------------------------------------

def leray_project(grid: SpectralGrid, field_hat):
    """Orthogonal projection onto divergence-free fields, mode by mode."""
    f = np.asarray(field_hat)
    k2 = np.where(grid.k2 == 0, 1.0, grid.k2)
    kdotf = (grid.kx * f[0] + grid.ky * f[1]) / k2
    return np.stack([f[0] - grid.kx * kdotf, f[1] - grid.ky * kdotf])


def _grad_phys(grid, v_hat):
    """Physical values and first derivatives of each component (complex)."""
    vals = grid.to_physical(v_hat, real=False)
    dx = grid.to_physical(1j * grid.kx * v_hat, real=False)
    dy = grid.to_physical(1j * grid.ky * v_hat, real=False)
    return vals, dx, dy


def advect(grid: SpectralGrid, u_hat, v_hat):
    """Dealiased spectral coefficients of ``(u . grad) v``."""
    u = grid.to_physical(u_hat, real=False)
    _, dx, dy = _grad_phys(grid, v_hat)
    prod = u[0][None] * dx + u[1][None] * dy
    return grid.dealias(grid.to_spectral(prod))


def trilinear_form(grid: SpectralGrid, u_hat, v_hat, w_hat) -> float:
    """``b*(u, v, w) = (u.grad v, w)/2 - (u.grad w, v)/2`` with dealiased products."""
    for f in (u_hat, v_hat, w_hat):
        if np.shape(f) != (2, grid.n, grid.n):
            raise InvalidParameterError("field does not live on this grid")
    return 0.5 * grid.inner(advect(grid, u_hat, v_hat), w_hat) \
        - 0.5 * grid.inner(advect(grid, u_hat, w_hat), v_hat)


def convection_operator(grid: SpectralGrid, w_phys, v_hat):
    """Riesz representer of ``z -> b*(w, v, z)`` on the dealiased space.

    ``(u.grad w, v)`` integrates by parts to ``-(div(v (x) u), w)``, giving
    ``R_i = (w_j d_j v_i + d_j(w_j v_i)) / 2``. Linear (complex-linear) in ``v``;
    ``w_phys`` is the convecting field in physical space.
    """
    vals, dx, dy = _grad_phys(grid, v_hat)
    adv = w_phys[0][None] * dx + w_phys[1][None] * dy
    fx = grid.to_spectral(w_phys[0][None] * vals)
    fy = grid.to_spectral(w_phys[1][None] * vals)
    div_flux = 1j * grid.kx * fx + 1j * grid.ky * fy
    return grid.dealias(0.5 * grid.to_spectral(adv) + 0.5 * div_flux)


def _realify(grid, f_hat):
    return grid.to_spectral(grid.to_physical(f_hat, real=True))


def clean(grid, f_hat):
    """Enforce conjugate symmetry, the dealias band and zero divergence."""
    return leray_project(grid, grid.dealias(_realify(grid, f_hat)))


# -- exact solutions and forcing ---------------------------------------------

def taylor_green_exact(grid: SpectralGrid, t: float, w: int = 1, nu: float = 0.01) -> FlowState:
    """Decaying Taylor-Green vortex ``u = (-cos wx sin wy, sin wx cos wy) e^{-2 w^2 nu t}``.

    Coefficients are set directly, so the discrete divergence is exactly zero.
    Wavenumber ``w`` counts periods across the domain.
    """
    if int(w) != w or w < 1:
        raise InvalidParameterError("w must be a positive integer")
    w = int(w)
    if w > grid.n / 3:
        raise InvalidParameterError("Taylor-Green mode outside the dealiased band")
    kappa = 2.0 * math.pi * w / grid.length
    decay = math.exp(-2.0 * kappa**2 * nu * t)
    u_hat = grid.zeros()
    for a in (1, -1):
        for b in (1, -1):
            slot = grid.mode_slot(a * w, b * w)
            u_hat[0][slot] = 0.25j * b * decay
            u_hat[1][slot] = -0.25j * a * decay
    return FlowState(u_hat, t, grid)


def periodic_stirring_force(grid: SpectralGrid, amplitude: float, mode: int):
    """Kolmogorov forcing ``f = (A sin(m y), 0)`` as a time-independent generator."""
    if not math.isfinite(amplitude):
        raise InvalidParameterError("amplitude must be finite")
    if int(mode) != mode or abs(mode) > grid.n / 3:
        raise InvalidParameterError("forcing mode must be an integer inside the band")
    f_hat = grid.zeros()
    if amplitude != 0 and mode != 0:
        f_hat[0][grid.mode_slot(0, mode)] += -0.5j * amplitude
        f_hat[0][grid.mode_slot(0, -mode)] += 0.5j * amplitude
    f_hat.setflags(write=False)
    return lambda t: f_hat


def random_field(grid: SpectralGrid, rng, max_mode: int = 4, rms: float = 1.0,
                 divergence_free: bool = True):
    """Smooth random real field with modes ``|m| <= max_mode`` and RMS speed ``rms``."""
    mx, my = grid.index
    band = (np.abs(mx) <= max_mode) & (np.abs(my) <= max_mode) & (grid.k2 > 0)
    coeffs = rng.standard_normal((2, grid.n, grid.n)) + 1j * rng.standard_normal((2, grid.n, grid.n))
    f_hat = grid.dealias(_realify(grid, coeffs * band))
    if divergence_free:
        f_hat = leray_project(grid, f_hat)
    current = math.sqrt(grid.norm_sq(f_hat) / grid.area)
    return f_hat * (rms / current) if current > 0 else f_hat


# -- implicit step machinery ---------------------------------------------------

def _implicit_solve(grid, nu, lead, hist, h, weight, s, force_hat, x0, w_phys_fn,
                    sweeps, config, what):
    """Solve ``lead x + hist + h (nu A v + B(v, v) - P f) = 0`` with ``v = weight x + s``.

    Each sweep freezes the convecting field ``w_phys_fn(x)`` and solves the
    resulting Oseen problem with GMRES, preconditioned by its diagonal part.
    ``sweeps = 1`` is the linearly implicit variant.
    """
    shape = (2, grid.n, grid.n)
    diag = lead + h * nu * weight * grid.k2
    f_proj = grid.dealias(leray_project(grid, force_hat)) if force_hat is not None else 0.0
    diag_flat = np.broadcast_to(diag, shape).reshape(-1)
    precond = spla.LinearOperator((diag_flat.size,) * 2, matvec=lambda r: r / diag_flat,
                                  dtype=complex)

    def full_residual(x):
        v = weight * x + s
        conv = leray_project(grid, convection_operator(grid, grid.to_physical(v), v))
        r = lead * x + hist + h * (nu * grid.k2 * v + conv - f_proj)
        return grid.dealias(r)

    x = x0.copy()
    history = []
    gm_total = 0
    for sweep in range(1, sweeps + 1):
        w_phys = w_phys_fn(x)

        def matvec(xf):
            xv = xf.reshape(shape)
            out = diag * xv + h * weight * leray_project(grid, convection_operator(grid, w_phys, xv))
            return out.reshape(-1)

        op = spla.LinearOperator((diag_flat.size,) * 2, matvec=matvec, dtype=complex)
        conv_s = leray_project(grid, convection_operator(grid, w_phys, s))
        rhs = grid.dealias(-hist - h * (nu * grid.k2 * s + conv_s - f_proj))
        counter = [0]
        sol, info = spla.gmres(op, rhs.reshape(-1), x0=x.reshape(-1), rtol=config.gmres_rtol,
                               atol=0.0, restart=config.gmres_restart,
                               maxiter=config.gmres_maxiter, M=precond,
                               callback=lambda _: counter.__setitem__(0, counter[0] + 1),
                               callback_type="pr_norm")
        gm_total += counter[0]
        if not np.all(np.isfinite(sol)):
            raise StepFailure(f"{what}: linear solve produced non-finite values",
                              history=history)
        x = clean(grid, sol.reshape(shape))
        res = math.sqrt(grid.norm_sq(full_residual(x)))
        history.append(res)
        if sweeps == 1:
            return x, FlowStepStats(1, res, gm_total, history)
        if res <= config.abs_tol + config.rel_tol * math.sqrt(grid.norm_sq(x)):
            return x, FlowStepStats(sweep, res, gm_total, history)
        if not math.isfinite(res):
            break
    raise StepFailure(f"{what}: Picard iteration did not converge in {sweeps} sweeps "
                      f"(residual {history[-1]:.3e})", last_iterate=x,
                      residual_norm=history[-1], history=history)


def _extrapolate(window: FlowWindow, k_next: float):
    r = k_next / window.k_prev
    return window.curr.u_hat + r * (window.curr.u_hat - window.prev.u_hat)


def nse_dln_step(problem: FlowProblem, window: FlowWindow, k_next: float,
                 theta: float = 0.5, mode: str = "fully_implicit",
                 config: FlowSolverConfig = FlowSolverConfig()):
    """One DLN step for the projected Navier-Stokes system.

    Returns ``(FlowState, FlowStepStats)``. ``mode`` is ``"fully_implicit"``
    (Picard sweeps on the convecting field until the residual meets tolerance)
    or ``"linearly_implicit"`` (one linear solve with an extrapolated convecting
    field).
    """
    grid = problem.grid
    c = scheme_coefficients(theta, window.k_prev, k_next)
    a2, a1, a0 = c.alpha
    b2, b1, b0 = c.beta
    u_n, u_m = window.curr.u_hat, window.prev.u_hat
    hist = a1 * u_n + a0 * u_m
    s = b1 * u_n + b0 * u_m
    t_star = c.t_star(window.curr.t)
    guess = _extrapolate(window, k_next)
    if mode == "fully_implicit":
        sweeps = config.max_sweeps
        w_fn = lambda x: grid.to_physical(b2 * x + s)
    elif mode == "linearly_implicit":
        sweeps = 1
        w_extrap = grid.to_physical(b2 * guess + s)
        w_fn = lambda x: w_extrap
    else:
        raise InvalidParameterError(f"unknown mode {mode!r}")
    x, stats = _implicit_solve(grid, problem.nu, a2, hist, c.k_hat, b2, s,
                               problem.force_hat(t_star), guess, w_fn, sweeps, config,
                               f"DLN step at t={window.curr.t:.6g}")
    return FlowState(x, window.curr.t + k_next, grid), stats


def nse_bdf2_step(problem: FlowProblem, window: FlowWindow, k_next: float,
                  config: FlowSolverConfig = FlowSolverConfig()):
    """Fully implicit variable-step BDF2 step, same spatial operators."""
    grid = problem.grid
    c = bdf2_coefficients(window.k_prev, k_next)
    hist = c.mid * window.curr.u_hat + c.trailing * window.prev.u_hat
    t_next = window.curr.t + k_next
    x, stats = _implicit_solve(grid, problem.nu, c.leading, hist, k_next, 1.0, grid.zeros(),
                               problem.force_hat(t_next), _extrapolate(window, k_next),
                               lambda x: grid.to_physical(x), config.max_sweeps, config,
                               f"BDF2 step at t={window.curr.t:.6g}")
    return FlowState(x, t_next, grid), stats


def bootstrap_flow_window(problem: FlowProblem, u0: FlowState, k0: float,
                          config: FlowSolverConfig = FlowSolverConfig()) -> FlowWindow:
    """First window from one midpoint (theta = 1) step."""
    dummy = FlowWindow(FlowState(u0.u_hat, u0.t - k0, u0.grid), u0, k0)
    u1, _ = nse_dln_step(problem, dummy, k0, theta=1.0, config=config)
    return FlowWindow(u0, u1, k0)


def rest_window(grid: SpectralGrid, k0: float, t0: float = 0.0) -> FlowWindow:
    """Both startup states at rest, at ``t0`` and ``t0 + k0``."""
    return FlowWindow(FlowState(grid.zeros(), t0, grid), FlowState(grid.zeros(), t0 + k0, grid), k0)


# -- energy bookkeeping --------------------------------------------------------

@dataclass
class LedgerRow:
    step: int
    t: float
    k: float
    E: float        # G-energy of the new window (u_{n+1}, u_n)
    D: float        # numerical dissipation rate
    eps_nu: float   # viscous dissipation nu ||grad u_*||^2
    chi: float
    ke: float       # kinetic energy ||u_{n+1}||^2 / 2
    energy_lhs: float = math.nan  # G_new + k_hat D + (nu/2) k_hat ||grad u_*||^2
    energy_rhs: float = math.nan  # G_old + k_hat ||f||_*^2 / (2 nu)

    def energy_inequality_holds(self, rtol: float = 1e-10) -> bool:
        return self.energy_lhs <= self.energy_rhs + rtol * max(abs(self.energy_rhs), abs(self.energy_lhs))


def dissipation_ratio(D: float, eps_nu: float) -> float:
    """``chi = |D / eps_nu|``; 0 when both vanish, +inf when only ``eps_nu`` does."""
    if eps_nu > 0:
        return abs(D / eps_nu)
    return 0.0 if D == 0 else math.inf


def energy_ledger_update(coeffs: SchemeCoefficients, grid: SpectralGrid, u_prev, u_curr,
                         u_next, nu: float, force_hat=None, step: int = 0,
                         t: float = math.nan) -> LedgerRow:
    """Energy, dissipation and the per-step stability balance for one DLN step."""
    theta = coeffs.theta
    u_prev, u_curr, u_next = (getattr(u, "u_hat", u) for u in (u_prev, u_curr, u_next))
    g_old = 0.25 * (1 + theta) * grid.norm_sq(u_curr) + 0.25 * (1 - theta) * grid.norm_sq(u_prev)
    g_new = 0.25 * (1 + theta) * grid.norm_sq(u_next) + 0.25 * (1 - theta) * grid.norm_sq(u_curr)
    a2, a1, a0 = coeffs.a
    b2, b1, b0 = coeffs.beta
    diss_vec = a2 * u_next + a1 * u_curr + a0 * u_prev
    D = grid.norm_sq(diss_vec) / coeffs.k_hat
    grad_star = grid.grad_norm_sq(b2 * u_next + b1 * u_curr + b0 * u_prev)
    eps_nu = nu * grad_star
    data = 0.0
    if force_hat is not None:
        data = coeffs.k_hat * grid.dual_norm_sq(force_hat) / (2.0 * nu)
    return LedgerRow(step=step, t=t, k=coeffs.k_curr, E=g_new, D=D, eps_nu=eps_nu,
                     chi=dissipation_ratio(D, eps_nu), ke=0.5 * grid.norm_sq(u_next),
                     energy_lhs=g_new + coeffs.k_hat * D + 0.5 * coeffs.k_hat * eps_nu,
                     energy_rhs=g_old + data)


def bdf2_ledger_row(grid: SpectralGrid, u_next, nu: float, step: int, t: float, k: float) -> LedgerRow:
    """BDF2 has no G-norm; report kinetic energy in ``E`` and leave D/chi undefined."""
    u = getattr(u_next, "u_hat", u_next)
    ke = 0.5 * grid.norm_sq(u)
    return LedgerRow(step=step, t=t, k=k, E=ke, D=math.nan, eps_nu=nu * grid.grad_norm_sq(u),
                     chi=math.nan, ke=ke)


# -- drivers -----------------------------------------------------------------

@dataclass
class FlowRun:
    ledger: list
    window: FlowWindow
    stats: list


def run_flow(problem: FlowProblem, window: FlowWindow, steps, theta: float = 0.5,
             method: str = "dln", mode: str = "fully_implicit",
             config: FlowSolverConfig = FlowSolverConfig(),
             observer: Optional[Callable[[FlowState], None]] = None,
             first_step: int = 2) -> FlowRun:
    """March ``window`` over ``steps`` with DLN (``mode`` applies) or BDF2.

    ``observer`` is called with every new state; the ledger holds one row per step.
    """
    grid = problem.grid
    ledger, stats = [], []
    for i, k in enumerate(steps):
        if method == "dln":
            new, st = nse_dln_step(problem, window, k, theta, mode, config)
            c = scheme_coefficients(theta, window.k_prev, k)
            row = energy_ledger_update(c, grid, window.prev, window.curr, new, problem.nu,
                                       problem.force_hat(c.t_star(window.curr.t)),
                                       step=first_step + i, t=new.t)
        elif method == "bdf2":
            new, st = nse_bdf2_step(problem, window, k, config)
            row = bdf2_ledger_row(grid, new, problem.nu, first_step + i, new.t, k)
        else:
            raise InvalidParameterError(f"unknown method {method!r}")
        window = window.advance(new, k)
        ledger.append(row)
        stats.append(st)
        if observer is not None:
            observer(new)
    return FlowRun(ledger, window, stats)
