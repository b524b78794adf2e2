"""Named experiments: configuration, step schedules, and CSV/snapshot emission."""

from __future__ import annotations

import json
import math
import traceback
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import io
from .adaptive import ControllerConfig, run_adaptive
from .errors import DLNError, InvalidParameterError, StepFailure
from .flow import (FlowProblem, FlowState, FlowWindow, SpectralGrid, periodic_stirring_force,
                   random_field, rest_window, run_flow, taylor_green_exact)
from .norms import ELL_2, ELL_INF, convergence_order, discrete_norm, series_from_samples
from .stability import bdf2_root_locus, g_identity_fuzz, root_locus

EXPERIMENTS = ("convergence", "stability-region", "energy-compare", "adaptive", "g-identity-fuzz")
STEP_LAWS = ("constant", "sine", "increasing", "adaptive")

SPECTRAL_NOTE = ("temporal errors at fixed spectral resolution; orders are comparable with "
                 "finite-element tables, absolute values are not")

# experiment-specific defaults, applied where the config leaves a field unset
_DEFAULTS = {
    "convergence": dict(step_law="constant", nu=0.01, T_final=1.0, k=1 / 16, levels=4),
    "stability-region": dict(samples=10000),
    "energy-compare": dict(step_law="increasing", nu=0.05, T_final=40.0),
    "adaptive": dict(step_law="adaptive", nu=0.05, T_final=63.7),
    "g-identity-fuzz": dict(samples=100000),
}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    theta: float = 0.5
    step_law: Optional[str] = None
    k: Optional[float] = None          # constant step, or coarsest step for convergence
    levels: Optional[int] = None       # dyadic refinements for convergence
    n: int = 64
    nu: Optional[float] = None
    T_final: Optional[float] = None
    output_dir: Optional[str] = None
    seed: int = 0
    mode: str = "fully_implicit"
    method: str = "dln"                # stability-region: dln or bdf2
    w: int = 1                         # Taylor-Green wavenumber
    amplitude: float = 1.0             # forcing amplitude
    forcing_mode: int = 4
    perturbation: float = 0.0          # RMS of a seeded initial perturbation for forced runs
    samples: Optional[int] = None
    delta: float = 0.002
    k_min: float = 0.01
    k_max: float = 1.6

    @classmethod
    def from_mapping(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise InvalidParameterError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)

    def resolved(self) -> "ExperimentConfig":
        """Fill unset fields with the experiment's defaults and validate."""
        if self.experiment not in EXPERIMENTS:
            raise InvalidParameterError(f"unknown experiment {self.experiment!r}")
        fill = {key: value for key, value in _DEFAULTS[self.experiment].items()
                if getattr(self, key) is None}
        cfg = replace(self, **fill)
        cfg._validate()
        return cfg

    def _validate(self):
        if not 0.0 <= self.theta <= 1.0:
            raise InvalidParameterError("theta must lie in [0, 1]")
        if self.step_law is not None and self.step_law not in STEP_LAWS:
            raise InvalidParameterError(f"unknown step law {self.step_law!r}")
        for name in ("k", "nu", "T_final"):
            value = getattr(self, name)
            if value is not None and not (value > 0 and math.isfinite(value)):
                raise InvalidParameterError(f"{name} must be positive and finite")
        if self.levels is not None and self.levels < 2:
            raise InvalidParameterError("need at least two refinement levels")
        if self.samples is not None and self.samples < 1:
            raise InvalidParameterError("samples must be positive")
        if self.perturbation < 0:
            raise InvalidParameterError("perturbation must be nonnegative")
        if self.mode not in ("fully_implicit", "linearly_implicit"):
            raise InvalidParameterError(f"unknown mode {self.mode!r}")
        if self.method not in ("dln", "bdf2"):
            raise InvalidParameterError(f"unknown method {self.method!r}")
        if self.experiment == "convergence" and self.step_law != "constant":
            raise InvalidParameterError("convergence runs use constant steps")
        if self.experiment == "energy-compare" and self.step_law not in ("constant", "sine", "increasing"):
            raise InvalidParameterError("energy-compare needs a constant, sine or increasing schedule")
        if self.step_law == "constant" and self.experiment == "energy-compare" and self.k is None:
            raise InvalidParameterError("constant schedule needs k")
        ControllerConfig(self.delta, self.k_min, self.k_max)

    def output_path(self) -> Path:
        return io.output_root(self.output_dir)

    def metadata(self) -> dict:
        return {key: value for key, value in asdict(self).items()
                if value is not None and key != "output_dir"}


@dataclass
class ExperimentResult:
    exit_code: int
    outputs: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    error: Optional[dict] = None


# -- step schedules ------------------------------------------------------------

def sine_schedule(T_final: float, k0: float = 0.05, hold: int = 10, amplitude: float = 0.002,
                  frequency: float = 10.0) -> list:
    """``k_n = k0`` for ``n <= hold``, then ``k0 + amplitude * sin(frequency * t_n)``.

    The last step is shortened to land on ``T_final``.
    """
    ks, t = [], 0.0
    while t < T_final:
        n = len(ks)
        k = k0 if n <= hold else k0 + amplitude * math.sin(frequency * t)
        ks.append(min(k, T_final - t))
        t += ks[-1]
    return ks


def increasing_schedule(T_final: float, k0: float = 0.05, increment: float = 0.001) -> list:
    """``k_n = k_{n-1} + increment`` from ``k0``; the last step lands on ``T_final``."""
    ks, t, k = [], 0.0, k0
    while t < T_final:
        ks.append(min(k, T_final - t))
        t += ks[-1]
        k += increment
    return ks


def constant_schedule(T_final: float, k: float) -> list:
    n = max(1, round(T_final / k))
    if not math.isclose(n * k, T_final, rel_tol=1e-9):
        raise InvalidParameterError("T_final must be a whole number of steps")
    return [T_final / n] * n


def schedule_for(cfg: ExperimentConfig) -> list:
    if cfg.step_law == "sine":
        return sine_schedule(cfg.T_final)
    if cfg.step_law == "increasing":
        return increasing_schedule(cfg.T_final)
    return constant_schedule(cfg.T_final, cfg.k)


# -- experiments ---------------------------------------------------------------

def _forced_problem(cfg: ExperimentConfig):
    grid = SpectralGrid(cfg.n)
    return FlowProblem(cfg.nu, grid, periodic_stirring_force(grid, cfg.amplitude, cfg.forcing_mode))


def _forced_window(cfg: ExperimentConfig, problem: FlowProblem, k0: float) -> FlowWindow:
    window = rest_window(problem.grid, k0)
    if cfg.perturbation > 0:
        rng = np.random.default_rng(cfg.seed)
        bump = random_field(problem.grid, rng, rms=cfg.perturbation)
        window = FlowWindow(FlowState(bump, 0.0, problem.grid), FlowState(bump, k0, problem.grid), k0)
    return window


def taylor_green_errors(cfg: ExperimentConfig, k: float):
    """Velocity and gradient errors against the exact vortex at ``t_0..t_M``."""
    grid = SpectralGrid(cfg.n)
    problem = FlowProblem(cfg.nu, grid)
    steps = constant_schedule(cfg.T_final, k)
    k = steps[0]
    exact = lambda t: taylor_green_exact(grid, t, cfg.w, cfg.nu)
    window = FlowWindow.from_states(exact(0.0), exact(k))
    times, err, grad = [0.0, k], [0.0, 0.0], [0.0, 0.0]

    def observe(state):
        e = state.u_hat - exact(state.t).u_hat
        times.append(state.t)
        err.append(math.sqrt(grid.norm_sq(e)))
        grad.append(math.sqrt(grid.grad_norm_sq(e)))

    run_flow(problem, window, steps[1:], cfg.theta, "dln", cfg.mode, observer=observe)
    return np.array(times), np.array(err), np.array(grad)


def convergence_table(cfg: ExperimentConfig):
    """Rows ``(k, steps, err_inf, R, err_l2, R, grad_l2, R)`` over dyadic refinement."""
    rows, prev = [], None
    for level in range(cfg.levels):
        k = cfg.k / 2**level
        times, err, grad = taylor_green_errors(cfg, k)
        norms = (discrete_norm(series_from_samples(err, times, ELL_INF)),
                 discrete_norm(series_from_samples(err, times, ELL_2)),
                 discrete_norm(series_from_samples(grad, times, ELL_2)))
        orders = [math.nan] * 3 if prev is None else [
            convergence_order(p, e, prev[0], k) for p, e in zip(prev[1], norms)]
        rows.append((k, len(times) - 1, norms[0], orders[0], norms[1], orders[1], norms[2], orders[2]))
        prev = (k, norms)
    return rows


def _run_convergence(cfg, out):
    rows = convergence_table(cfg)
    cols = ("k", "steps", "err_u_inf", "R_u_inf", "err_u_l2", "R_u_l2", "err_grad_l2", "R_grad_l2")
    meta = dict(cfg.metadata(), note=SPECTRAL_NOTE)
    path = io.write_csv(out / f"convergence_theta{cfg.theta}.csv", cols, rows, meta)
    return [path], {"orders": [r[3] for r in rows[1:]]}


def _run_stability_region(cfg, out):
    if cfg.method == "dln":
        locus = root_locus(cfg.theta, cfg.samples)
        name = f"locus_dln_theta{cfg.theta}.csv"
    else:
        locus = bdf2_root_locus(cfg.samples)
        name = "locus_bdf2.csv"
    rows = zip(locus.phi, locus.z.real, locus.z.imag, locus.pole.astype(int))
    path = io.write_csv(out / name, ("phi", "re_z", "im_z", "pole"), rows, cfg.metadata())
    return [path], {"min_re": locus.min_real()}


LEDGER_COLUMNS = ("step", "t", "k", "E", "D", "eps_nu", "chi", "ke", "energy_lhs", "energy_rhs")


def _ledger_rows(ledger):
    return [tuple(getattr(r, c) for c in LEDGER_COLUMNS) for r in ledger]


def energy_compare(cfg: ExperimentConfig):
    """DLN and BDF2 runs over one schedule from the same startup window."""
    problem = _forced_problem(cfg)
    steps = schedule_for(cfg)
    window = _forced_window(cfg, problem, steps[0])
    dln = run_flow(problem, window, steps[1:], cfg.theta, "dln", cfg.mode)
    bdf2 = run_flow(problem, window, steps[1:], method="bdf2")
    return problem, dln, bdf2


def _run_energy_compare(cfg, out):
    problem, dln, bdf2 = energy_compare(cfg)
    meta = cfg.metadata()
    paths = [io.write_csv(out / "ledger_dln.csv", LEDGER_COLUMNS, _ledger_rows(dln.ledger), meta),
             io.write_csv(out / "ledger_bdf2.csv", LEDGER_COLUMNS, _ledger_rows(bdf2.ledger), meta),
             io.write_snapshot(out / "final_dln", problem.grid, dln.window.curr, problem.nu),
             io.write_snapshot(out / "final_bdf2", problem.grid, bdf2.window.curr, problem.nu)]
    ratio = max(b.ke / max(d.ke, 1e-300) for d, b in zip(dln.ledger, bdf2.ledger))
    holds = all(r.energy_inequality_holds() for r in dln.ledger)
    return paths, {"max_energy_ratio": ratio, "dln_bound_holds": holds}


ADAPTIVE_COLUMNS = ("step", "t", "k", "chi", "verdict", "E", "D")


def _run_adaptive(cfg, out):
    problem = _forced_problem(cfg)
    control = ControllerConfig(cfg.delta, cfg.k_min, cfg.k_max)
    window = _forced_window(cfg, problem, control.k_min)
    try:
        run = run_adaptive(problem, cfg.theta, control, cfg.T_final, window, cfg.mode)
    except StepFailure as exc:
        if exc.ledger:
            rows = [tuple(getattr(r, c) for c in ADAPTIVE_COLUMNS) for r in exc.ledger]
            io.write_csv(out / "adaptive_partial.csv", ADAPTIVE_COLUMNS, rows, cfg.metadata())
        raise
    rows = [tuple(getattr(r, c) for c in ADAPTIVE_COLUMNS) for r in run.rows]
    paths = [io.write_csv(out / f"adaptive_theta{cfg.theta}.csv", ADAPTIVE_COLUMNS, rows, cfg.metadata()),
             io.write_snapshot(out / "final_adaptive", problem.grid, run.window.curr, problem.nu)]
    return paths, {"accepted": len(run.accepted), "rejected": run.n_rejected}


def _run_g_identity_fuzz(cfg, out):
    data = g_identity_fuzz(cfg.samples, cfg.seed)
    worst = np.argsort(data["rel_gap"])[::-1][:20]
    cols = ("theta", "eps", "dim", "gap", "rel_gap")
    rows = [tuple(data[c][i] for c in cols) for i in worst]
    meta = dict(cfg.metadata(), max_rel_gap=repr(float(data["rel_gap"].max())),
                max_gap=repr(float(data["gap"].max())))
    path = io.write_csv(out / "g_identity_worst.csv", cols, rows, meta)
    return [path], {"max_rel_gap": float(data["rel_gap"].max())}


_RUNNERS = {
    "convergence": _run_convergence,
    "stability-region": _run_stability_region,
    "energy-compare": _run_energy_compare,
    "adaptive": _run_adaptive,
    "g-identity-fuzz": _run_g_identity_fuzz,
}

EXIT_OK, EXIT_INVALID, EXIT_SOLVER, EXIT_INTERNAL = 0, 2, 3, 4


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Run one experiment, writing into its output directory.

    Failures produce ``error.json`` there and a nonzero exit code: 2 for bad
    input, 3 for solver failures, 4 for anything unexpected.
    """
    out = config.output_path()
    try:
        cfg = config.resolved()
        out.mkdir(parents=True, exist_ok=True)
        paths, summary = _RUNNERS[cfg.experiment](cfg, out)
        return ExperimentResult(EXIT_OK, paths, summary)
    except InvalidParameterError as exc:
        code = EXIT_INVALID
        error = exc
    except DLNError as exc:
        code = EXIT_SOLVER
        error = exc
    except Exception as exc:  # surfaced as a record, not a traceback
        code = EXIT_INTERNAL
        error = exc
    record = {"experiment": config.experiment, "exit_code": code,
              "error": type(error).__name__, "message": str(error)}
    if code == EXIT_INTERNAL:
        record["traceback"] = traceback.format_exc()
    out.mkdir(parents=True, exist_ok=True)
    (out / "error.json").write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
    return ExperimentResult(code, [out / "error.json"], error=record)
