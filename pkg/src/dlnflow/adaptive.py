"""Step-size control by the ratio of numerical to viscous dissipation.

A step is accepted while ``chi = D / eps_nu`` stays below ``delta``; the next
step is then doubled (up to ``k_max``). Otherwise the step is redone at half
the size, down to the floor ``k_min`` where it is accepted as is.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from .core import scheme_coefficients
from .errors import InvalidParameterError, StepFailure
from .flow import (FlowProblem, FlowSolverConfig, FlowState, FlowWindow,
                   dissipation_ratio, rest_window, energy_ledger_update,
                   nse_dln_step)

ACCEPT_AND_GROW = "accept_and_grow"
ACCEPT_AND_HOLD = "accept_and_hold"
REJECT_AND_SHRINK = "reject_and_shrink"

_FLOOR_RTOL = 1e-12

__all__ = ["ControllerConfig", "StepDecision", "AdaptiveRow", "AdaptiveRun",
           "dissipation_ratio", "decide", "run_adaptive"]


@dataclass(frozen=True)
class ControllerConfig:
    delta: float = 0.002
    k_min: float = 0.01
    k_max: float = 1.6
    growth: float = 2.0
    shrink: float = 0.5
    max_rejections: int = 8
    k0: Optional[float] = None  # first step; defaults to k_min

    def __post_init__(self):
        if not 0 < self.k_min <= self.k_max:
            raise InvalidParameterError("need 0 < k_min <= k_max")
        if not 0 < self.shrink < 1 < self.growth:
            raise InvalidParameterError("need 0 < shrink < 1 < growth")
        if not self.delta > 0:
            raise InvalidParameterError("delta must be positive")
        if self.max_rejections < 0:
            raise InvalidParameterError("max_rejections must be >= 0")
        if self.k0 is not None and not self.k_min <= self.k0 <= self.k_max:
            raise InvalidParameterError("k0 must lie in [k_min, k_max]")

    def at_floor(self, k: float) -> bool:
        return k <= self.k_min * (1 + _FLOOR_RTOL)


@dataclass(frozen=True)
class StepDecision:
    verdict: str
    k_next: float

    @property
    def accepted(self) -> bool:
        return self.verdict != REJECT_AND_SHRINK


def decide(chi: float, k_current: float, config: ControllerConfig = ControllerConfig()) -> StepDecision:
    """Halve-or-double rule. NaN ``chi`` counts as a failed test."""
    if chi < config.delta:
        return StepDecision(ACCEPT_AND_GROW, min(config.growth * k_current, config.k_max))
    if config.at_floor(k_current):
        return StepDecision(ACCEPT_AND_HOLD, config.k_min)
    return StepDecision(REJECT_AND_SHRINK, max(config.shrink * k_current, config.k_min))


@dataclass
class AdaptiveRow:
    step: int
    t: float
    k: float
    chi: float
    verdict: str
    E: float
    D: float
    ke: float = math.nan


@dataclass
class AdaptiveRun:
    rows: list            # every attempt, accepted or rejected, in order
    window: FlowWindow
    final_clipped: bool = False
    failures: list = field(default_factory=list)

    @property
    def accepted(self):
        return [r for r in self.rows if r.verdict != REJECT_AND_SHRINK]

    @property
    def steps(self):
        return [r.k for r in self.accepted]

    @property
    def n_rejected(self) -> int:
        return sum(r.verdict == REJECT_AND_SHRINK for r in self.rows)


def run_adaptive(problem: FlowProblem, theta: float, config: ControllerConfig,
                 T_final: float, window: Optional[FlowWindow] = None,
                 mode: str = "fully_implicit",
                 solver_config: FlowSolverConfig = FlowSolverConfig()) -> AdaptiveRun:
    """Adaptive DLN run up to the absolute time ``T_final``.

    Starts from ``window`` (both states at rest by default, spaced ``k0``) and
    tries ``k0`` first. The final step is shortened to land on the end time and
    is the only step allowed below ``k_min``. A step whose implicit solve fails
    counts as rejected; a failure at the floor or after the rejection budget
    aborts the run with :class:`StepFailure` carrying the rows so far.
    """
    grid = problem.grid
    k0 = config.k0 or config.k_min
    if window is None:
        window = rest_window(grid, k0)
    if not T_final > window.curr.t:
        raise InvalidParameterError("T_final must lie beyond the startup window")
    t_end = T_final
    merge_tol = 1e-10 * max(1.0, abs(t_end))
    rows, failures = [], []
    k = k0
    step = 1
    final_clipped = False

    while t_end - window.curr.t > merge_tol:
        step += 1
        remaining = t_end - window.curr.t
        k_try = k
        rejections = 0
        while True:
            final = k_try >= remaining - merge_tol
            if final:
                k_try = remaining
            try:
                new, _ = nse_dln_step(problem, window, k_try, theta, mode, solver_config)
            except StepFailure as exc:
                failures.append((window.curr.t, k_try, str(exc)))
                if config.at_floor(k_try) or rejections >= config.max_rejections:
                    exc.ledger = rows
                    raise
                rows.append(AdaptiveRow(step, window.curr.t + k_try, k_try, math.inf,
                                        REJECT_AND_SHRINK, math.nan, math.nan))
                rejections += 1
                k_try = max(config.shrink * k_try, config.k_min)
                continue
            c = scheme_coefficients(theta, window.k_prev, k_try)
            led = energy_ledger_update(c, grid, window.prev, window.curr, new, problem.nu,
                                       problem.force_hat(c.t_star(window.curr.t)))
            decision = decide(led.chi, k_try, config)
            if not decision.accepted and rejections >= config.max_rejections:
                decision = StepDecision(ACCEPT_AND_HOLD, config.k_min)
            rows.append(AdaptiveRow(step, new.t, k_try, led.chi, decision.verdict,
                                    led.E, led.D, led.ke))
            if decision.accepted:
                window = window.advance(new, k_try)
                k = decision.k_next
                final_clipped = final and k_try < config.k_min
                break
            rejections += 1
            k_try = decision.k_next
            if rejections >= config.max_rejections:
                k_try = config.k_min
    return AdaptiveRun(rows, window, final_clipped, failures)
