"""Discrete-in-time norms of error series and observed convergence orders."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError

ELL_INF = "ell_inf"
ELL_2 = "ell_2_left_riemann"
NORM_KINDS = (ELL_INF, ELL_2)


@dataclass(frozen=True)
class ErrorSeries:
    """Per-step error magnitudes ``values[n]`` sampled at the left end of step ``steps[n]``."""

    values: np.ndarray
    steps: np.ndarray
    kind: str = ELL_2

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).ravel()
        steps = np.asarray(self.steps, dtype=float).ravel()
        if values.size == 0:
            raise InvalidParameterError("empty error series")
        if values.shape != steps.shape:
            raise InvalidParameterError("values and steps differ in length")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise InvalidParameterError("error samples must be finite and nonnegative")
        if np.any(steps <= 0):
            raise InvalidParameterError("steps must be positive")
        if self.kind not in NORM_KINDS:
            raise InvalidParameterError(f"unknown norm kind {self.kind!r}")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "steps", steps)

    def with_kind(self, kind: str) -> "ErrorSeries":
        return ErrorSeries(self.values, self.steps, kind)


def discrete_norm(series: ErrorSeries) -> float:
    if series.kind == ELL_INF:
        return float(series.values.max())
    return math.sqrt(float(np.dot(series.steps, series.values ** 2)))


def convergence_order(e1: float, e2: float, dt1: float, dt2: float) -> float:
    """Observed order ``log(e1/e2) / log(dt1/dt2)``."""
    if min(e1, e2, dt1, dt2) <= 0:
        raise InvalidParameterError("errors and steps must be positive")
    if dt1 == dt2:
        raise InvalidParameterError("step sizes must differ")
    return math.log(e1 / e2) / math.log(dt1 / dt2)


def series_from_samples(errors, times, kind: str = ELL_2) -> ErrorSeries:
    """Build a series from errors ``e_0..e_M`` at times ``t_0..t_M``.

    The left-Riemann sum pairs ``e_n`` with ``t_{n+1} - t_n`` for ``n < M``; the
    sup norm sees every sample.
    """
    errors = np.asarray(errors, dtype=float)
    times = np.asarray(times, dtype=float)
    if errors.size < 2 or errors.shape != times.shape:
        raise InvalidParameterError("need matching errors and times with at least two samples")
    steps = np.diff(times)
    if kind == ELL_INF:
        return ErrorSeries(errors, np.append(steps, steps[-1]), kind)
    return ErrorSeries(errors[:-1], steps, kind)
