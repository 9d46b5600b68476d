"""Forecasts psi(t) of the largest price increase still to come.

A forecast must vanish at the horizon and decrease strictly on [0, T]; it may
depend on the observed history only through t here, which makes the
"same history, same forecast" requirement automatic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import DomainError, ParameterError
from .special import normal_quantile

DEFAULT_N_CHECK = 1024


class ForecastSpec:
    """Base class; subclasses define ``psi``, ``horizon`` and the kernel encoding."""

    horizon: float

    def psi(self, t: float) -> float:
        raise NotImplementedError

    def __call__(self, t):
        return self.psi(t)

    def _check_time(self, t):
        if not (0.0 <= t <= self.horizon):
            raise DomainError(f"time {t} outside [0, {self.horizon}]")

    def kernel_args(self):
        """(kind, coef, table_t, table_v) as understood by the compiled kernels."""
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


def _check_horizon(T):
    if not (T > 0 and math.isfinite(T)):
        raise ParameterError(f"horizon must be positive and finite, got {T}")


@dataclass(frozen=True)
class LipschitzForecast(ForecastSpec):
    """Worst case over paths whose upward slope is at most ``L2``: psi = L2 (T - t)."""

    L2: float
    horizon: float = 1.0

    def __post_init__(self):
        if not self.L2 > 0:
            raise ParameterError(f"L2 must be positive, got {self.L2}")
        _check_horizon(self.horizon)

    def psi(self, t):
        self._check_time(t)
        return self.L2 * (self.horizon - t)

    def kernel_args(self):
        return _kernels.AFFINE, float(self.L2), _kernels._EMPTY, _kernels._EMPTY

    def to_dict(self):
        return {"kind": "lipschitz", "L2": self.L2, "T": self.horizon}


@dataclass(frozen=True)
class BrownianQuantileForecast(ForecastSpec):
    """delta-quantile of the future maximum increment of ``sigma * W``.

    Since P(max_{s<=u} W_s <= z) = 2 Phi(z / sqrt(u)) - 1, the quantile is
    ``c_delta * sqrt(T - t)`` with ``c_delta = sigma * Phi^{-1}((1 + delta) / 2)``.
    """

    sigma: float
    delta: float
    horizon: float = 1.0
    c_delta: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.sigma > 0:
            raise ParameterError(f"sigma must be positive, got {self.sigma}")
        if not (0.0 < self.delta < 1.0):
            raise ParameterError(f"delta must lie in (0, 1), got {self.delta}")
        _check_horizon(self.horizon)
        object.__setattr__(self, "c_delta", self.sigma * normal_quantile((1.0 + self.delta) / 2.0))

    def psi(self, t):
        self._check_time(t)
        return self.c_delta * math.sqrt(self.horizon - t)

    def kernel_args(self):
        return _kernels.SQRT, float(self.c_delta), _kernels._EMPTY, _kernels._EMPTY

    def to_dict(self):
        return {"kind": "brownian_quantile", "sigma": self.sigma, "delta": self.delta, "T": self.horizon}


@dataclass(frozen=True, eq=False)
class PiecewiseLinearForecast(ForecastSpec):
    """Linear interpolant of tabulated values; used to mirror discrete forecasts."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.array(self.times, dtype=float)
        values = np.array(self.values, dtype=float)
        if times.ndim != 1 or times.shape != values.shape or times.size < 2:
            raise ParameterError("need matching 1-d times/values with at least 2 entries")
        if times[0] != 0.0 or not np.all(np.diff(times) > 0):
            raise ParameterError("times must start at 0 and strictly increase")
        if values[-1] != 0.0 or not np.all(np.diff(values) < 0):
            raise ParameterError("values must strictly decrease to 0")
        times.flags.writeable = False
        values.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @property
    def horizon(self):
        return float(self.times[-1])

    def psi(self, t):
        self._check_time(t)
        return float(np.interp(t, self.times, self.values))

    def kernel_args(self):
        return _kernels.TABLE, 0.0, self.times, self.values

    def to_dict(self):
        return {"kind": "piecewise_linear", "times": self.times.tolist(),
                "values": self.values.tolist(), "T": self.horizon}


def from_dict(d: dict) -> ForecastSpec:
    kind = d.get("kind")
    T = float(d.get("T", 1.0))
    if kind == "lipschitz":
        return LipschitzForecast(L2=float(d["L2"]), horizon=T)
    if kind == "brownian_quantile":
        return BrownianQuantileForecast(sigma=float(d["sigma"]), delta=float(d["delta"]), horizon=T)
    if kind == "piecewise_linear":
        return PiecewiseLinearForecast(d["times"], d["values"])
    raise ParameterError(f"unknown forecast kind {kind!r}")


def psi(spec: ForecastSpec, t: float) -> float:
    return spec.psi(t)


@dataclass
class ValidationReport:
    n_check: int
    terminal_value: float
    violations: list

    @property
    def passed(self) -> bool:
        return not self.violations


def validate(spec, n_check: int = DEFAULT_N_CHECK) -> ValidationReport:
    """Sample ``spec.psi`` on a uniform grid and report structural violations.

    Checks psi(T) = 0 (to 1e-12) and strict decrease between consecutive
    samples. Works for any object exposing ``psi(t)`` and ``horizon``.
    """
    if n_check < 2:
        raise ParameterError("n_check must be at least 2")
    grid = np.linspace(0.0, spec.horizon, n_check)
    vals = np.array([spec.psi(t) for t in grid])
    violations = []
    if abs(vals[-1]) > 1e-12:
        violations.append(f"psi(T) = {vals[-1]!r}, expected 0")
    if vals[0] <= 0:
        violations.append(f"psi(0) = {vals[0]!r} must be positive")
    bad = np.nonzero(np.diff(vals) >= 0)[0]
    for i in bad[:10]:
        violations.append(
            f"not strictly decreasing on [{grid[i]:.6g}, {grid[i + 1]:.6g}]: "
            f"{vals[i]!r} -> {vals[i + 1]!r}"
        )
    if bad.size > 10:
        violations.append(f"... {bad.size - 10} more decrease violations")
    return ValidationReport(n_check=n_check, terminal_value=float(vals[-1]), violations=violations)
