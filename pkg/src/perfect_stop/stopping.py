"""Stopping rules on price paths and the regrets they incur.

The perfect rule sells at the first time the drawdown X*_t - X_t reaches the
forecast psi(t). A deterministic rule sells at a fixed time u.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Optional, Union

from . import _kernels
from .errors import DomainError, ParameterError
from .forecast import ForecastSpec, from_dict as forecast_from_dict
from .paths import PricePath, drawdown, price_at, running_max

DEFAULT_TOL = 1e-10


@dataclass(frozen=True)
class PerfectRule:
    forecast: ForecastSpec

    def to_dict(self):
        return {"kind": "perfect", "forecast": self.forecast.to_dict()}


@dataclass(frozen=True)
class DeterministicRule:
    u: float

    def __post_init__(self):
        if not self.u >= 0:
            raise ParameterError(f"u must be nonnegative, got {self.u}")

    def to_dict(self):
        return {"kind": "deterministic", "u": self.u}


StoppingRuleSpec = Union[PerfectRule, DeterministicRule]


def rule_from_dict(d: dict) -> StoppingRuleSpec:
    if d.get("kind") == "perfect":
        return PerfectRule(forecast_from_dict(d["forecast"]))
    if d.get("kind") == "deterministic":
        return DeterministicRule(float(d["u"]))
    raise ParameterError(f"unknown rule kind {d.get('kind')!r}")


@dataclass(frozen=True)
class StopResult:
    stop_time: float
    stop_price: float
    drawdown_at_stop: float
    psi_at_stop: Optional[float] = None

    def to_dict(self):
        return asdict(self)

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def perfect_stop(path: PricePath, forecast: ForecastSpec, tol: float = DEFAULT_TOL) -> StopResult:
    """First time the drawdown reaches ``forecast``.

    Affine and tabulated forecasts are crossed in closed form, the square-root
    forecast through a quadratic in sqrt(T - t); bisection to ``tol`` is only
    a fallback when rounding leaves the quadratic without a bracketed root.
    Because psi(T) = 0 the rule always stops by T.
    """
    if abs(forecast.horizon - path.horizon) > 1e-12 * max(1.0, path.horizon):
        raise DomainError(f"forecast horizon {forecast.horizon} != path horizon {path.horizon}")
    if not tol > 0:
        raise ParameterError("tol must be positive")
    kind, coef, tt, tv = forecast.kernel_args()
    t, x, m = _kernels.first_crossing(path.times, path.prices, kind, coef, tt, tv, tol)
    return StopResult(
        stop_time=float(t),
        stop_price=float(x),
        drawdown_at_stop=float(m - x),
        psi_at_stop=forecast.psi(min(float(t), forecast.horizon)),
    )


def apply_rule(path: PricePath, rule: StoppingRuleSpec, tol: float = DEFAULT_TOL) -> StopResult:
    if isinstance(rule, PerfectRule):
        return perfect_stop(path, rule.forecast, tol)
    if isinstance(rule, DeterministicRule):
        if rule.u > path.horizon:
            raise DomainError(f"u={rule.u} beyond horizon {path.horizon}")
        return StopResult(
            stop_time=float(rule.u),
            stop_price=price_at(path, rule.u),
            drawdown_at_stop=drawdown(path, rule.u),
        )
    raise ParameterError(f"unsupported rule {rule!r}")


def realized_regret(path: PricePath, stop_time: float) -> float:
    """Ultimate maximum minus the selling price; known only at T."""
    return running_max(path, path.horizon) - price_at(path, stop_time)


def estimated_regret(path: PricePath, stop_time: float, forecast: ForecastSpec) -> float:
    """max(drawdown at the stop, forecast at the stop); known at the stop."""
    return max(drawdown(path, stop_time), forecast.psi(stop_time))


def _check_band_args(t, drawdown_t, L1, L2, T):
    if not (L1 > 0 and L2 > 0):
        raise ParameterError("L1 and L2 must be positive")
    if not T > 0:
        raise ParameterError("T must be positive")
    if not (0 <= t <= T):
        raise DomainError(f"t={t} outside [0, {T}]")
    if drawdown_t < 0:
        raise DomainError(f"drawdown must be nonnegative, got {drawdown_t}")


def sigma_star_lower_bound(t: float, drawdown_t: float, L1: float, L2: float, T: float) -> float:
    """Earliest possible perfect stop for a slope band [-L1, L2], given the state at t.

    Attained by the continuation that falls at slope -L1 from time t.
    """
    _check_band_args(t, drawdown_t, L1, L2, T)
    s = L1 + L2
    return L1 * t / s + L2 * T / s - drawdown_t / s


def worst_case_regret_lipschitz(t: float, drawdown_t: float, L1: float, L2: float, T: float) -> float:
    """Worst-case estimated regret of the perfect rule from state (t, drawdown_t).

    A convex combination of the past regret and the forecast L2 (T - t).
    """
    _check_band_args(t, drawdown_t, L1, L2, T)
    if drawdown_t > L2 * (T - t) * (1 + 1e-12) + 1e-15:
        raise DomainError("drawdown already exceeds the forecast; the rule has stopped")
    s = L1 + L2
    return L2 / s * drawdown_t + L1 / s * L2 * (T - t)


def tau_hat(L1: float, L2: float, T: float) -> DeterministicRule:
    """The deterministic rule u = L2 T / (L1 + L2), optimal from time 0 only."""
    return DeterministicRule(sigma_star_lower_bound(0.0, 0.0, L1, L2, T))
