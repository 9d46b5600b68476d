import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from perfect_stop.errors import DomainError, ParameterError
from perfect_stop.forecast import BrownianQuantileForecast, LipschitzForecast, PiecewiseLinearForecast
from perfect_stop.models import BachelierParams, PoissonSlopeParams, sample_bachelier, sample_poisson_slope
from perfect_stop.paths import PricePath, drawdown, price_at
from perfect_stop.stopping import (
    DeterministicRule,
    PerfectRule,
    StopResult,
    apply_rule,
    estimated_regret,
    perfect_stop,
    realized_regret,
    rule_from_dict,
    sigma_star_lower_bound,
    tau_hat,
    worst_case_regret_lipschitz,
)

LIP = LipschitzForecast(1.0)


def path(*knots):
    return PricePath.from_knots(knots)


def grid_first_crossing(p, forecast, n=2_000_001):
    """Oracle: first grid time where the densely sampled drawdown reaches psi."""
    t = np.union1d(np.linspace(0, p.horizon, n), p.times)
    x = np.interp(t, p.times, p.prices)
    dd = np.maximum.accumulate(x) - x
    psi = np.array([forecast.psi(s) for s in t]) if n < 10_000 else _vector_psi(forecast, t)
    return t[np.argmax(dd >= psi - 1e-12)], t[1] - t[0]


def _vector_psi(f, t):
    if isinstance(f, LipschitzForecast):
        return f.L2 * (f.horizon - t)
    if isinstance(f, BrownianQuantileForecast):
        return f.c_delta * np.sqrt(np.maximum(f.horizon - t, 0))
    return np.interp(t, f.times, f.values)


# ---- perfect_stop examples ---------------------------------------------

def test_declining_path_stops_at_half():
    res = perfect_stop(path((0, 0), (1, -1)), LIP)
    assert res.stop_time == 0.5
    assert res.stop_price == -0.5
    assert res.drawdown_at_stop == res.psi_at_stop == 0.5


def test_rising_path_stops_at_horizon():
    for f in (LIP, BrownianQuantileForecast(1, 0.9), PiecewiseLinearForecast([0, 0.3, 1], [2, 0.5, 0])):
        assert perfect_stop(path((0, 0), (0.4, 1), (0.6, 1), (1, 3)), f).stop_time == 1.0


def test_rise_then_fall():
    # after the peak at 0.25 the drawdown is s - 0.25, which meets 1 - s at 0.625
    p = path((0, 0), (0.25, 0.25), (1, -0.5))
    res = perfect_stop(p, LIP)
    oracle, h = grid_first_crossing(p, LIP)
    assert res.stop_time == pytest.approx(0.625, abs=1e-12)
    assert abs(oracle - 0.625) <= h


def test_sqrt_forecast_matches_grid_oracle():
    f = BrownianQuantileForecast(1.0, 0.5)
    for i in range(20):
        p = sample_bachelier(BachelierParams(n_steps=200), 17, i)
        res = perfect_stop(p, f)
        oracle, h = grid_first_crossing(p, f, n=400_001)
        assert abs(res.stop_time - oracle) <= 2 * h


def test_tabulated_forecast_matches_grid_oracle():
    f = PiecewiseLinearForecast([0, 0.2, 0.7, 1], [1.0, 0.6, 0.1, 0.0])
    for i in range(20):
        p = sample_poisson_slope(PoissonSlopeParams(lam=8, p=0.4), 23, i)
        res = perfect_stop(p, f)
        oracle, h = grid_first_crossing(p, f, n=400_001)
        assert abs(res.stop_time - oracle) <= 2 * h


def test_horizon_mismatch():
    with pytest.raises(DomainError):
        perfect_stop(path((0, 0), (2, 1)), LIP)
    with pytest.raises(ParameterError):
        perfect_stop(path((0, 0), (1, 1)), LIP, tol=0)


# ---- other rules and regrets --------------------------------------------

def test_deterministic_rules():
    p = path((0, 0), (0.5, 1), (1, 0.2))
    end = apply_rule(p, DeterministicRule(1.0))
    assert (end.stop_time, end.stop_price) == (1.0, price_at(p, 1.0))
    start = apply_rule(p, DeterministicRule(0.0))
    assert (start.stop_time, start.drawdown_at_stop) == (0.0, 0.0)
    with pytest.raises(DomainError):
        apply_rule(p, DeterministicRule(1.5))
    with pytest.raises(ParameterError):
        DeterministicRule(-1)


def test_apply_perfect_rule():
    assert apply_rule(path((0, 0), (1, -1)), PerfectRule(LIP)).stop_time == 0.5


def test_realized_regret_examples():
    assert realized_regret(path((0, 0), (1, 1)), 1.0) == 0.0
    assert realized_regret(path((0, 0), (1, -1)), 0.5) == 0.5
    assert realized_regret(path((0, 0), (0.5, 1), (1, 0)), 1.0) == 1.0


def test_estimated_regret_examples():
    p = path((0, 0), (0.5, 1), (1, 0.2))
    assert estimated_regret(p, 1.0, LIP) == pytest.approx(drawdown(p, 1.0))
    assert estimated_regret(p, 0.0, LIP) == 1.0
    q = path((0, 0), (1, -1))
    s = perfect_stop(q, LIP).stop_time
    assert estimated_regret(q, s, LIP) == pytest.approx(LIP.psi(s), abs=1e-12)


def test_rule_serialization():
    for rule in (PerfectRule(BrownianQuantileForecast(1, 0.95)), DeterministicRule(0.25)):
        back = rule_from_dict(rule.to_dict())
        assert back.to_dict() == rule.to_dict()
    with pytest.raises(ParameterError):
        rule_from_dict({"kind": "oracle"})
    r = StopResult(0.5, -0.5, 0.5, 0.5)
    assert r.to_json() == '{"stop_time": 0.5, "stop_price": -0.5, "drawdown_at_stop": 0.5, "psi_at_stop": 0.5}'


# ---- closed forms for the Lipschitz band --------------------------------

def test_lower_bound_examples():
    assert sigma_star_lower_bound(0, 0, 1, 1, 1) == 0.5
    assert sigma_star_lower_bound(0.5, 0.2, 1, 1, 1) == pytest.approx(0.65)
    assert sigma_star_lower_bound(0.3, 0.7, 1, 1, 1) == pytest.approx(0.3)
    assert tau_hat(1, 3, 2).u == 1.5


def test_worst_case_examples():
    assert worst_case_regret_lipschitz(0, 0, 1, 1, 1) == 0.5
    assert worst_case_regret_lipschitz(0.5, 0.2, 1, 1, 1) == pytest.approx(0.35)
    assert worst_case_regret_lipschitz(1, 0, 1, 1, 1) == 0.0
    with pytest.raises(DomainError):
        worst_case_regret_lipschitz(0.5, 0.6, 1, 1, 1)
    with pytest.raises(DomainError):
        sigma_star_lower_bound(1.5, 0, 1, 1, 1)
    with pytest.raises(ParameterError):
        sigma_star_lower_bound(0.5, 0, 0, 1, 1)


# history reaching t = 0.5 with running max 0.3 and price 0.1 (drawdown 0.2)
HISTORY = [(0.0, 0.0), (0.3, 0.3), (0.5, 0.1)]


def _continue(slopes, dt, start=HISTORY):
    knots = list(start)
    t, x = start[-1]
    for s in slopes:
        t, x = t + dt, x + s * dt
        knots.append((t, x))
    knots[-1] = (1.0, knots[-1][1])
    return PricePath.from_knots(knots)


def test_worst_case_by_adversarial_bang_bang_search():
    # oracle: every slope +-1 continuation on 12 equal steps of [0.5, 1]
    best = 0.0
    for slopes in itertools.product((-1.0, 1.0), repeat=12):
        p = _continue(slopes, 0.5 / 12)
        s = perfect_stop(p, LIP).stop_time
        best = max(best, estimated_regret(p, s, LIP))
    assert best == pytest.approx(0.35, abs=1e-12)


def test_random_band_continuations_never_exceed_worst_case():
    rng = np.random.default_rng(5)
    bound = worst_case_regret_lipschitz(0.5, 0.2, 1, 1, 1)
    for _ in range(2000):
        n = int(rng.integers(1, 30))
        p = _continue(rng.uniform(-1, 1, n), 0.5 / n)
        s = perfect_stop(p, LIP).stop_time
        assert estimated_regret(p, s, LIP) <= bound + 1e-6


@settings(max_examples=300, deadline=None)
@given(st.floats(0.2, 5), st.floats(0.2, 5), st.floats(0.5, 3), st.floats(0, 0.95), st.floats(0, 0.99))
def test_extremal_path_attains_bound_and_worst_case(L1, L2, T, tf, df):
    # reach (t, drawdown) by rising at L2 then falling at L1, then fall to T
    t = tf * T
    dd = df * min(L2 * (T - t), L1 * t)
    peak_time = t - dd / L1
    peak = L2 * peak_time
    knots = [(0.0, 0.0)]
    if peak_time > 0:
        knots.append((peak_time, peak))
    if t > peak_time:
        knots.append((t, peak - dd))
    knots.append((T, peak - dd - L1 * (T - t)))
    p = PricePath.from_knots(knots)
    f = LipschitzForecast(L2, horizon=T)
    res = perfect_stop(p, f)
    assert res.stop_time == pytest.approx(sigma_star_lower_bound(t, dd, L1, L2, T), abs=1e-9)
    est = estimated_regret(p, res.stop_time, f)
    assert est == pytest.approx(worst_case_regret_lipschitz(t, dd, L1, L2, T), abs=1e-9)


# ---- properties on random paths -----------------------------------------

def _poisson_paths(n=1000, lam=10.0, seed=0):
    params = PoissonSlopeParams(lam=lam, p=0.5)
    return [sample_poisson_slope(params, seed, i) for i in range(n)]


def test_crossing_equality_on_poisson_paths():
    for p in _poisson_paths():
        res = perfect_stop(p, LIP)
        assert abs(drawdown(p, res.stop_time) - LIP.psi(res.stop_time)) <= 1e-9


def test_crossing_equality_on_bachelier_paths():
    f = BrownianQuantileForecast(1.0, 0.74)
    params = BachelierParams(n_steps=500)
    for i in range(300):
        p = sample_bachelier(params, 1, i)
        res = perfect_stop(p, f)
        assert abs(drawdown(p, res.stop_time) - f.psi(res.stop_time)) <= 1e-9


def test_lower_bound_on_band_paths():
    for p in _poisson_paths(seed=1):
        assert perfect_stop(p, LIP).stop_time >= sigma_star_lower_bound(0, 0, 1, 1, 1) - 1e-9


def test_adaptedness_under_splicing():
    rng = np.random.default_rng(9)
    for p in _poisson_paths(200, seed=2):
        s = perfect_stop(p, LIP).stop_time
        if s >= 1.0 - 1e-6:
            continue
        cut = s + float(rng.uniform(0, 1 - s)) * 0.5
        head = [(t, x) for t, x in zip(p.times, p.prices) if t < cut] + [(cut, price_at(p, cut))]
        tail_t = np.sort(rng.uniform(cut, 1, 5))
        tail = [(t, head[-1][1] + rng.normal()) for t in tail_t if t > cut] + [(1.0, rng.normal())]
        spliced = PricePath.from_knots(head + tail)
        assert perfect_stop(spliced, LIP).stop_time == pytest.approx(s, abs=1e-12)


def test_monotone_in_forecast():
    small, large = LipschitzForecast(0.6), LipschitzForecast(1.4)
    sq_small, sq_large = BrownianQuantileForecast(1, 0.5), BrownianQuantileForecast(1, 0.95)
    for p in _poisson_paths(500, seed=3):
        assert perfect_stop(p, small).stop_time <= perfect_stop(p, large).stop_time + 1e-12
        assert perfect_stop(p, sq_small).stop_time <= perfect_stop(p, sq_large).stop_time + 1e-12
