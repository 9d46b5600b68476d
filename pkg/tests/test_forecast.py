import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from perfect_stop.errors import DomainError, ParameterError
from perfect_stop.forecast import (
    BrownianQuantileForecast,
    LipschitzForecast,
    PiecewiseLinearForecast,
    from_dict,
    psi,
    validate,
)


def test_lipschitz_value():
    assert psi(LipschitzForecast(1.0, horizon=1.0), 0.25) == 0.75


def test_brownian_quantile_value():
    # bisection oracle: Phi(1.959963984540054) = 0.975
    f = BrownianQuantileForecast(sigma=1.0, delta=0.95, horizon=1.0)
    assert f.psi(0.0) == pytest.approx(1.959963984540054, abs=1e-9)
    assert f(0.75) == pytest.approx(1.959963984540054 * 0.5, abs=1e-9)


@pytest.mark.parametrize("f", [
    LipschitzForecast(2.0, horizon=3.0),
    BrownianQuantileForecast(0.5, 0.74, horizon=2.0),
    PiecewiseLinearForecast([0, 1, 2], [3, 1, 0]),
])
def test_zero_at_horizon(f):
    assert f.psi(f.horizon) == 0.0


def test_time_domain():
    f = LipschitzForecast(1.0)
    with pytest.raises(DomainError):
        f.psi(1.5)
    with pytest.raises(DomainError):
        f.psi(-0.5)


@pytest.mark.parametrize("build", [
    lambda: LipschitzForecast(0.0),
    lambda: LipschitzForecast(1.0, horizon=0.0),
    lambda: BrownianQuantileForecast(0.0, 0.5),
    lambda: BrownianQuantileForecast(1.0, 1.0),
    lambda: BrownianQuantileForecast(1.0, 0.0),
    lambda: PiecewiseLinearForecast([0, 1], [1, 1]),
    lambda: PiecewiseLinearForecast([0, 1], [1, 0.5]),
    lambda: PiecewiseLinearForecast([0.5, 1], [1, 0]),
])
def test_invalid_parameters(build):
    with pytest.raises(ParameterError):
        build()


def test_validate_examples():
    assert validate(LipschitzForecast(1.0), n_check=100).passed
    assert validate(BrownianQuantileForecast(1.0, 0.5), n_check=100).passed


class ConstantForecast:
    horizon = 1.0

    def psi(self, t):
        return 1.0


def test_validate_flags_constant_forecast():
    rep = validate(ConstantForecast(), n_check=100)
    assert not rep.passed
    assert any("strictly decreasing" in v for v in rep.violations)
    assert any("psi(T)" in v for v in rep.violations)


def test_validate_rejects_tiny_grid():
    with pytest.raises(ParameterError):
        validate(LipschitzForecast(1.0), n_check=1)


@settings(max_examples=1000, deadline=None)
@given(
    st.sampled_from(["lipschitz", "brownian"]),
    st.floats(0.01, 100), st.floats(0.01, 0.99), st.floats(0.1, 10),
    st.floats(0, 1), st.floats(0, 1),
)
def test_positive_start_zero_end_strict_decrease(kind, scale, delta, T, a, b):
    f = LipschitzForecast(scale, horizon=T) if kind == "lipschitz" else BrownianQuantileForecast(scale, delta, horizon=T)
    assert f.psi(0.0) > 0
    assert f.psi(T) == 0
    t1, t2 = sorted((a * T, b * T))
    if t2 > t1 * (1 + 1e-9) + 1e-12:
        assert f.psi(t1) > f.psi(t2)


def test_c_delta_monotone_in_delta_and_proportional_to_sigma():
    deltas = np.linspace(0.05, 0.99, 40)
    c = [BrownianQuantileForecast(1.0, d).c_delta for d in deltas]
    assert all(y > x for x, y in zip(c, c[1:]))
    for d in (0.3, 0.74, 0.95):
        base = BrownianQuantileForecast(1.0, d).c_delta
        assert BrownianQuantileForecast(2.5, d).c_delta == pytest.approx(2.5 * base, rel=1e-14)


def test_piecewise_linear_interpolates():
    f = PiecewiseLinearForecast([0, 0.5, 1], [2, 1, 0])
    assert f.psi(0.25) == 1.5
    assert f.horizon == 1.0


@pytest.mark.parametrize("f", [
    LipschitzForecast(1.5, horizon=2.0),
    BrownianQuantileForecast(0.7, 0.9, horizon=3.0),
    PiecewiseLinearForecast([0, 1, 2], [3, 1, 0]),
])
def test_dict_round_trip(f):
    g = from_dict(f.to_dict())
    for t in np.linspace(0, f.horizon, 11):
        assert g.psi(t) == f.psi(t)


def test_unknown_kind():
    with pytest.raises(ParameterError):
        from_dict({"kind": "oracle"})


def test_brownian_quantile_calibration(future_max):
    # P(max_{s<=u} W_s <= c sqrt(u)) = 2 Phi(c) - 1 by reflection; 10^5 paths
    # on a 10^4-step grid, future maximum taken from t = 0 and t = T/2
    for t_index, fm in future_max.items():
        for delta in (0.5, 0.74, 0.95):
            f = BrownianQuantileForecast(1.0, delta)
            freq = np.mean(fm <= f.psi(t_index / 10_000))
            assert abs(freq - delta) <= 0.01, (t_index, delta, freq)
