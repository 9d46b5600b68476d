"""Normal distribution helpers, Kummer's function M and the q-mean threshold.

The threshold ``z_q`` of the stopping rule that minimizes
``E(W*_T - W_tau)^q`` for a standard Brownian motion is the positive root of

    H'(z)/H(z) + z = (1 + q) z M((3+q)/2, 3/2, z^2/2) / M((1+q)/2, 1/2, z^2/2)

with ``H(z) = z^q + 2 * int_{z^q}^inf (1 - Phi(u^(1/q))) du``. The matching
quantile level of the running-maximum forecast is ``delta = 2 Phi(z_q) - 1``.
"""

from __future__ import annotations

import math
import sys
from dataclasses import asdict, dataclass
from statistics import NormalDist

from scipy import integrate, optimize

from .errors import AccuracyError, DomainError, ParameterError, SolverError

_STD_NORMAL = NormalDist()
_SQRT2 = math.sqrt(2.0)

KUMMER_MAX_TERMS = 10_000
KUMMER_REL_TOL = 1e-15


def normal_cdf(y: float) -> float:
    """Standard normal CDF, computed from ``erfc`` to keep the lower tail accurate."""
    return 0.5 * math.erfc(-y / _SQRT2)


def normal_sf(y: float) -> float:
    """Upper tail ``1 - Phi(y)`` without cancellation."""
    return 0.5 * math.erfc(y / _SQRT2)


def normal_pdf(y: float) -> float:
    return math.exp(-0.5 * y * y) / math.sqrt(2.0 * math.pi)


def normal_quantile(p: float) -> float:
    """Inverse of :func:`normal_cdf`.

    Starts from Wichura's AS241 rational approximation and applies one Newton
    step against :func:`normal_cdf`.
    """
    if not (0.0 < p < 1.0):
        raise DomainError(f"normal_quantile needs p in (0, 1), got {p}")
    y = _STD_NORMAL.inv_cdf(p)
    dens = normal_pdf(y)
    if dens > 0.0:
        # work on the smaller tail so the residual keeps its precision
        if p < 0.5:
            y -= (normal_cdf(y) - p) / dens
        else:
            y += (normal_sf(y) - (1.0 - p)) / dens
    return y


def kummer_m(a: float, b: float, z: float, max_terms: int = KUMMER_MAX_TERMS) -> float:
    """Confluent hypergeometric function M(a, b, z) = 1F1(a; b; z).

    Sums the power series ``sum_n (a)_n / (b)_n z^n / n!`` until a term drops
    below ``1e-15`` of the partial sum. For ``z < 0`` Kummer's transformation
    ``M(a, b, z) = e^z M(b - a, b, -z)`` is applied first so that the summed
    series has positive terms (no cancellation) whenever ``b > a``.
    """
    if b <= 0 and float(b).is_integer():
        raise DomainError(f"b must not be a nonpositive integer, got {b}")
    if z < 0:
        return math.exp(z) * kummer_m(b - a, b, -z, max_terms)
    total = 1.0
    term = 1.0
    for n in range(max_terms):
        term *= (a + n) / (b + n) * z / (n + 1)
        total += term
        if abs(term) < KUMMER_REL_TOL * abs(total) or term == 0.0:
            return total
    raise AccuracyError(f"M({a}, {b}, {z}) did not converge in {max_terms} terms")


def _h_tail(z: float, q: float) -> float:
    # int_z^{z+10} (1 - Phi(v)) v^(q-1) dv; beyond z+10 the Gaussian tail is negligible
    val, _ = integrate.quad(
        lambda v: normal_sf(v) * v ** (q - 1.0),
        z,
        z + 10.0,
        epsabs=1e-13,
        epsrel=1e-12,
        limit=200,
    )
    return val


def h_function(z: float, q: float) -> float:
    """H(z) = z^q + 2 q int_z^inf (1 - Phi(v)) v^(q-1) dv  (after u = v^q)."""
    if z < 0:
        raise ParameterError(f"H needs z >= 0, got {z}")
    if q <= 1:
        raise ParameterError(f"H needs q > 1, got {q}")
    return z**q + 2.0 * q * _h_tail(z, q)


def h_derivative(z: float, q: float) -> float:
    """H'(z) = q z^(q-1) (2 Phi(z) - 1)."""
    if z < 0:
        raise ParameterError(f"H' needs z >= 0, got {z}")
    if q <= 1:
        raise ParameterError(f"H' needs q > 1, got {q}")
    # 2 Phi(z) - 1 = erf(z / sqrt 2), exact near z = 0
    return q * z ** (q - 1.0) * math.erf(z / _SQRT2)


def zq_imbalance(z: float, q: float) -> float:
    """Left side minus right side of the q-mean threshold equation."""
    x = 0.5 * z * z
    lhs = h_derivative(z, q) / h_function(z, q) + z
    rhs = (1.0 + q) * z * kummer_m((3.0 + q) / 2.0, 1.5, x) / kummer_m((1.0 + q) / 2.0, 0.5, x)
    return lhs - rhs


@dataclass(frozen=True)
class ZqSolution:
    q: float
    z_q: float
    delta: float
    residual: float
    sigma: float = 1.0

    @property
    def c_delta(self) -> float:
        """Forecast coefficient for volatility ``sigma``: sigma * z_q."""
        return self.sigma * self.z_q

    def to_dict(self):
        d = asdict(self)
        d["c_delta"] = self.c_delta
        return d


def solve_zq(q: float, sigma: float = 1.0, bracket=(1e-3, 8.0), xtol: float = 1e-10) -> ZqSolution:
    """Find the positive root ``z_q`` and its quantile level ``delta``.

    The equation is dimensionless; ``sigma`` only enters through
    ``c_delta = sigma * z_q`` on the returned solution.

    Near ``z = 0`` the imbalance behaves like ``-q z``, and it is positive for
    large ``z``, so ``bracket`` is checked for a sign change and, on failure,
    widened once to ``(lo / 100, 2 * hi)``.
    """
    if not q > 1:
        raise ParameterError(f"q must exceed 1, got {q}")
    if not sigma > 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")
    lo, hi = bracket
    f_lo, f_hi = zq_imbalance(lo, q), zq_imbalance(hi, q)
    if f_lo * f_hi > 0:
        lo, hi = lo / 100.0, hi * 2.0
        f_lo, f_hi = zq_imbalance(lo, q), zq_imbalance(hi, q)
        if f_lo * f_hi > 0:
            raise SolverError(
                f"no sign change for q={q} on [{lo}, {hi}]",
                q=q, lo=lo, hi=hi, f_lo=f_lo, f_hi=f_hi,
            )
    z = optimize.brentq(zq_imbalance, lo, hi, args=(q,), xtol=xtol, rtol=4 * sys.float_info.epsilon, maxiter=200)
    return ZqSolution(
        q=float(q),
        z_q=z,
        delta=math.erf(z / _SQRT2),
        residual=zq_imbalance(z, q),
        sigma=float(sigma),
    )


def table3(q_values=(1.1, 2, 4, 6, 8, 10)):
    return [solve_zq(q) for q in q_values]
