"""Random price models: Poisson slope switching and the Bachelier model.

Both samplers are pure functions of ``(params, seed, index)``: path ``index``
is drawn from the counter-based stream ``rng.stream_key(seed, index)``, the
same stream the Monte Carlo driver uses for its ``index``-th path.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import _kernels
from .errors import ParameterError
from .paths import PricePath
from .rng import check_seed, stream_key

DEFAULT_BACHELIER_STEPS = 10_000


@dataclass(frozen=True)
class PoissonSlopeParams:
    """Piecewise-linear price whose slope is redrawn at Poisson(lam) jump times.

    Each segment has slope ``+L2`` with probability ``p`` and ``-L1`` otherwise.
    """

    lam: float
    p: float
    L1: float = 1.0
    L2: float = 1.0
    x0: float = 0.0
    T: float = 1.0

    def __post_init__(self):
        if not self.lam > 0:
            raise ParameterError(f"lam must be positive, got {self.lam}")
        if not (0.0 < self.p < 1.0):
            raise ParameterError(f"p must lie in (0, 1), got {self.p}")
        if not (self.L1 > 0 and self.L2 > 0):
            raise ParameterError("L1 and L2 must be positive")
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ParameterError(f"T must be positive, got {self.T}")
        if not math.isfinite(self.x0):
            raise ParameterError("x0 must be finite")

    @property
    def q(self) -> float:
        return 1.0 - self.p

    def to_dict(self):
        return {"model": "poisson_slope", **asdict(self)}


@dataclass(frozen=True)
class BachelierParams:
    """X_t = x0 + sigma W_t, linearly interpolated on a uniform grid."""

    sigma: float = 1.0
    x0: float = 0.0
    T: float = 1.0
    n_steps: int = DEFAULT_BACHELIER_STEPS

    def __post_init__(self):
        if not (self.sigma >= 0 and math.isfinite(self.sigma)):
            raise ParameterError(f"sigma must be nonnegative, got {self.sigma}")
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ParameterError(f"T must be positive, got {self.T}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ParameterError(f"n_steps must be a positive integer, got {self.n_steps}")
        if not math.isfinite(self.x0):
            raise ParameterError("x0 must be finite")

    def to_dict(self):
        return {"model": "bachelier", **asdict(self)}


def params_from_dict(d: dict):
    d = dict(d)
    model = d.pop("model", None)
    if model == "poisson_slope":
        return PoissonSlopeParams(**d)
    if model == "bachelier":
        return BachelierParams(**d)
    raise ParameterError(f"unknown model {model!r}")


def sample_poisson_slope(params: PoissonSlopeParams, seed: int, index: int = 0) -> PricePath:
    """Exact event-driven sample: knots at 0, every jump time before T, and T."""
    key = np.uint64(stream_key(np.uint64(check_seed(seed)), np.uint64(index)))
    t, x = _kernels.poisson_knots(
        float(params.x0), float(params.T), float(params.lam), float(params.p),
        float(params.L1), float(params.L2), key,
    )
    return PricePath(t, x)


def sample_bachelier(params: BachelierParams, seed: int, index: int = 0) -> PricePath:
    key = np.uint64(stream_key(np.uint64(check_seed(seed)), np.uint64(index)))
    t, x = _kernels.bachelier_knots(
        float(params.x0), float(params.sigma), float(params.T), int(params.n_steps), key,
    )
    return PricePath(t, x)


def sample(params, seed: int, index: int = 0) -> PricePath:
    if isinstance(params, PoissonSlopeParams):
        return sample_poisson_slope(params, seed, index)
    if isinstance(params, BachelierParams):
        return sample_bachelier(params, seed, index)
    raise ParameterError(f"unsupported model parameters {type(params).__name__}")


def check_lipschitz_band(path: PricePath, L1: float, L2: float, tol: float = 1e-12) -> bool:
    """True iff every segment slope lies in [-L1, L2].

    Compared on increments, with ``tol`` relative to the price scale, so that
    rounding in very short segments is not mistaken for a steep slope.
    """
    dt = np.diff(path.times)
    dx = np.diff(path.prices)
    slack = tol * (1.0 + np.abs(path.prices[1:]))
    return bool(np.all(dx >= -L1 * dt - slack) and np.all(dx <= L2 * dt + slack))
