"""Monte Carlo estimates of expected realized and estimated regret.

Every rule of an experiment is evaluated on the same sampled paths (common
random numbers). Path ``i`` is drawn from the stream ``(master_seed, i)``, so
the per-path results, and hence the report, do not depend on how the index
range is split into shards or on which worker ran a shard.
"""

from __future__ import annotations

import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _kernels
from .errors import DomainError, ParameterError
from .forecast import ForecastSpec, LipschitzForecast
from .models import BachelierParams, PoissonSlopeParams
from .rng import check_seed
from .stopping import DEFAULT_TOL, DeterministicRule, PerfectRule

Z99 = 2.576
DEFAULT_SHARD_SIZE = 1 << 16
TABLE_N_PATHS = 1_000_000
BACHELIER_N_PATHS = 100_000


@dataclass(frozen=True)
class ExperimentSpec:
    model: object
    rules: tuple
    forecast: ForecastSpec
    n_paths: int
    master_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "rules", tuple(self.rules))
        if int(self.n_paths) != self.n_paths or self.n_paths < 1:
            raise ParameterError(f"n_paths must be a positive integer, got {self.n_paths}")
        check_seed(self.master_seed)
        if not isinstance(self.model, (PoissonSlopeParams, BachelierParams)):
            raise ParameterError(f"unsupported model {type(self.model).__name__}")
        if not self.rules:
            raise ParameterError("at least one rule is required")
        T = self.model.T
        _check_forecast(self.forecast, T)
        for rule in self.rules:
            if isinstance(rule, PerfectRule):
                _check_forecast(rule.forecast, T)
            elif isinstance(rule, DeterministicRule):
                if rule.u > T:
                    raise DomainError(f"deterministic time {rule.u} beyond horizon {T}")
            else:
                raise ParameterError(f"unsupported rule {rule!r}")

    def to_dict(self):
        return {
            "model": self.model.to_dict(),
            "rules": [r.to_dict() for r in self.rules],
            "forecast": self.forecast.to_dict(),
            "n_paths": self.n_paths,
            "master_seed": self.master_seed,
        }


def _check_forecast(f: ForecastSpec, T: float) -> None:
    if abs(f.horizon - T) > 1e-12 * max(1.0, T):
        raise DomainError(f"forecast horizon {f.horizon} != model horizon {T}")
    if f.kernel_args()[0] == _kernels.TABLE:
        raise ParameterError("tabulated forecasts are not supported in Monte Carlo runs")


@dataclass(frozen=True)
class Estimate:
    mean: float
    stderr: float
    ci99: float

    @classmethod
    def of(cls, x: np.ndarray) -> "Estimate":
        n = x.size
        # fsum is correctly rounded, so the result is independent of summation order
        mean = math.fsum(x) / n
        if n > 1:
            var = math.fsum((x - mean) ** 2) / (n - 1)
            se = math.sqrt(var / n)
        else:
            se = math.inf
        return cls(mean=mean, stderr=se, ci99=Z99 * se)


@dataclass(frozen=True)
class RuleSummary:
    rule: dict
    realized_regret: Estimate
    estimated_regret: Estimate
    stop_time: Estimate

    @property
    def mean_realized_regret(self):
        return self.realized_regret.mean

    @property
    def mean_estimated_regret(self):
        return self.estimated_regret.mean

    @property
    def mean_stop_time(self):
        return self.stop_time.mean


@dataclass(frozen=True)
class RegretReport:
    rules: list
    n_paths: int
    master_seed: int
    config: dict = field(default_factory=dict)

    def __getitem__(self, i) -> RuleSummary:
        return self.rules[i]

    def to_dict(self):
        return asdict(self)

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


@dataclass
class Samples:
    """Per-path outcomes, shape (n_rules, n_paths)."""

    realized: np.ndarray
    estimated: np.ndarray
    stop_time: np.ndarray


def _rule_arrays(rules):
    perfect = np.array([isinstance(r, PerfectRule) for r in rules], dtype=np.bool_)
    u = np.array([r.u if isinstance(r, DeterministicRule) else 0.0 for r in rules])
    kind = np.zeros(len(rules), dtype=np.int64)
    coef = np.zeros(len(rules))
    for i, r in enumerate(rules):
        if isinstance(r, PerfectRule):
            kind[i], coef[i] = r.forecast.kernel_args()[:2]
    return perfect, u, kind, coef


def _shards(n, shard_size):
    return [(s, min(s + shard_size, n)) for s in range(0, n, shard_size)]


def simulate(spec: ExperimentSpec, shard_size: int = DEFAULT_SHARD_SIZE, workers: int = 1,
             tol: float = DEFAULT_TOL) -> Samples:
    """Run every rule on paths ``0 .. n_paths-1`` and return the per-path outcomes."""
    perfect, u, kind, coef = _rule_arrays(spec.rules)
    est_kind, est_coef = spec.forecast.kernel_args()[:2]
    seed = np.uint64(spec.master_seed)
    m = spec.model

    def run(bounds):
        start, stop = bounds
        if isinstance(m, PoissonSlopeParams):
            return _kernels.poisson_pass(
                seed, start, stop, float(m.x0), float(m.T), float(m.lam), float(m.p),
                float(m.L1), float(m.L2), perfect, u, kind, coef, est_kind, est_coef, tol,
            )
        return _kernels.bachelier_pass(
            seed, start, stop, float(m.x0), float(m.sigma), float(m.T), int(m.n_steps),
            perfect, u, kind, coef, est_kind, est_coef, tol,
        )

    bounds = _shards(spec.n_paths, shard_size)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(run, bounds))
    else:
        parts = [run(b) for b in bounds]
    real, est, time = (np.concatenate([p[j] for p in parts], axis=1) for j in range(3))
    return Samples(realized=real, estimated=est, stop_time=time)


def run_experiment(spec: ExperimentSpec, shard_size: int = DEFAULT_SHARD_SIZE,
                   workers: int = 1) -> RegretReport:
    s = simulate(spec, shard_size=shard_size, workers=workers)
    summaries = [
        RuleSummary(
            rule=rule.to_dict(),
            realized_regret=Estimate.of(s.realized[r]),
            estimated_regret=Estimate.of(s.estimated[r]),
            stop_time=Estimate.of(s.stop_time[r]),
        )
        for r, rule in enumerate(spec.rules)
    ]
    return RegretReport(rules=summaries, n_paths=spec.n_paths, master_seed=spec.master_seed,
                        config=spec.to_dict())


@dataclass(frozen=True)
class SmallLambdaApproximation:
    """Two-trajectory limit (no slope change on [0, T]) of the Poisson model, L1 = L2 = 1.

    With probability p the path is x + s, otherwise x - s. The perfect rule
    stops at T on the first and at T/2 on the second.
    """

    p: float
    T: float

    def __post_init__(self):
        if not (0 < self.p < 1):
            raise ParameterError(f"p must lie in (0, 1), got {self.p}")
        if not self.T > 0:
            raise ParameterError(f"T must be positive, got {self.T}")

    @property
    def q(self):
        return 1.0 - self.p

    @property
    def mean_stop_time(self):
        return self.p * self.T + self.q * self.T / 2

    @property
    def estimated_regret_perfect(self):
        return self.q * self.T / 2

    @property
    def realized_regret_perfect(self):
        return self.q * self.T / 2

    def estimated_regret_deterministic(self, u):
        return max(self.p * self.T + (self.q - self.p) * u, self.T - u)

    def realized_regret_deterministic(self, u):
        return self.p * self.T + (self.q - self.p) * u


def small_lambda_approximation(p: float, T: float = 1.0) -> SmallLambdaApproximation:
    return SmallLambdaApproximation(p=float(p), T=float(T))


@dataclass
class DoobReport:
    u: list
    estimates: list
    pairs: list
    max_abs_diff: float
    max_z: float
    threshold: float

    @property
    def consistent(self) -> bool:
        return self.max_z <= self.threshold

    @property
    def within_ci99(self) -> bool:
        return self.max_z <= Z99

    def to_dict(self):
        d = asdict(self)
        d.update(consistent=self.consistent, within_ci99=self.within_ci99)
        return d


def doob_check(params: BachelierParams, rules, n_paths: int = BACHELIER_N_PATHS,
               master_seed: int = 0, threshold: float = 3.0) -> DoobReport:
    """Compare expected realized regrets of deterministic rules on a martingale.

    Differences are paired (same paths), so each pair's standard error is the
    standard error of the per-path difference.
    """
    rules = [r if isinstance(r, DeterministicRule) else DeterministicRule(float(r)) for r in rules]
    if not rules:
        raise ParameterError("need at least one deterministic rule")
    spec = ExperimentSpec(
        model=params, rules=tuple(rules), forecast=_doob_forecast(params.T),
        n_paths=n_paths, master_seed=master_seed,
    )
    s = simulate(spec)
    estimates = [asdict(Estimate.of(s.realized[r])) for r in range(len(rules))]
    pairs = []
    max_diff = max_z = 0.0
    for i, j in itertools.combinations(range(len(rules)), 2):
        e = Estimate.of(s.realized[i] - s.realized[j])
        if e.stderr > 0:
            z = abs(e.mean) / e.stderr
        else:
            z = 0.0 if e.mean == 0 else math.inf
        pairs.append({"u_i": rules[i].u, "u_j": rules[j].u, "diff": e.mean, "stderr": e.stderr, "z": z})
        max_diff = max(max_diff, abs(e.mean))
        max_z = max(max_z, z)
    return DoobReport(u=[r.u for r in rules], estimates=estimates, pairs=pairs,
                      max_abs_diff=max_diff, max_z=max_z, threshold=threshold)


def _doob_forecast(T):
    # only realized regret is used; any valid forecast fills the estimated column
    return LipschitzForecast(1.0, horizon=T)


def table1(lambdas=(0.1, 1, 10, 50, 100, 1000), n_paths=TABLE_N_PATHS, seed=0, T=1.0, p=0.5):
    """Rows of (lambda, E sigma*, realized regret of sigma*, realized regret of u = T/2)."""
    f = LipschitzForecast(1.0, horizon=T)
    rows = []
    for lam in lambdas:
        spec = ExperimentSpec(
            model=PoissonSlopeParams(lam=lam, p=p, T=T),
            rules=(PerfectRule(f), DeterministicRule(T / 2)),
            forecast=f, n_paths=n_paths, master_seed=seed,
        )
        rep = run_experiment(spec)
        rows.append({
            "lambda": lam,
            "E_sigma": rep[0].stop_time.mean,
            "R_sigma": rep[0].realized_regret.mean,
            "R_u": rep[1].realized_regret.mean,
            "ci99_E_sigma": rep[0].stop_time.ci99,
            "ci99_R_sigma": rep[0].realized_regret.ci99,
            "ci99_R_u": rep[1].realized_regret.ci99,
        })
    return rows


def table2(ps=(0.2, 0.4, 0.6, 0.8), lam=10.0, n_paths=TABLE_N_PATHS, seed=0, T=1.0):
    """Rows of (p, E sigma*, realized regret of sigma*, of u = 0, T/2, T)."""
    f = LipschitzForecast(1.0, horizon=T)
    rows = []
    for p in ps:
        spec = ExperimentSpec(
            model=PoissonSlopeParams(lam=lam, p=p, T=T),
            rules=(PerfectRule(f), DeterministicRule(0.0), DeterministicRule(T / 2), DeterministicRule(T)),
            forecast=f, n_paths=n_paths, master_seed=seed,
        )
        rep = run_experiment(spec)
        rows.append({
            "p": p,
            "E_sigma": rep[0].stop_time.mean,
            "R_sigma": rep[0].realized_regret.mean,
            "R_0": rep[1].realized_regret.mean,
            "R_half": rep[2].realized_regret.mean,
            "R_T": rep[3].realized_regret.mean,
            "ci99_E_sigma": rep[0].stop_time.ci99,
            "ci99_R_sigma": rep[0].realized_regret.ci99,
            "ci99_R_0": rep[1].realized_regret.ci99,
            "ci99_R_half": rep[2].realized_regret.ci99,
            "ci99_R_T": rep[3].realized_regret.ci99,
        })
    return rows
