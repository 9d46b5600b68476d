"""Continuous piecewise-linear price trajectories on [0, T].

A path is stored as its knots; between knots the price is the linear
interpolant, so running maxima and drawdowns can be computed exactly from
the knot values.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError, ParameterError, ParseError

STRUCTURAL_TOL = 1e-12


@dataclass(frozen=True)
class PricePath:
    """Immutable piecewise-linear trajectory.

    Parameters
    ----------
    times : array_like
        Strictly increasing knot times, starting at 0. The last one is the
        horizon T.
    prices : array_like
        Price at each knot.
    """

    times: np.ndarray
    prices: np.ndarray

    def __post_init__(self):
        times = np.array(self.times, dtype=float)
        prices = np.array(self.prices, dtype=float)
        if times.ndim != 1 or times.shape != prices.shape:
            raise ParameterError("times and prices must be 1-d arrays of equal length")
        if times.size < 2:
            raise ParameterError("a path needs at least 2 knots")
        if times[0] != 0.0:
            raise ParameterError(f"first knot time must be 0, got {times[0]}")
        if not np.all(np.diff(times) > 0):
            raise ParameterError("knot times must be strictly increasing")
        if not (np.all(np.isfinite(times)) and np.all(np.isfinite(prices))):
            raise ParameterError("knots must be finite")
        times.flags.writeable = False
        prices.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "prices", prices)

    @classmethod
    def from_knots(cls, knots):
        """Build from a sequence of ``(time, price)`` pairs."""
        arr = np.asarray(knots, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise ParameterError("knots must be a sequence of (time, price) pairs")
        return cls(arr[:, 0], arr[:, 1])

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def knots(self):
        return list(zip(self.times.tolist(), self.prices.tolist()))

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.prices) / np.diff(self.times)

    def __eq__(self, other):
        if not isinstance(other, PricePath):
            return NotImplemented
        return np.array_equal(self.times, other.times) and np.array_equal(self.prices, other.prices)

    def __hash__(self):
        return hash((self.times.tobytes(), self.prices.tobytes()))

    def __len__(self):
        return self.times.size


@dataclass(frozen=True)
class PathStatistics:
    running_max: float
    drawdown: float
    at_time: float


def _check_time(path: PricePath, t: float) -> None:
    if not (0.0 <= t <= path.horizon):
        raise DomainError(f"time {t} outside [0, {path.horizon}]")


def price_at(path: PricePath, t: float) -> float:
    """Linear interpolation between the knots bracketing ``t``."""
    _check_time(path, t)
    return float(np.interp(t, path.times, path.prices))


def running_max(path: PricePath, t: float) -> float:
    """Exact maximum of the path over [0, t]."""
    _check_time(path, t)
    k = int(np.searchsorted(path.times, t, side="right"))
    return max(float(path.prices[:k].max()), price_at(path, t))


def drawdown(path: PricePath, t: float) -> float:
    """Gap between the running maximum and the current price; never negative."""
    return running_max(path, t) - price_at(path, t)


def statistics(path: PricePath, t: float) -> PathStatistics:
    m = running_max(path, t)
    return PathStatistics(running_max=m, drawdown=m - price_at(path, t), at_time=float(t))


def same_prefix(a: PricePath, b: PricePath, t: float, tol: float = STRUCTURAL_TOL) -> bool:
    """True iff ``a`` and ``b`` agree within ``tol`` on [0, t].

    Both paths are linear between the union of their knots, so comparing at
    those knots (and at ``t``) is sufficient.
    """
    if a.horizon != b.horizon:
        raise DomainError(f"horizons differ: {a.horizon} vs {b.horizon}")
    if tol < 0:
        raise ParameterError("tol must be nonnegative")
    _check_time(a, t)
    grid = np.union1d(a.times, b.times)
    grid = np.append(grid[grid <= t], t)
    diff = np.abs(np.interp(grid, a.times, a.prices) - np.interp(grid, b.times, b.prices))
    return bool(np.all(diff <= tol))


def read_csv(source) -> PricePath:
    """Parse a ``t,price`` CSV (path or file-like) into a :class:`PricePath`."""
    if isinstance(source, (str, Path)):
        with open(source, newline="") as fh:
            return _parse_csv(fh)
    return _parse_csv(source)


def _parse_csv(fh) -> PricePath:
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty file", line=1) from None
    if [h.strip() for h in header] != ["t", "price"]:
        raise ParseError(f"expected header 't,price', got {','.join(header)!r}", line=1)
    times, prices = [], []
    for row in reader:
        line = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise ParseError(f"expected 2 fields, got {len(row)}", line=line)
        try:
            t, x = float(row[0]), float(row[1])
        except ValueError:
            raise ParseError(f"non-numeric field in {row!r}", line=line) from None
        if not times and t != 0.0:
            raise ParseError(f"first row must have t=0, got {t}", line=line)
        if times and t <= times[-1]:
            raise ParseError(f"times must strictly increase ({t} after {times[-1]})", line=line)
        times.append(t)
        prices.append(x)
    if len(times) < 2:
        raise ParseError("need at least 2 data rows", line=reader.line_num)
    return PricePath(times, prices)


def write_csv(path: PricePath, dest=None) -> str | None:
    """Write ``path`` as ``t,price`` CSV. Returns the text if ``dest`` is None."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "price"])
    for t, x in zip(path.times, path.prices):
        w.writerow([repr(float(t)), repr(float(x))])
    text = buf.getvalue()
    if dest is None:
        return text
    if isinstance(dest, (str, Path)):
        Path(dest).write_text(text)
    else:
        dest.write(text)
    return None
