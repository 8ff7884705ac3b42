"""Derivative-free 1-D minimization for objectives with a +inf region.

The objectives handled here are extended-real valued: finite on a half-line
``(-inf, x_inf)`` and ``+inf`` beyond it.  ``NaN`` returned by an objective is
treated as ``+inf`` everywhere in this module.

The stack is

* :func:`find_feasible` -- step away from the ``+inf`` region on a fixed grid,
* :func:`bracket_minimum` -- two-stage exponential search for a bracketing
  :class:`Triplet`,
* :func:`golden_section_search` -- contract the bracket to an ``epsilon``
  tolerance,
* :func:`minimize` -- bracket then search.

All objective calls go through :class:`MemoizedObjective`, so evaluation
counts refer to distinct points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
PHI = (1.0 + math.sqrt(5.0)) / 2.0

FEASIBLE_MAX_STEPS = 10_000
BRACKET_MAX_STEPS = 200


class OptimizationError(RuntimeError):
    """Base class for failures of the 1-D optimizer stack."""


class NoFeasiblePointError(OptimizationError):
    pass


class BracketNotFoundError(OptimizationError):
    pass


class InvalidTripletError(ValueError):
    pass


def extended(value) -> float:
    """Map an objective value into ``R u {+inf}`` (``NaN`` and ``-inf`` excluded).

    ``NaN`` becomes ``+inf``.  ``-inf`` is not a legal objective value and
    raises.
    """
    v = float(value)
    if math.isnan(v):
        return math.inf
    if v == -math.inf:
        raise ValueError("objective returned -inf")
    return v


class MemoizedObjective:
    """Caching wrapper around a scalar objective.

    Attributes
    ----------
    calls : int
        Number of distinct points at which the wrapped function was evaluated.
    """

    def __init__(self, fn: Callable[[float], float]):
        if isinstance(fn, MemoizedObjective):
            fn = fn.fn
        self.fn = fn
        self.cache: dict[float, float] = {}
        self.calls = 0

    def __call__(self, x: float) -> float:
        x = float(x)
        try:
            return self.cache[x]
        except KeyError:
            pass
        v = extended(self.fn(x))
        self.cache[x] = v
        self.calls += 1
        return v


def _memo(f) -> MemoizedObjective:
    return f if isinstance(f, MemoizedObjective) else MemoizedObjective(f)


@dataclass(frozen=True)
class Triplet:
    """Bracketing triple ``a < b < c`` with ``f(b) <= f(a) < inf`` and ``f(b) <= f(c)``.

    ``fc`` may be ``+inf``; the right end is allowed to sit in the degenerate
    region.
    """

    a: float
    b: float
    c: float
    fa: float
    fb: float
    fc: float

    def __post_init__(self):
        if not (self.a < self.b < self.c):
            raise InvalidTripletError(f"points not ordered: {self.a}, {self.b}, {self.c}")
        if not math.isfinite(self.fa):
            raise InvalidTripletError("f(a) must be finite")
        if not (self.fb <= self.fa and self.fb <= self.fc):
            raise InvalidTripletError(
                f"f(b)={self.fb} must not exceed f(a)={self.fa} or f(c)={self.fc}"
            )

    @classmethod
    def from_points(cls, f, a: float, b: float, c: float) -> "Triplet":
        f = _memo(f)
        return cls(a, b, c, f(a), f(b), f(c))

    @property
    def width(self) -> float:
        return self.c - self.a


@dataclass(frozen=True)
class SearchParams:
    """Exponential-search and tolerance settings for :func:`minimize`."""

    c: float = 0.1
    r: float = 2.0
    epsilon: float = 0.01
    delta: float = -1.0

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("c must be positive")
        if not self.r > 1:
            raise ValueError("r must exceed 1")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.delta == 0 or not math.isfinite(self.delta):
            raise ValueError("delta must be finite and nonzero")


def find_feasible(f, x0: float, delta: float, max_steps: int = FEASIBLE_MAX_STEPS) -> float:
    """Walk ``x0, x0 + delta, x0 + 2 delta, ...`` until ``f`` is finite."""
    if delta == 0:
        raise ValueError("delta must be nonzero")
    f = _memo(f)
    x = float(x0)
    for k in range(max_steps + 1):
        if f(x) < math.inf:
            return x
        # Multiplying rather than accumulating keeps the grid exact.
        x = x0 + (k + 1) * delta
    raise NoFeasiblePointError(f"no feasible point found within {max_steps} steps from {x0}")


def bracket_minimum(f, x0: float, c: float, r: float, max_steps: int = BRACKET_MAX_STEPS) -> Triplet:
    """Two-stage exponential search for a bracketing triplet.

    Stage I probes ``x0 + c r^k`` until the objective increases; stage II
    probes ``anchor - c r^k`` from the last stage-I point until it increases
    again.  ``+inf`` counts as an increase.
    """
    if not c > 0 or not r > 1:
        raise ValueError("need c > 0 and r > 1")
    f = _memo(f)
    x = float(x0)
    y = f(x)
    if not y < math.inf:
        raise ValueError(f"bracket_minimum needs a feasible start, f({x0}) = inf")

    for k in range(max_steps):
        xp = x0 + c * r**k
        yp = f(xp)
        if y < yp:
            x_plus, yplus = xp, yp
            anchor = x
            break
        x, y = xp, yp
    else:
        raise BracketNotFoundError(f"bracket not found: stage I exceeded {max_steps} steps")

    for k in range(max_steps):
        xp = anchor - c * r**k
        yp = f(xp)
        if y < yp:
            return Triplet(xp, x, x_plus, yp, y, yplus)
        x, y = xp, yp
    raise BracketNotFoundError(f"bracket not found: stage II exceeded {max_steps} steps")


def gss_iteration_bound(width: float, epsilon: float) -> int:
    """Closed-form iteration count of golden-section search on a golden bracket."""
    arg = 2.0 * (2.0 * INV_PHI - 1.0) * abs(width) / epsilon
    if arg <= 1.0:
        return 0
    return math.ceil(math.log(arg) / math.log(PHI))


def _distance_bound(x0, x1, x2, x3, f1, f2) -> float:
    """Largest possible distance from the returned probe to the bracketed minimum."""
    if f1 <= f2:
        return max(x1 - x0, x2 - x1)
    return max(x2 - x1, x3 - x2)


def golden_section_search(f, t: Triplet, epsilon: float, history: list | None = None) -> float:
    """Contract a bracketing triplet until the probes are within ``epsilon / 2``.

    The probe-gap test alone certifies ``epsilon``-closeness only when the
    probes sit at golden positions.  A bracket whose middle point is not at
    a golden position can leave the two probes close together inside a wide
    interval, so the loop also continues while the returned probe could lie
    more than ``epsilon`` from the bracketed minimum.  On golden brackets
    the extra test never fires and the iteration count is the closed-form
    bound.

    Parameters
    ----------
    f : callable
        Objective; may return ``+inf`` or ``NaN`` (treated as ``+inf``).
    t : Triplet
        Valid bracket.
    epsilon : float
        Absolute tolerance.
    history : list, optional
        If given, receives one ``(x0, x1, x2, x3, f1, f2)`` tuple for the
        initial state and after each iteration.

    Returns
    -------
    float
        The better of the two final interior probes.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if not isinstance(t, Triplet):
        raise TypeError("t must be a Triplet")
    f = _memo(f)
    # seed the cache so the bracket points are not re-evaluated
    f.cache.setdefault(float(t.a), t.fa)
    f.cache.setdefault(float(t.b), t.fb)
    f.cache.setdefault(float(t.c), t.fc)

    a, b, c = t.a, t.b, t.c
    x0, x3 = a, c
    if abs(c - b) > abs(b - a):
        x1 = b
        x2 = b + (1.0 - INV_PHI) * (c - b)
    else:
        x2 = b
        x1 = b - (1.0 - INV_PHI) * (b - a)
    f1 = f(x1)
    f2 = f(x2)
    if history is not None:
        history.append((x0, x1, x2, x3, f1, f2))

    # cap guards against an epsilon below floating-point resolution of the bracket
    max_iter = gss_iteration_bound(c - a, epsilon) + 200
    it = 0
    while (abs(x1 - x2) > epsilon / 2.0 or _distance_bound(x0, x1, x2, x3, f1, f2) > epsilon) and it < max_iter:
        it += 1
        if f2 < f1:
            x0, x1 = x1, x2
            x2 = INV_PHI * x2 + (1.0 - INV_PHI) * x3
            f1 = f2
            f2 = f(x2)
        else:
            x3, x2 = x2, x1
            x1 = INV_PHI * x1 + (1.0 - INV_PHI) * x0
            f2 = f1
            f1 = f(x1)
        if history is not None:
            history.append((x0, x1, x2, x3, f1, f2))

    return x1 if f1 <= f2 else x2


def minimize(f, x0: float, params: SearchParams) -> float:
    """Bracket a local minimum from a feasible ``x0`` and refine it by golden-section search."""
    f = _memo(f)
    t = bracket_minimum(f, x0, params.c, params.r)
    return golden_section_search(f, t, params.epsilon)
