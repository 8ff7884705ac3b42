"""Round-based annealing-schedule adaptation.

Each round runs adaptive SMC on the current schedule, accumulates a local
communication-barrier estimate per step, and remaps the temperatures so the
barrier is spread evenly over the next round's ``T' = round(2 * Lambda)``
steps.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .adapt import AdaptConfig, make_policy
from .kernels import KernelFamily
from .model import AnnealedPath, Schedule, TargetModel, make_schedule
from .smc import RunConfig, RunResult, StepRecord, smc_run

log = logging.getLogger(__name__)

T_MAX = 4096


@dataclass(frozen=True)
class BarrierKnots:
    """Pairs ``(lambda_t, Lambda(lambda_t))`` with ``Lambda(0) = 0``.

    Build these with :meth:`from_increments` so the cumulative coordinate is
    a running sum of nonnegative terms.
    """

    lambdas: np.ndarray
    barrier: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.lambdas, dtype=float)
        bar = np.asarray(self.barrier, dtype=float)
        if lam.ndim != 1 or lam.shape != bar.shape or lam.size < 2:
            raise ValueError("knots need matching 1-D coordinates of length >= 2")
        if lam[0] != 0.0 or lam[-1] != 1.0:
            raise ValueError("knot temperatures must run from 0 to 1")
        if bar[0] != 0.0:
            raise ValueError("cumulative barrier must start at 0")
        if np.any(np.diff(lam) < 0) or np.any(np.diff(bar) < 0):
            raise ValueError("knot coordinates must be nondecreasing")
        if not np.all(np.isfinite(bar)):
            raise ValueError("barrier values must be finite")
        object.__setattr__(self, "lambdas", lam)
        object.__setattr__(self, "barrier", bar)

    @classmethod
    def from_increments(cls, lambdas, increments) -> "BarrierKnots":
        inc = np.asarray(increments, dtype=float)
        if np.any(inc < 0) or not np.all(np.isfinite(inc)):
            raise ValueError("barrier increments must be finite and nonnegative")
        return cls(np.asarray(lambdas, dtype=float), np.concatenate([[0.0], np.cumsum(inc)]))

    @property
    def total(self) -> float:
        return float(self.barrier[-1])

    def to_list(self) -> list:
        return [[float(a), float(b)] for a, b in zip(self.lambdas, self.barrier)]


@dataclass(frozen=True)
class RoundPlan:
    r_max: int = 3
    T_1: int = 16
    multiplier: float = 2.0
    T_max: int = T_MAX

    def __post_init__(self):
        if self.r_max < 1:
            raise ValueError("r_max must be >= 1")
        if self.T_1 < 2:
            raise ValueError("T_1 must be >= 2")
        if not self.multiplier > 0:
            raise ValueError("multiplier must be positive")
        if self.T_max < 2:
            raise ValueError("T_max must be >= 2")


def barrier_increment(step) -> float:
    """``sqrt(max(L, 0))`` for a step's divergence estimate ``L``.

    ``step`` is either a number or a :class:`StepRecord`; records use their
    normalizer-corrected ``kl_estimate`` when present and fall back to
    ``objective_value``.
    """
    if isinstance(step, StepRecord):
        value = step.kl_estimate if step.kl_estimate is not None else step.objective_value
        if value is None:
            raise ValueError(f"step {step.t} carries no objective value")
    else:
        value = step
    value = float(value)
    if not math.isfinite(value):
        # +inf only arises from a degenerate solve; treat it as no information
        return 0.0
    return math.sqrt(max(value, 0.0))


def remap_schedule(knots: BarrierKnots, T_new: int) -> Schedule:
    """Place ``T_new`` steps at equal barrier spacing.

    ``lambda*_t = Lambda_inv(Lambda_total * t / T_new)`` with ``Lambda_inv``
    the piecewise-linear inverse of the knot set.  Where the barrier is flat
    the inverse is not unique; a level equal to a plateau value maps to the
    plateau's left-most temperature.
    """
    if T_new < 1:
        raise ValueError("T_new must be >= 1")
    if T_new == 1:
        return Schedule(np.array([0.0, 1.0]))
    total = knots.total
    if not total > 0:
        log.warning("barrier estimate is zero; falling back to a linear schedule")
        return make_schedule("linear", T_new)
    bar, lam = knots.barrier, knots.lambdas
    levels = total * np.arange(T_new + 1) / T_new
    # first knot at or above each level; a level sitting exactly on a
    # plateau maps to its left-most temperature, any other level lies on a
    # rising segment (j - 1, j) where the inverse is unique
    j = np.searchsorted(bar, levels, side="left")
    j = np.clip(j, 1, bar.size - 1)
    lo, hi = bar[j - 1], bar[j]
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(hi > lo, (levels - lo) / (hi - lo), 1.0)
    out = lam[j - 1] + frac * (lam[j] - lam[j - 1])
    out[0], out[-1] = 0.0, 1.0
    return Schedule(out)


def knots_from_run(result: RunResult, schedule: Schedule,
                   estimator: Callable = barrier_increment) -> BarrierKnots:
    inc = [estimator(rec) for rec in result.records]
    return BarrierKnots.from_increments(schedule.lambdas, inc)


def next_length(total_barrier: float, plan: RoundPlan, T_current: int) -> int:
    """``round(multiplier * Lambda)`` clamped to ``[2, T_max]``; keeps ``T_current`` when ``Lambda`` is zero."""
    if not total_barrier > 0:
        return T_current
    T = int(round(plan.multiplier * total_barrier))
    clamped = min(max(T, 2), plan.T_max)
    if clamped != T:
        log.info("next schedule length %d clamped to %d", T, clamped)
    return clamped


@dataclass
class RoundRecord:
    round: int
    T: int
    lambdas: list
    barrier_knots: list
    log_z_hat: float

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class RoundsResult:
    final: RunResult
    history: list = field(default_factory=list)
    schedules: list = field(default_factory=list)

    def to_json(self, **kw) -> str:
        return json.dumps([r.to_dict() for r in self.history], **kw)


def _warm_config(cfg: AdaptConfig, result: RunResult) -> AdaptConfig:
    last = result.params[-1]
    kw = {"h_guess": float(last.h)}
    if getattr(last, "rho", None) is not None:
        kw["rho_guess"] = float(last.rho)
    return dataclasses.replace(cfg, **kw)


def run_rounds(
    target: TargetModel,
    plan: RoundPlan,
    family: KernelFamily,
    adapt_cfg: Optional[AdaptConfig] = None,
    run_cfg: Optional[RunConfig] = None,
    rng=None,
    warm_start: bool = True,
    estimator: Callable = barrier_increment,
) -> RoundsResult:
    """Alternate adaptive SMC runs with schedule remapping.

    Round 1 uses a linear schedule of length ``plan.T_1``.  After round ``r``
    the barrier knots set the next length and temperatures.  With
    ``warm_start`` the first step of round ``r + 1`` starts its step-size
    search from round ``r``'s final tuned parameters.
    """
    run_cfg = run_cfg or RunConfig()
    if rng is None:
        rng = np.random.default_rng(run_cfg.seed)
    cfg = adapt_cfg
    schedule = make_schedule("linear", plan.T_1)
    out = RoundsResult(final=None)
    for r in range(1, plan.r_max + 1):
        path = AnnealedPath(target, schedule)
        policy = make_policy(family.name, cfg)
        result = smc_run(path, family, policy, run_cfg, rng)
        knots = knots_from_run(result, schedule, estimator)
        out.history.append(RoundRecord(r, schedule.T, schedule.lambdas.tolist(), knots.to_list(),
                                       float(result.log_z_hat)))
        out.schedules.append(schedule)
        out.final = result
        log.info("round %d: T=%d log Z=%.4f barrier=%.4f", r, schedule.T, result.log_z_hat, knots.total)
        if r == plan.r_max:
            break
        T_next = next_length(knots.total, plan, schedule.T)
        schedule = remap_schedule(knots, T_next)
        if warm_start:
            cfg = _warm_config(policy.cfg, result)
    return out
