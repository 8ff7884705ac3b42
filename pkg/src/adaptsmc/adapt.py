"""Online tuning of kernel parameters by greedy incremental-KL minimization.

At SMC step ``t`` a policy subsamples ``B`` particles by weighted
resampling, freezes one batch of kernel noise, and minimizes

    L(h) = -mean_b log G_t(x_b, M_t(x_b; eps_b)) + tau (log h - log h_prev)^2

over ``log h`` with the 1-D optimizer stack.  KLMC alternates this with a
grid search over the refreshment rate; the MALA baselines swap the KL term
for acceptance-rate control or expected squared jump distance.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .kernels import AugmentedState, KernelFamily, NoiseBlock, mala_log_alpha, lmc_map
from .model import AnnealedPath
from .optim1d import MemoizedObjective, SearchParams, find_feasible, minimize
from .smc import logsumexp, resample

log = logging.getLogger(__name__)

TARGET_ACCEPTANCE = 0.574


@dataclass(frozen=True)
class AdaptConfig:
    tau: float = 0.1
    epsilon: float = 0.01
    c: float = 0.1
    r: float = 2.0
    delta: float = -1.0
    h_guess: float = math.exp(-10.0)
    B: int = 128
    Xi: tuple = (0.1, 0.9)
    rho_guess: float = 0.1
    max_sweeps: int = 20
    scheme: str = "systematic"

    def __post_init__(self):
        if self.tau < 0:
            raise ValueError("tau must be nonnegative")
        if not self.h_guess > 0:
            raise ValueError("h_guess must be positive")
        if self.B < 1:
            raise ValueError("B must be positive")
        if not self.Xi or not all(0.0 < x < 1.0 for x in self.Xi):
            raise ValueError("Xi must be a nonempty grid inside (0, 1)")
        if not 0.0 < self.rho_guess < 1.0:
            raise ValueError("rho_guess must lie in (0, 1)")
        SearchParams(self.c, self.r, self.epsilon, self.delta)

    @property
    def search(self) -> SearchParams:
        return SearchParams(self.c, self.r, self.epsilon, self.delta)

    @classmethod
    def lmc(cls, **kw) -> "AdaptConfig":
        return cls(**kw)

    @classmethod
    def klmc(cls, **kw) -> "AdaptConfig":
        base = dict(tau=5.0, epsilon=0.01, c=0.01, r=3.0, delta=-1.0, h_guess=math.exp(-7.5),
                    Xi=(0.1, 0.9), rho_guess=0.1)
        base.update(kw)
        return cls(**base)

    # MALA baselines share the LMC settings.
    mala = lmc


@dataclass(frozen=True)
class ObjectiveContext:
    """Everything an objective evaluation depends on; fixed during one solve."""

    family: KernelFamily
    path: AnnealedPath
    t: int
    state: AugmentedState
    noise: NoiseBlock
    h_prev: float
    prev_params: object = None
    tau: float = 0.0


def _reg(ctx: ObjectiveContext, h: float) -> float:
    # at t == 1, h_prev holds the user's guess h_0
    return ctx.tau * (math.log(h) - math.log(ctx.h_prev)) ** 2


def _log_potentials(ctx: ObjectiveContext, h: float, rho: Optional[float] = None):
    if not (h > 0 and math.isfinite(h)):
        return None
    params = ctx.family.make_params(h, rho)
    _, lg, _ = ctx.family.step(ctx.path, ctx.t, ctx.state, ctx.noise, params, ctx.prev_params)
    return lg


class IncrementalKL:
    """Empirical incremental-KL objective on frozen particles and noise.

    Calling the object returns the regularized value; ``kl_term`` returns the
    unregularized ``-mean log G`` and ``kl_estimate`` a normalizer-corrected
    estimate ``-mean log G + log mean G`` of the incremental KL divergence.
    """

    def __init__(self, ctx: ObjectiveContext):
        self.ctx = ctx

    def kl_term(self, h, rho=None) -> float:
        lg = _log_potentials(self.ctx, h, rho)
        if lg is None or not np.all(np.isfinite(lg)):
            return math.inf
        return float(-np.mean(lg))

    def kl_estimate(self, h, rho=None) -> float:
        lg = _log_potentials(self.ctx, h, rho)
        if lg is None or not np.all(np.isfinite(lg)):
            return math.inf
        return float(-np.mean(lg) + logsumexp(lg) - math.log(lg.size))

    def __call__(self, h, rho=None) -> float:
        v = self.kl_term(h, rho)
        if not math.isfinite(v):
            return math.inf
        return v + _reg(self.ctx, h)


class MALAObjective:
    """Acceptance-rate control (``"arc"``) or negative ESJD (``"esjd"``) on frozen noise."""

    def __init__(self, ctx: ObjectiveContext, mode: str, target: float = TARGET_ACCEPTANCE):
        if mode not in ("arc", "esjd"):
            raise ValueError(f"unknown MALA adaptation mode {mode!r}")
        self.ctx = ctx
        self.mode = mode
        self.target = target

    def alphas(self, h):
        ctx = self.ctx
        with np.errstate(all="ignore"):
            y = lmc_map(ctx.state.x, ctx.noise.eps, h, ctx.t, ctx.path)
        if not np.all(np.isfinite(y)):
            return None, y
        return np.exp(mala_log_alpha(ctx.state.x, y, h, ctx.t, ctx.path)), y

    def kl_term(self, h, rho=None) -> float:
        if not (h > 0 and math.isfinite(h)):
            return math.inf
        alpha, y = self.alphas(h)
        if alpha is None:
            return math.inf
        if self.mode == "arc":
            return float((np.mean(alpha) - self.target) ** 2)
        jump = np.sum((y - self.ctx.state.x) ** 2, axis=1)
        v = float(-np.mean(alpha * jump))
        return v if math.isfinite(v) else math.inf

    kl_estimate = None

    def __call__(self, h, rho=None) -> float:
        v = self.kl_term(h)
        if not math.isfinite(v):
            return math.inf
        return v + _reg(self.ctx, h)


def build_objective(ctx: ObjectiveContext, variant: str = "kl"):
    """Objective for one adaptation solve: ``"kl"``, ``"arc"`` or ``"esjd"``."""
    if variant == "kl":
        return IncrementalKL(ctx)
    return MALAObjective(ctx, variant)


@dataclass
class AdaptInfo:
    evals: int = 0
    sweeps: int = 0
    converged: bool = True


def adapt_stepsize(obj, t: int, cfg: AdaptConfig, h_guess: Optional[float] = None, info: Optional[AdaptInfo] = None) -> float:
    """Tune a step size on ``obj: h -> R u {inf}`` in log space.

    ``h_guess`` defaults to ``cfg.h_guess``; at ``t == 1`` the guess is first
    backed off until feasible.
    """
    if h_guess is None:
        h_guess = cfg.h_guess
    f = MemoizedObjective(lambda ell: obj(math.exp(ell)) if ell < 709.0 else math.inf)
    ell = math.log(h_guess)
    if t == 1:
        ell = find_feasible(f, ell, cfg.delta)
    elif not f(ell) < math.inf:
        # a warm start should be feasible; recover instead of failing
        log.warning("step %d: warm-start step size %.3g is degenerate; backing off", t, h_guess)
        ell = find_feasible(f, ell, cfg.delta)
    ell = minimize(f, ell, cfg.search)
    if info is not None:
        info.evals += f.calls
    return math.exp(ell)


def adapt_klmc(obj2, t: int, cfg: AdaptConfig, h_guess: Optional[float] = None,
               rho_guess: Optional[float] = None, info: Optional[AdaptInfo] = None) -> tuple[float, float]:
    """Coordinate descent over ``(log h, rho)``: golden-section in ``log h``, grid argmin over ``cfg.Xi`` in ``rho``.

    Ties in the grid argmin go to the first grid element.
    """
    if h_guess is None:
        h_guess = cfg.h_guess
    if rho_guess is None:
        rho_guess = cfg.rho_guess
    if info is None:
        info = AdaptInfo()
    per_rho: dict[float, MemoizedObjective] = {}

    def slice_at(rho):
        if rho not in per_rho:
            per_rho[rho] = MemoizedObjective(
                lambda ell, rho=rho: obj2(math.exp(ell), rho) if ell < 709.0 else math.inf
            )
        return per_rho[rho]

    ell, rho = math.log(h_guess), float(rho_guess)
    if t == 1 or not slice_at(rho)(ell) < math.inf:
        ell = find_feasible(slice_at(rho), ell, cfg.delta)

    ell_new, rho_new = ell, rho
    info.converged = False
    for sweep in range(1, cfg.max_sweeps + 1):
        info.sweeps = sweep
        f = slice_at(rho)
        if not f(ell) < math.inf:
            ell = find_feasible(f, ell, cfg.delta)
        ell_new = minimize(f, ell, cfg.search)
        vals = [slice_at(x)(ell_new) for x in cfg.Xi]
        rho_new = float(cfg.Xi[int(np.argmin(vals))])
        if max(abs(ell - ell_new), abs(rho - rho_new)) <= cfg.epsilon:
            info.converged = True
            break
        ell, rho = ell_new, rho_new
    else:
        log.warning("step %d: KLMC coordinate descent hit %d sweeps", t, cfg.max_sweeps)
    info.evals += sum(m.calls for m in per_rho.values())
    return math.exp(ell_new), rho_new


def adapt_mala(mode: str, ctx: ObjectiveContext, cfg: AdaptConfig, h_guess: Optional[float] = None,
               info: Optional[AdaptInfo] = None) -> float:
    """Acceptance-rate control (target 0.574) or ESJD maximization, solved like :func:`adapt_stepsize`."""
    obj = MALAObjective(ctx, mode)
    return adapt_stepsize(obj, ctx.t, cfg, h_guess, info)


# ---------------------------------------------------------------------------
# policies for smc_run
# ---------------------------------------------------------------------------


def draw_context(t, ps, path, family, rng, prev_params, cfg: AdaptConfig) -> ObjectiveContext:
    """Freeze noise, subsample ``B`` particles by weight, and package the solve inputs."""
    noise = family.draw_noise(rng, cfg.B, path.dim)
    idx = resample(ps.log_weights, cfg.B, cfg.scheme, rng)
    state = ps.state.take(idx)
    h_prev = cfg.h_guess if prev_params is None else prev_params.h
    return ObjectiveContext(family, path, t, state, noise, h_prev, prev_params, cfg.tau)


@dataclass
class StepsizeAdaptation:
    """Greedy step-size tuning for LMC families."""

    cfg: AdaptConfig = field(default_factory=AdaptConfig.lmc)

    def select(self, t, ps, path, family, rng, prev_params):
        ctx = draw_context(t, ps, path, family, rng, prev_params, self.cfg)
        obj = IncrementalKL(ctx)
        info = AdaptInfo()
        h = adapt_stepsize(obj, t, self.cfg, ctx.h_prev, info)
        return family.make_params(h), {
            "evals": info.evals,
            "objective_value": obj.kl_term(h),
            "kl_estimate": obj.kl_estimate(h),
        }


@dataclass
class KLMCAdaptation:
    """Joint step-size / refreshment-rate tuning for KLMC."""

    cfg: AdaptConfig = field(default_factory=AdaptConfig.klmc)

    def select(self, t, ps, path, family, rng, prev_params):
        ctx = draw_context(t, ps, path, family, rng, prev_params, self.cfg)
        obj = IncrementalKL(ctx)
        info = AdaptInfo()
        rho_guess = self.cfg.rho_guess if prev_params is None else prev_params.rho
        h, rho = adapt_klmc(obj, t, self.cfg, ctx.h_prev, rho_guess, info)
        return family.make_params(h, rho), {
            "evals": info.evals,
            "objective_value": obj.kl_term(h, rho),
            "kl_estimate": obj.kl_estimate(h, rho),
        }


@dataclass
class MALAAdaptation:
    """MALA step-size tuning by acceptance-rate control or ESJD."""

    mode: str = "arc"
    cfg: AdaptConfig = field(default_factory=AdaptConfig.mala)

    def select(self, t, ps, path, family, rng, prev_params):
        ctx = draw_context(t, ps, path, family, rng, prev_params, self.cfg)
        info = AdaptInfo()
        h = adapt_mala(self.mode, ctx, self.cfg, ctx.h_prev, info)
        obj = MALAObjective(ctx, self.mode)
        return family.make_params(h), {"evals": info.evals, "objective_value": obj.kl_term(h)}


def make_policy(family_name: str, cfg: Optional[AdaptConfig] = None, mala_mode: str = "arc"):
    if family_name == "klmc":
        return KLMCAdaptation(cfg or AdaptConfig.klmc())
    if family_name in ("mala", "mala_dbf"):
        return MALAAdaptation(mala_mode, cfg or AdaptConfig.mala())
    return StepsizeAdaptation(cfg or AdaptConfig.lmc())
