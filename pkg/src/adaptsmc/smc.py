"""Particle system, resampling and the adaptive SMC sampler loop."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _accel
from .kernels import AugmentedState, KernelFamily
from .model import AnnealedPath


class ParticleCollapseError(RuntimeError):
    """All particle weights are zero."""


# ---------------------------------------------------------------------------
# weights
# ---------------------------------------------------------------------------


def _check_weights(logw):
    logw = np.ascontiguousarray(logw, dtype=float)
    if logw.ndim != 1 or logw.size == 0:
        raise ValueError("log-weights must be a non-empty vector")
    if np.any(np.isnan(logw)) or np.any(logw == np.inf):
        raise ValueError("log-weights must be finite or -inf")
    if not np.any(np.isfinite(logw)):
        raise ParticleCollapseError("all particle weights are zero")
    return logw


def logsumexp(logw) -> float:
    return float(_accel.logsumexp(np.ascontiguousarray(logw, dtype=float)))


def normalized_weights(logw) -> np.ndarray:
    logw = _check_weights(logw)
    w = np.exp(logw - logw.max())
    return w / w.sum()


def ess(logw) -> float:
    """Effective sample size ``(sum w)^2 / sum w^2`` from log-weights."""
    logw = _check_weights(logw)
    return float(math.exp(_accel.log_ess(logw)))


# ---------------------------------------------------------------------------
# resampling
# ---------------------------------------------------------------------------


def _systematic(w, m, rng):
    return _accel.systematic_indices(w, float(rng.uniform()), int(m))


def _multinomial(w, m, rng):
    return _accel.multinomial_indices(w, rng.uniform(size=int(m)))


def _stratified(w, m, rng):
    us = (np.arange(m) + rng.uniform(size=int(m))) / m
    return _accel.multinomial_indices(w, us)


RESAMPLERS: dict[str, Callable] = {
    "systematic": _systematic,
    "multinomial": _multinomial,
    "stratified": _stratified,
}


def resample(logw, m: int, scheme: str = "systematic", rng=None) -> np.ndarray:
    """Draw ``m`` ancestor indices in ``[0, N)`` proportionally to ``exp(logw)``."""
    if scheme not in RESAMPLERS:
        raise ValueError(f"unknown resampling scheme {scheme!r}")
    if rng is None:
        rng = np.random.default_rng()
    w = normalized_weights(logw)
    return np.asarray(RESAMPLERS[scheme](w, m, rng), dtype=np.int64)


# ---------------------------------------------------------------------------
# state and records
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    N: int = 1024
    resample_threshold: float = 0.5
    scheme: str = "systematic"
    seed: int = 0

    def __post_init__(self):
        if self.N < 2:
            raise ValueError("need at least two particles")
        if not 0.0 < self.resample_threshold <= 1.0:
            raise ValueError("resample_threshold must lie in (0, 1]")
        if self.scheme not in RESAMPLERS:
            raise ValueError(f"unknown resampling scheme {self.scheme!r}")


@dataclass
class StepRecord:
    t: int
    lam: float
    h: float
    rho: Optional[float] = None
    ess: float = float("nan")
    resampled: bool = False
    degenerate: int = 0
    acc_rate: Optional[float] = None
    evals: Optional[int] = None
    objective_value: Optional[float] = None
    kl_estimate: Optional[float] = None

    def to_dict(self) -> dict:
        d = {"t": self.t, "lambda": self.lam, "h": self.h}
        if self.rho is not None:
            d["rho"] = self.rho
        d.update(ess=self.ess, resampled=self.resampled, degenerate=self.degenerate)
        if self.acc_rate is not None:
            d["acc_rate"] = self.acc_rate
        if self.evals is not None:
            d["evals"] = self.evals
        if self.objective_value is not None:
            d["objective_value"] = self.objective_value
        return d


@dataclass
class ParticleSystem:
    positions: np.ndarray
    log_weights: np.ndarray
    momenta: Optional[np.ndarray] = None
    log_z_hat: float = 0.0
    step: int = 0
    diagnostics: list = field(default_factory=list)

    @property
    def N(self) -> int:
        return self.positions.shape[0]

    @property
    def state(self) -> AugmentedState:
        return AugmentedState(self.positions, self.momenta)

    @classmethod
    def initialize(cls, family: KernelFamily, n: int, d: int, rng) -> "ParticleSystem":
        s = family.init_state(rng, n, d)
        return cls(s.x, np.zeros(n), s.v)


@dataclass
class RunResult:
    log_z_hat: float
    records: list
    params: list
    final: Optional[ParticleSystem] = None

    @property
    def step_sizes(self) -> np.ndarray:
        return np.array([p.h for p in self.params])

    @property
    def total_evals(self) -> int:
        return int(sum(r.evals or 0 for r in self.records))

    def to_dict(self) -> dict:
        return {"log_z_hat": self.log_z_hat, "steps": [r.to_dict() for r in self.records]}

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


# ---------------------------------------------------------------------------
# one step and the full run
# ---------------------------------------------------------------------------


def smc_step(
    ps: ParticleSystem,
    path: AnnealedPath,
    family: KernelFamily,
    params,
    prev_params,
    rng,
    resample_threshold: float = 0.5,
    scheme: str = "systematic",
) -> tuple[ParticleSystem, StepRecord]:
    """Propagate, reweight and (if triggered or at the last step) resample."""
    t = ps.step + 1
    noise = family.draw_noise(rng, ps.N, path.dim)
    new_state, lg, aux = family.step(path, t, ps.state, noise, params, prev_params)
    n_bad = int(np.count_nonzero(lg == -np.inf))
    logw = ps.log_weights + lg
    if not np.any(np.isfinite(logw)):
        raise ParticleCollapseError(f"all particle weights vanished at step {t}")

    e = ess(logw)
    log_z = ps.log_z_hat
    positions, momenta = new_state.x, new_state.v
    resampled = False
    if e < resample_threshold * ps.N or t == path.T:
        log_z += logsumexp(logw) - math.log(ps.N)
        idx = resample(logw, ps.N, scheme, rng)
        positions = positions[idx]
        momenta = None if momenta is None else momenta[idx]
        logw = np.zeros(ps.N)
        resampled = True

    acc = None
    if isinstance(aux, dict) and "alpha" in aux:
        acc = float(np.mean(aux["accepted"]))
    rec = StepRecord(
        t=t,
        lam=path.lam(t),
        h=float(params.h),
        rho=getattr(params, "rho", None),
        ess=e,
        resampled=resampled,
        degenerate=n_bad,
        acc_rate=acc,
    )
    out = ParticleSystem(positions, logw, momenta, log_z, t, ps.diagnostics + [rec])
    return out, rec


class FixedParams:
    """Replay a given per-step parameter list (no adaptation)."""

    def __init__(self, params):
        self.params = list(params)

    def select(self, t, ps, path, family, rng, prev_params):
        return self.params[t - 1], {}


def constant_params(family: KernelFamily, T: int, h: float, rho: Optional[float] = None) -> FixedParams:
    p = family.make_params(h, rho)
    return FixedParams([p] * T)


def smc_run(path: AnnealedPath, family: KernelFamily, policy, config: RunConfig, rng=None) -> RunResult:
    """Run adaptive SMC over ``path``.

    ``policy.select(t, ps, path, family, rng, prev_params)`` supplies the
    kernel parameters for step ``t`` and a telemetry dict.  The returned
    parameter list can be replayed with :class:`FixedParams`.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    ps = ParticleSystem.initialize(family, config.N, path.dim, rng)
    params_hist = []
    records = []
    prev = None
    for t in range(1, path.T + 1):
        params, telemetry = policy.select(t, ps, path, family, rng, prev)
        ps, rec = smc_step(ps, path, family, params, prev, rng, config.resample_threshold, config.scheme)
        rec.evals = telemetry.get("evals")
        rec.objective_value = telemetry.get("objective_value")
        rec.kl_estimate = telemetry.get("kl_estimate")
        params_hist.append(params)
        records.append(rec)
        prev = params
    return RunResult(ps.log_z_hat, records, params_hist, ps)
