"""Langevin forward kernels, backward-kernel potentials and kernel families.

Low-level functions act on particle batches ``x`` of shape ``(n, d)``.  The
kernel-family classes at the bottom bundle a forward kernel with its
potential so the SMC loop and the adaptation objective share one code path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _accel
from .model import AnnealedPath, std_normal_logpdf

POTENTIAL_VARIANTS = ("lmc_first", "lmc_tc_fwd", "lmc_fwd", "lmc_dbf", "mala_dbf", "klmc")


@dataclass(frozen=True)
class LmcParams:
    h: float

    def __post_init__(self):
        if not (self.h > 0 and math.isfinite(self.h)):
            raise ValueError(f"step size must be positive and finite, got {self.h}")


@dataclass(frozen=True)
class KlmcParams:
    h: float
    rho: float

    def __post_init__(self):
        if not (self.h > 0 and math.isfinite(self.h)):
            raise ValueError(f"step size must be positive and finite, got {self.h}")
        if not 0.0 < self.rho < 1.0:
            raise ValueError(f"refreshment rate must lie in (0, 1), got {self.rho}")


@dataclass(frozen=True)
class AugmentedState:
    """Position and (for kinetic kernels) momentum, both ``(n, d)``."""

    x: np.ndarray
    v: Optional[np.ndarray] = None

    @property
    def degenerate(self) -> np.ndarray:
        bad = ~np.all(np.isfinite(self.x), axis=1)
        if self.v is not None:
            bad |= ~np.all(np.isfinite(self.v), axis=1)
        return bad

    def take(self, idx) -> "AugmentedState":
        return AugmentedState(self.x[idx], None if self.v is None else self.v[idx])


@dataclass(frozen=True)
class NoiseBlock:
    """Frozen standard-normal draws (and MH uniforms) for one batch of particles."""

    eps: np.ndarray
    u: Optional[np.ndarray] = None

    def __post_init__(self):
        self.eps.setflags(write=False)
        if self.u is not None:
            self.u.setflags(write=False)


def _batch(x):
    x = np.asarray(x, dtype=float)
    return (x[None, :], True) if x.ndim == 1 else (x, False)


# ---------------------------------------------------------------------------
# LMC
# ---------------------------------------------------------------------------


def lmc_mean(x, h, t, path: AnnealedPath):
    return x + h * path.grad(t, x)


def lmc_map(x, eps, h, t, path: AnnealedPath):
    """Euler-Maruyama step ``x + h grad log pi_t(x) + sqrt(2h) eps``."""
    with np.errstate(all="ignore"):
        return lmc_mean(x, h, t, path) + math.sqrt(2.0 * h) * np.asarray(eps, dtype=float)


def lmc_logpdf(x, xp, h, t, path: AnnealedPath):
    """``log N(xp; x + h grad log pi_t(x), 2h I)``, row-wise."""
    xb, single = _batch(x)
    xpb, _ = _batch(xp)
    with np.errstate(all="ignore"):
        mean = lmc_mean(xb, h, t, path)
        lp = _accel.gauss_transition_logpdf(
            np.ascontiguousarray(xpb), np.ascontiguousarray(mean), 2.0 * h
        )
    return lp[0] if single else lp


# ---------------------------------------------------------------------------
# KLMC: momentum refreshment + one leapfrog step
# ---------------------------------------------------------------------------


def refresh(v, eps_v, rho):
    """Partial refreshment ``sqrt(1 - rho^2) v + rho eps``."""
    return math.sqrt(1.0 - rho * rho) * v + rho * eps_v


def leapfrog(x, v, h, t, path: AnnealedPath):
    """Kick-drift-kick step on the Hamiltonian ``-log pi_t(x) + |v|^2 / 2``."""
    with np.errstate(all="ignore"):
        va = v + 0.5 * h * path.grad(t, x)
        xn = x + h * va
        vn = va + 0.5 * h * path.grad(t, xn)
    return xn, vn


def klmc_step(z: AugmentedState, eps_v, params: KlmcParams, t, path: AnnealedPath):
    """Refresh then leapfrog; returns ``(new_state, v_half)``.

    Sometimes called OBABO, but only one refreshment is applied per step
    (O followed by a full kick-drift-kick), and the weight formulas assume
    exactly this composition.
    """
    v_half = refresh(z.v, eps_v, params.rho)
    xn, vn = leapfrog(z.x, v_half, params.h, t, path)
    return AugmentedState(xn, vn), v_half


# ---------------------------------------------------------------------------
# MALA
# ---------------------------------------------------------------------------


def mala_log_alpha(x, y, h, t, path: AnnealedPath):
    """Log MH acceptance probability of the Langevin proposal ``x -> y``."""
    xb, single = _batch(x)
    yb, _ = _batch(y)
    with np.errstate(all="ignore"):
        la = (
            path.logpdf(t, yb)
            + lmc_logpdf(yb, xb, h, t, path)
            - path.logpdf(t, xb)
            - lmc_logpdf(xb, yb, h, t, path)
        )
        la = np.minimum(la, 0.0)
    ok = np.all(np.isfinite(yb), axis=1) & ~np.isnan(la)
    la = np.where(ok, la, -np.inf)
    return la[0] if single else la


def mala_step(x, eps, u, h, t, path: AnnealedPath):
    """One MALA move; returns ``(x_new, accepted, alpha)``."""
    xb, single = _batch(x)
    y = lmc_map(xb, _batch(eps)[0], h, t, path)
    alpha = np.exp(mala_log_alpha(xb, y, h, t, path))
    accepted = np.asarray(u, dtype=float).reshape(-1) < alpha
    xn = np.where(accepted[:, None], y, xb)
    if single:
        return xn[0], bool(accepted[0]), float(alpha[0])
    return xn, accepted, alpha


# ---------------------------------------------------------------------------
# potentials (log domain)
# ---------------------------------------------------------------------------


def sanitize_log_potential(lg):
    """Map ``NaN``/``+inf`` to ``-inf``; return the cleaned array and the count of ``-inf`` entries."""
    lg = np.asarray(lg, dtype=float)
    lg = np.where(np.isnan(lg) | (lg == np.inf), -np.inf, lg)
    return lg, int(np.count_nonzero(lg == -np.inf))


def potential_lmc_first(path, x0, x1, h1):
    return path.logpdf(1, x1) - lmc_logpdf(x0, x1, h1, 1, path)


def potential_lmc_tc_fwd(path, t, x_prev, x, h, h_prev, first_backward="reference"):
    """Time-correct forward potential.

    At ``t == 1`` there is no previous step.  ``first_backward="reference"``
    uses the reference density as backward kernel, giving
    :func:`potential_lmc_first`.  Its objective grows without bound as
    ``h -> 0``, which drives the first-step search towards large steps, but
    its weights have infinite variance for small fixed ``h``.
    ``first_backward="tc"`` instead uses an LMC kernel targeting the
    reference with step ``h_prev`` (``h`` if None), which keeps the variance
    finite for any ``h``.
    """
    if t == 1:
        if first_backward == "reference":
            return potential_lmc_first(path, x_prev, x, h)
        if h_prev is None:
            h_prev = h
    return (
        path.logpdf(t, x)
        + lmc_logpdf(x, x_prev, h_prev, t - 1, path)
        - path.logpdf(t - 1, x_prev)
        - lmc_logpdf(x_prev, x, h, t, path)
    )


def potential_lmc_fwd(path, t, x_prev, x, h):
    return (
        path.logpdf(t, x)
        + lmc_logpdf(x, x_prev, h, t, path)
        - path.logpdf(t - 1, x_prev)
        - lmc_logpdf(x_prev, x, h, t, path)
    )


def potential_dbf(path, t, x_prev):
    return path.logpdf(t, x_prev) - path.logpdf(t - 1, x_prev)


def potential_klmc(path, t, x_prev, v_prev, x, v, v_half, rho):
    a = math.sqrt(1.0 - rho * rho)
    vp, single = _batch(v_prev)
    vh, _ = _batch(v_half)
    # Gaussian normalizers of the two refreshment densities cancel.
    back = -0.5 * np.sum((vp - a * vh) ** 2, axis=1) / (rho * rho)
    fwd = -0.5 * np.sum((vh - a * vp) ** 2, axis=1) / (rho * rho)
    refresh_term = back - fwd
    if single:
        refresh_term = refresh_term[0]
    return (
        path.logpdf(t, x)
        - path.logpdf(t - 1, x_prev)
        + std_normal_logpdf(v)
        - std_normal_logpdf(v_prev)
        + refresh_term
    )


def log_potential(variant: str, **kw):
    """Dispatch to the potential named by ``variant`` (see ``POTENTIAL_VARIANTS``)."""
    with np.errstate(all="ignore"):
        if variant == "lmc_first":
            out = potential_lmc_first(kw["path"], kw["x_prev"], kw["x"], kw["h"])
        elif variant == "lmc_tc_fwd":
            out = potential_lmc_tc_fwd(
                kw["path"], kw["t"], kw["x_prev"], kw["x"], kw["h"], kw.get("h_prev"),
                kw.get("first_backward", "reference"),
            )
        elif variant == "lmc_fwd":
            out = potential_lmc_fwd(kw["path"], kw["t"], kw["x_prev"], kw["x"], kw["h"])
        elif variant in ("lmc_dbf", "mala_dbf"):
            out = potential_dbf(kw["path"], kw["t"], kw["x_prev"])
        elif variant == "klmc":
            out = potential_klmc(
                kw["path"], kw["t"], kw["x_prev"], kw["v_prev"], kw["x"], kw["v"], kw["v_half"], kw["rho"]
            )
        else:
            raise ValueError(f"unknown potential variant {variant!r}")
    if np.ndim(out) == 0:
        v = float(out)
        return -math.inf if (math.isnan(v) or v == math.inf) else v
    return sanitize_log_potential(out)[0]


# ---------------------------------------------------------------------------
# kernel families
# ---------------------------------------------------------------------------


class KernelFamily:
    """Forward kernel plus potential, parameterized per SMC step.

    Subclasses implement ``draw_noise``, ``move`` and ``log_potential``.
    ``move`` must be a deterministic function of its inputs so that frozen
    noise gives a deterministic adaptation objective.
    """

    name = "kernel"
    kinetic = False

    def init_state(self, rng, n, d) -> AugmentedState:
        x = rng.standard_normal((n, d))
        v = rng.standard_normal((n, d)) if self.kinetic else None
        return AugmentedState(x, v)

    def draw_noise(self, rng, n, d) -> NoiseBlock:
        return NoiseBlock(rng.standard_normal((n, d)))

    def make_params(self, h, rho=None):
        return LmcParams(h)

    def move(self, path, t, state, noise, params):
        raise NotImplementedError

    def log_potential(self, path, t, state, new_state, aux, params, prev_params):
        raise NotImplementedError

    def step(self, path, t, state, noise, params, prev_params):
        """Move the batch and return ``(new_state, log_G, aux)`` with a sanitized ``log_G``."""
        new_state, aux = self.move(path, t, state, noise, params)
        with np.errstate(all="ignore"):
            lg = self.log_potential(path, t, state, new_state, aux, params, prev_params)
        lg, _ = sanitize_log_potential(lg)
        lg = np.where(new_state.degenerate, -np.inf, lg)
        return new_state, lg, aux


class LMCFamily(KernelFamily):
    """Unadjusted Langevin kernel with a selectable backward kernel.

    ``backward`` is one of ``"tc_fwd"`` (time-correct forward), ``"fwd"``
    (forward) or ``"dbf"`` (detailed-balance formula).
    """

    def __init__(self, backward: str = "tc_fwd", first_backward: str = "reference"):
        if backward not in ("tc_fwd", "fwd", "dbf"):
            raise ValueError(f"unknown backward kernel {backward!r}")
        if first_backward not in ("tc", "reference"):
            raise ValueError(f"unknown first-step backward kernel {first_backward!r}")
        self.backward = backward
        self.first_backward = first_backward
        self.name = f"lmc_{backward}" + ("_t1" if first_backward == "tc" else "")

    def move(self, path, t, state, noise, params):
        return AugmentedState(lmc_map(state.x, noise.eps, params.h, t, path)), None

    def log_potential(self, path, t, state, new_state, aux, params, prev_params):
        if self.backward == "tc_fwd":
            h_prev = None if prev_params is None else prev_params.h
            return potential_lmc_tc_fwd(path, t, state.x, new_state.x, params.h, h_prev, self.first_backward)
        if self.backward == "fwd":
            return potential_lmc_fwd(path, t, state.x, new_state.x, params.h)
        return potential_dbf(path, t, state.x)


class MALAFamily(KernelFamily):
    """MH-adjusted Langevin kernel with the detailed-balance-formula potential."""

    name = "mala_dbf"

    def draw_noise(self, rng, n, d) -> NoiseBlock:
        eps = rng.standard_normal((n, d))
        u = rng.uniform(size=n)
        return NoiseBlock(eps, u)

    def move(self, path, t, state, noise, params):
        xn, accepted, alpha = mala_step(state.x, noise.eps, noise.u, params.h, t, path)
        return AugmentedState(xn), {"accepted": accepted, "alpha": alpha}

    def log_potential(self, path, t, state, new_state, aux, params, prev_params):
        return potential_dbf(path, t, state.x)


class KLMCFamily(KernelFamily):
    """Kinetic Langevin: partial momentum refreshment followed by one leapfrog step."""

    name = "klmc"
    kinetic = True

    def make_params(self, h, rho=None):
        return KlmcParams(h, rho)

    def move(self, path, t, state, noise, params):
        new_state, v_half = klmc_step(state, noise.eps, params, t, path)
        return new_state, v_half

    def log_potential(self, path, t, state, new_state, aux, params, prev_params):
        return potential_klmc(path, t, state.x, state.v, new_state.x, new_state.v, aux, params.rho)


def make_family(name: str) -> KernelFamily:
    """``lmc_tc_fwd``/``lmc_fwd``/``lmc_dbf``/``mala``/``klmc`` -> family instance."""
    if name in ("lmc", "lmc_tc_fwd"):
        return LMCFamily("tc_fwd")
    if name == "lmc_tc_fwd_t1":
        return LMCFamily("tc_fwd", first_backward="tc")
    if name == "lmc_fwd":
        return LMCFamily("fwd")
    if name == "lmc_dbf":
        return LMCFamily("dbf")
    if name in ("mala", "mala_dbf"):
        return MALAFamily()
    if name == "klmc":
        return KLMCFamily()
    raise ValueError(f"unknown kernel family {name!r}")
