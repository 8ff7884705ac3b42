"""Targets, temperature schedules and the geometric annealing path.

All densities work on batches: ``x`` has shape ``(n, d)`` and log-densities
come back with shape ``(n,)``.  A single point of shape ``(d,)`` is accepted
and returns a scalar.  Points outside the support, and any numerical
breakdown, give a log-density of ``-inf``; ``NaN`` never leaves this module.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import log_expit

from . import _accel

LOG_2PI = math.log(2.0 * math.pi)


def _as_batch(x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return x[None, :], True
    if x.ndim != 2:
        raise ValueError(f"expected (n, d) or (d,) array, got shape {x.shape}")
    return x, False


def _clean_logpdf(lp):
    lp = np.asarray(lp, dtype=float)
    return np.where(np.isnan(lp) | (lp == np.inf), -np.inf, lp)


@dataclass(frozen=True)
class TargetModel:
    """Unnormalized log-density with analytic gradient.

    Parameters
    ----------
    dim : int
    log_gamma : callable
        ``(n, d) -> (n,)`` unnormalized log-density.
    grad_log_gamma : callable
        ``(n, d) -> (n, d)`` gradient of ``log_gamma``.
    known_log_z : float, optional
        Log normalizing constant, when known in closed form.
    """

    dim: int
    log_gamma: Callable
    grad_log_gamma: Callable
    known_log_z: Optional[float] = None
    name: str = "target"

    def logpdf(self, x):
        xb, single = _as_batch(x)
        with np.errstate(all="ignore"):
            lp = _clean_logpdf(self.log_gamma(xb))
        return lp[0] if single else lp

    def grad(self, x):
        xb, single = _as_batch(x)
        with np.errstate(all="ignore"):
            g = np.asarray(self.grad_log_gamma(xb), dtype=float)
        return g[0] if single else g


def std_normal_logpdf(x):
    xb, single = _as_batch(x)
    lp = _accel.std_normal_logpdf(np.ascontiguousarray(xb))
    return lp[0] if single else lp


def shifted_gaussian(dim: int, mu: float) -> TargetModel:
    """Normalized ``N(mu * 1_d, I_d)``; ``log Z = 0``."""
    shift = np.full(dim, float(mu))

    def log_gamma(x):
        return _accel.std_normal_logpdf(np.ascontiguousarray(x - shift))

    def grad(x):
        return shift - x

    return TargetModel(dim, log_gamma, grad, known_log_z=0.0, name=f"gaussian(d={dim},mu={mu:g})")


def standard_normal(dim: int) -> TargetModel:
    return shifted_gaussian(dim, 0.0)


def funnel(dim: int = 10) -> TargetModel:
    """Neal's funnel: ``y ~ N(0, 3^2)``, ``x | y ~ N(0, e^y I_{d-1})``; normalized."""
    if dim < 2:
        raise ValueError("funnel needs dim >= 2")

    def log_gamma(x):
        return _accel.funnel_logpdf(np.ascontiguousarray(x))

    def grad(x):
        return _accel.funnel_grad(np.ascontiguousarray(x))

    return TargetModel(dim, log_gamma, grad, known_log_z=0.0, name=f"funnel(d={dim})")


def logistic_regression(features, labels, standardize: bool = True) -> TargetModel:
    """Bayesian logistic regression with a ``N(0, I)`` prior and an intercept column.

    ``log gamma(beta) = sum_i log Bernoulli(y_i; sigmoid(x_i . beta)) + log N(beta; 0, I)``
    so ``Z`` is the marginal likelihood.
    """
    X = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=float)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ValueError("features must be (n, p) and labels (n,)")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0/1")
    if standardize:
        sd = X.std(axis=0)
        sd[sd == 0] = 1.0
        X = (X - X.mean(axis=0)) / sd
    Xt = np.hstack([np.ones((X.shape[0], 1)), X])
    dim = Xt.shape[1]

    def log_gamma(beta):
        z = beta @ Xt.T
        ll = y * log_expit(z) + (1.0 - y) * log_expit(-z)
        return ll.sum(axis=1) - 0.5 * np.sum(beta * beta, axis=1) - 0.5 * dim * LOG_2PI

    def grad(beta):
        z = beta @ Xt.T
        resid = y - np.exp(log_expit(z))
        return resid @ Xt - beta

    return TargetModel(dim, log_gamma, grad, known_log_z=None, name=f"logistic(d={dim})")


def load_logistic_csv(path) -> TargetModel:
    """Load a CSV with a header row; last column is the 0/1 label."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        rows = [[float(v) for v in row] for row in reader if row]
    data = np.asarray(rows, dtype=float)
    return logistic_regression(data[:, :-1], data[:, -1], standardize=True)


def synthetic_logistic_data(n: int, p: int, seed: int = 0):
    """Draw a logistic-regression dataset with ``p`` features (model dim ``p + 1``)."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    beta = rng.standard_normal(p + 1)
    logits = beta[0] + X @ beta[1:]
    y = (rng.uniform(size=n) < 1.0 / (1.0 + np.exp(-logits))).astype(float)
    return X, y


@dataclass(frozen=True)
class Schedule:
    """Temperatures ``0 = lambda_0 < ... < lambda_T = 1``."""

    lambdas: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.lambdas, dtype=float)
        if lam.ndim != 1 or lam.size < 2:
            raise ValueError("schedule needs at least two temperatures")
        if lam[0] != 0.0 or lam[-1] != 1.0:
            raise ValueError("schedule must start at 0 and end at 1")
        if not np.all(np.diff(lam) > 0):
            raise ValueError("schedule must be strictly increasing")
        lam.setflags(write=False)
        object.__setattr__(self, "lambdas", lam)

    @property
    def T(self) -> int:
        return self.lambdas.size - 1

    def __len__(self):
        return self.lambdas.size

    def __getitem__(self, t):
        return float(self.lambdas[t])


def make_schedule(kind: str, T: int | None = None, values=None) -> Schedule:
    """Build a linear, quadratic or explicit schedule."""
    if kind == "explicit":
        if values is None:
            raise ValueError("explicit schedule needs values")
        return Schedule(np.asarray(values, dtype=float))
    if T is None or T < 1:
        raise ValueError("T must be >= 1")
    u = np.arange(T + 1) / T
    if kind == "linear":
        return Schedule(u)
    if kind == "quadratic":
        return Schedule(u * u)
    raise ValueError(f"unknown schedule kind {kind!r}")


@dataclass(frozen=True)
class AnnealedPath:
    """Geometric path ``gamma_t = q^(1 - lambda_t) gamma^lambda_t`` with ``q = N(0, I)``."""

    target: TargetModel
    schedule: Schedule
    dim: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "dim", self.target.dim)

    @property
    def T(self) -> int:
        return self.schedule.T

    def lam(self, t: int) -> float:
        return self.schedule[t]

    def logpdf(self, t: int, x):
        lam = self.schedule[t]
        if lam == 0.0:
            return std_normal_logpdf(x)
        if lam == 1.0:
            return self.target.logpdf(x)
        # written as an increment over q so that gamma == q gives exactly log q
        lq = std_normal_logpdf(x)
        with np.errstate(invalid="ignore"):
            return lq + lam * (self.target.logpdf(x) - lq)

    def grad(self, t: int, x):
        lam = self.schedule[t]
        x = np.asarray(x, dtype=float)
        if lam == 0.0:
            return -x
        if lam == 1.0:
            return self.target.grad(x)
        return (1.0 - lam) * (-x) + lam * self.target.grad(x)


def annealed_logpdf(path: AnnealedPath, t: int, x):
    return path.logpdf(t, x)


def annealed_grad(path: AnnealedPath, t: int, x):
    return path.grad(t, x)
