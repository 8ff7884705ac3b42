"""Hot numeric kernels with a numba path and a pure-numpy fallback.

Every kernel exists twice: ``<name>_py`` (numpy) and ``<name>_nb`` (numba
``@njit``).  The public name points at one of them, chosen once at import
time.  Set ``ADAPTSMC_DISABLE_NUMBA=1`` to force the numpy path (useful for
debugging or on platforms without numba).

The two paths agree to floating-point roundoff; tests compare them directly.
"""

from __future__ import annotations

import math
import os

import numpy as np

_LOG_2PI = math.log(2.0 * math.pi)

try:  # pragma: no cover - import guard
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("ADAPTSMC_DISABLE_NUMBA", "0") not in ("1", "true", "yes")


def _njit(fn):
    if not HAVE_NUMBA:
        return fn
    return numba.njit(cache=True, fastmath=False)(fn)


# ---------------------------------------------------------------------------
# log-sum-exp / ESS
# ---------------------------------------------------------------------------


def logsumexp_py(a):
    m = np.max(a)
    if not np.isfinite(m):
        return m
    return m + math.log(np.sum(np.exp(a - m)))


def _logsumexp_impl(a):
    m = -np.inf
    for i in range(a.shape[0]):
        if a[i] > m:
            m = a[i]
    if not np.isfinite(m):
        return m
    s = 0.0
    for i in range(a.shape[0]):
        s += math.exp(a[i] - m)
    return m + math.log(s)


logsumexp_nb = _njit(_logsumexp_impl)


def log_ess_py(logw):
    return 2.0 * logsumexp_py(logw) - logsumexp_py(2.0 * logw)


def _log_ess_impl(logw):
    m = -np.inf
    for i in range(logw.shape[0]):
        if logw[i] > m:
            m = logw[i]
    if not np.isfinite(m):
        return np.nan
    s1 = 0.0
    s2 = 0.0
    for i in range(logw.shape[0]):
        e = math.exp(logw[i] - m)
        s1 += e
        s2 += e * e
    return 2.0 * math.log(s1) - math.log(s2)


log_ess_nb = _njit(_log_ess_impl)


# ---------------------------------------------------------------------------
# resampling given pre-drawn uniforms
# ---------------------------------------------------------------------------


def systematic_indices_py(w, u, m):
    """Systematic resampling: one uniform ``u`` in [0, 1), ``m`` draws."""
    cw = np.cumsum(w)
    cw[-1] = 1.0
    pos = (u + np.arange(m)) / m
    idx = np.searchsorted(cw, pos, side="right")
    return np.minimum(idx, w.shape[0] - 1)


def _systematic_indices_impl(w, u, m):
    n = w.shape[0]
    out = np.empty(m, dtype=np.int64)
    j = 0
    acc = w[0]
    for i in range(m):
        p = (u + i) / m
        while p >= acc and j < n - 1:
            j += 1
            acc += w[j]
        out[i] = j
    return out


systematic_indices_nb = _njit(_systematic_indices_impl)


def multinomial_indices_py(w, us):
    """Inverse-CDF categorical draws for an array of uniforms ``us``."""
    cw = np.cumsum(w)
    cw[-1] = 1.0
    idx = np.searchsorted(cw, us, side="right")
    return np.minimum(idx, w.shape[0] - 1)


def _multinomial_indices_impl(w, us):
    n = w.shape[0]
    cw = np.empty(n)
    acc = 0.0
    for i in range(n):
        acc += w[i]
        cw[i] = acc
    cw[n - 1] = 1.0
    out = np.searchsorted(cw, us, side="right")
    for k in range(out.shape[0]):
        if out[k] > n - 1:
            out[k] = n - 1
    return out


multinomial_indices_nb = _njit(_multinomial_indices_impl)


# ---------------------------------------------------------------------------
# Gaussian transition densities (row-wise)
# ---------------------------------------------------------------------------


def gauss_transition_logpdf_py(xp, mean, var):
    """Row-wise log N(xp; mean, var * I)."""
    d = xp.shape[1]
    r = xp - mean
    return -0.5 * np.sum(r * r, axis=1) / var - 0.5 * d * (_LOG_2PI + math.log(var))


def _gauss_transition_logpdf_impl(xp, mean, var):
    n, d = xp.shape
    c = -0.5 * d * (math.log(2.0 * math.pi) + math.log(var))
    out = np.empty(n)
    for i in range(n):
        s = 0.0
        for k in range(d):
            r = xp[i, k] - mean[i, k]
            s += r * r
        out[i] = -0.5 * s / var + c
    return out


gauss_transition_logpdf_nb = _njit(_gauss_transition_logpdf_impl)


def std_normal_logpdf_py(v):
    d = v.shape[1]
    return -0.5 * np.sum(v * v, axis=1) - 0.5 * d * _LOG_2PI


def _std_normal_logpdf_impl(v):
    n, d = v.shape
    c = -0.5 * d * math.log(2.0 * math.pi)
    out = np.empty(n)
    for i in range(n):
        s = 0.0
        for k in range(d):
            s += v[i, k] * v[i, k]
        out[i] = -0.5 * s + c
    return out


std_normal_logpdf_nb = _njit(_std_normal_logpdf_impl)


# ---------------------------------------------------------------------------
# built-in target kernels
# ---------------------------------------------------------------------------


def funnel_logpdf_py(x):
    y = x[:, 0]
    z = x[:, 1:]
    k = z.shape[1]
    with np.errstate(over="ignore", invalid="ignore"):
        lp_y = -0.5 * y * y / 9.0 - math.log(3.0) - 0.5 * _LOG_2PI
        lp_z = -0.5 * np.exp(-y) * np.sum(z * z, axis=1) - 0.5 * k * y - 0.5 * k * _LOG_2PI
    return lp_y + lp_z


def _funnel_logpdf_impl(x):
    n, d = x.shape
    k = d - 1
    c = -math.log(3.0) - 0.5 * (k + 1) * math.log(2.0 * math.pi)
    out = np.empty(n)
    for i in range(n):
        y = x[i, 0]
        s = 0.0
        for j in range(1, d):
            s += x[i, j] * x[i, j]
        out[i] = -0.5 * y * y / 9.0 - 0.5 * math.exp(-y) * s - 0.5 * k * y + c
    return out


funnel_logpdf_nb = _njit(_funnel_logpdf_impl)


def funnel_grad_py(x):
    y = x[:, 0]
    z = x[:, 1:]
    k = z.shape[1]
    g = np.empty_like(x)
    with np.errstate(over="ignore", invalid="ignore"):
        ey = np.exp(-y)
        g[:, 0] = -y / 9.0 + 0.5 * ey * np.sum(z * z, axis=1) - 0.5 * k
        g[:, 1:] = -ey[:, None] * z
    return g


def _funnel_grad_impl(x):
    n, d = x.shape
    k = d - 1
    g = np.empty((n, d))
    for i in range(n):
        y = x[i, 0]
        ey = math.exp(-y)
        s = 0.0
        for j in range(1, d):
            s += x[i, j] * x[i, j]
            g[i, j] = -ey * x[i, j]
        g[i, 0] = -y / 9.0 + 0.5 * ey * s - 0.5 * k
    return g


funnel_grad_nb = _njit(_funnel_grad_impl)


_KERNELS = (
    "logsumexp",
    "log_ess",
    "systematic_indices",
    "multinomial_indices",
    "gauss_transition_logpdf",
    "std_normal_logpdf",
    "funnel_logpdf",
    "funnel_grad",
)

_suffix = "_nb" if USE_NUMBA else "_py"
for _name in _KERNELS:
    globals()[_name] = globals()[_name + _suffix]
del _name, _suffix


def backend() -> str:
    """Name of the active kernel backend: ``"numba"`` or ``"numpy"``."""
    return "numba" if USE_NUMBA else "numpy"
