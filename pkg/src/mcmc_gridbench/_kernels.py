"""Compiled log-density and gradient kernels used by :mod:`distributions`.

Python-level call overhead dominates the samplers, so the multivariate
densities are compiled with numba; the closures in ``distributions`` bind
their constant arrays.
"""

import math

import numba
import numpy as np

_jit = numba.njit(cache=True, nogil=True)


@_jit
def gaussian_logpdf(x, mean, chol_inv, const):
    d = x.size
    dev = x - mean
    q = 0.0
    for i in range(d):
        z = 0.0
        for j in range(i + 1):
            z += chol_inv[i, j] * dev[j]
        q += z * z
    return const - 0.5 * q


@_jit
def gaussian_grad(x, mean, precision):
    return -(precision @ (x - mean))


@_jit
def diag_gaussian_logpdf(x, inv_var, const):
    q = 0.0
    for i in range(x.size):
        q += x[i] * x[i] * inv_var[i]
    return const - 0.5 * q


@_jit
def eight_schools_logpdf(x, y, prec):
    mu = x[8]
    lam = x[9]
    lik = 0.0
    ss = 0.0
    for j in range(8):
        r = y[j] - x[j]
        lik += r * r * prec[j]
        t = x[j] - mu
        ss += t * t
    if ss > 0.0:
        if lam < -700.0:
            return -np.inf
        prior = -0.5 * ss * math.exp(-lam)
    else:
        prior = 0.0
    return -0.5 * lik + prior - 3.5 * lam


@_jit
def eight_schools_grad(x, y, prec):
    mu = x[8]
    lam = x[9]
    inv_var = math.exp(-lam) if lam > -700.0 else np.inf
    g = np.empty(10)
    tsum = 0.0
    ss = 0.0
    for j in range(8):
        t = x[j] - mu
        g[j] = (y[j] - x[j]) * prec[j] - t * inv_var
        tsum += t
        ss += t * t
    g[8] = tsum * inv_var
    g[9] = 0.5 * ss * inv_var - 3.5
    return g


@_jit
def _mixture_exponents(x, modes):
    k, d = modes.shape
    e = np.empty(k)
    for i in range(k):
        s = 0.0
        for j in range(d):
            t = modes[i, j] - x[j]
            s += t * t
        e[i] = -0.5 * s
    return e


@_jit
def mixture_logpdf(x, modes, const):
    e = _mixture_exponents(x, modes)
    top = e.max()
    s = 0.0
    for i in range(e.size):
        s += math.exp(e[i] - top)
    return const + top + math.log(s)


@_jit
def mixture_grad(x, modes):
    e = _mixture_exponents(x, modes)
    w = np.exp(e - e.max())
    w /= w.sum()
    return w @ (modes - x)


# sampler bookkeeping; J holds orthonormal directions in its first k columns


@_jit
def project_out(v, J, k):
    """``v`` with its components along ``J[:, :k]`` removed."""
    out = v.copy()
    for c in range(k):
        dot = 0.0
        for i in range(v.size):
            dot += J[i, c] * v[i]
        for i in range(v.size):
            out[i] -= dot * J[i, c]
    return out


@_jit
def shrinking_rank_propose(x0, z, sigma, weighted, precision, J, k, out):
    """Add a crumb built from ``z[:d]`` and fill ``out`` with a proposal using ``z[d:]``.

    Returns the updated total crumb precision; ``weighted`` is updated in place.
    """
    d = x0.size
    crumb = project_out(sigma * z[:d], J, k)
    w = 1.0 / (sigma * sigma)
    precision += w
    sd = 1.0 / math.sqrt(precision)
    offset = np.empty(d)
    for i in range(d):
        weighted[i] += w * crumb[i]
        offset[i] = weighted[i] / precision + sd * z[d + i]
    offset = project_out(offset, J, k)
    for i in range(d):
        out[i] = x0[i] + offset[i]
    return precision


@_jit
def shrinking_rank_direction(g, J, k, cos_min):
    """Append the projected gradient as column ``k`` of ``J`` when the angle test passes."""
    g_max = 0.0
    for i in range(g.size):
        a = abs(g[i])
        if not a <= g_max:
            g_max = a
    if not (0.0 < g_max < math.inf):
        return False
    gs = g / g_max
    gp = project_out(gs, J, k)
    n_proj = math.sqrt(np.dot(gp, gp))
    n_full = math.sqrt(np.dot(gs, gs))
    if n_proj > 0.0 and n_proj > cos_min * n_full:
        for i in range(g.size):
            J[i, k] = gp[i] / n_proj
        return True
    return False


@_jit
def welford_update(x, mean, scatter, count):
    """Add ``x`` as observation number ``count`` to a running mean and scatter matrix."""
    d = x.size
    delta = x - mean
    for i in range(d):
        mean[i] += delta[i] / count
    for i in range(d):
        for j in range(d):
            scatter[i, j] += delta[i] * (x[j] - mean[j])


@_jit
def correlated_step(x, factor, z, coef):
    """``x + coef * factor @ z``."""
    d = x.size
    out = np.empty(d)
    for i in range(d):
        s = 0.0
        for j in range(d):
            s += factor[i, j] * z[j]
        out[i] = x[i] + coef * s
    return out
