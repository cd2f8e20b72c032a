"""Autocorrelation-time estimation for scalar Markov chain output.

The primary estimator models the chain as an AR(p) process fitted with the
Yule-Walker equations, choosing p by AIC. The autocorrelation time of the
fitted process is::

    tau = (1 - rho' pi) / (1 - sum(pi))**2

where ``rho`` is the sample ACF at lags 1..p and ``pi`` the AR coefficients.
Confidence intervals come from simulating coefficient vectors from the
asymptotic Gaussian distribution of the Yule-Walker estimator; simulated
nonstationary vectors count as an infinite autocorrelation time.

An independent estimator, Geyer's initial convex sequence, is provided as a
cross-check.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from mcmc_gridbench.errors import (
    BadLag,
    Degenerate,
    NonstationaryInput,
    SingularToeplitz,
    ZeroVariance,
)

ROOT_TOL = 1e-8
UNIQUE_MIN = 10
# Direct lagged products are used up to this lag; FFT beyond it.
_DIRECT_LAG_LIMIT = 64


class Status(str, enum.Enum):
    OK = "ok"
    DEGENERATE = "degenerate"
    NONSTATIONARY = "nonstationary"


class Method(str, enum.Enum):
    AR = "AR"
    ICS = "ICS"


@dataclass(frozen=True)
class SeriesView:
    """One coordinate of a chain.

    ``known_mean`` of ``None`` means the mean is estimated by the sample mean.
    """

    values: np.ndarray
    known_mean: Optional[float] = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).ravel()
        if not np.all(np.isfinite(values)):
            raise ValueError("series contains non-finite values")
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.values.size

    def center(self) -> tuple[np.ndarray, float]:
        """Return deviations from the mean and the divisor-n variance."""
        m = self.values.mean() if self.known_mean is None else self.known_mean
        dev = self.values - m
        return dev, float(np.dot(dev, dev)) / self.n


@dataclass(frozen=True)
class ArFit:
    order: int
    coeffs: np.ndarray
    acf: np.ndarray
    cov: np.ndarray
    n: int
    innovation_ratio: float
    variance: float = 1.0
    aic: float = 0.0


@dataclass(frozen=True)
class ActEstimate:
    tau: float
    ci_low: float
    ci_high: float
    method: Method
    status: Status
    order: int = 0

    @property
    def ok(self) -> bool:
        return self.status is Status.OK

    @classmethod
    def degenerate(cls, method: Method = Method.AR) -> "ActEstimate":
        nan = float("nan")
        return cls(nan, nan, nan, method, Status.DEGENERATE, 0)

    @classmethod
    def nonstationary(cls, order: int = 0) -> "ActEstimate":
        inf = math.inf
        return cls(inf, inf, inf, Method.AR, Status.NONSTATIONARY, order)


@dataclass(frozen=True)
class ActOptions:
    """Settings for :func:`estimate_act`.

    ``p_max=None`` selects ``min(50, ceil(10 log10 n))``.
    """

    p_max: Optional[int] = None
    draws: int = 1000
    level: float = 0.95
    seed: int = 0
    unique_min: int = UNIQUE_MIN
    root_tol: float = ROOT_TOL


def default_p_max(n: int) -> int:
    return min(50, math.ceil(10 * math.log10(n)))


def _autocov_fft(dev: np.ndarray, max_lag: int) -> np.ndarray:
    n = dev.size
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(dev, size)
    return np.fft.irfft(f * np.conj(f), size)[1 : max_lag + 1]


def sample_acf(series: SeriesView, max_lag: int) -> np.ndarray:
    """Sample ACF at lags ``1..max_lag`` with divisor ``n`` throughout.

    Element ``k-1`` is ``sum_{i<n-k} (X_i - m)(X_{i+k} - m) / (n s^2)`` where
    ``m`` is the known or estimated mean and ``s^2`` the divisor-n variance.
    """
    n = series.n
    if not (1 <= max_lag <= n - 1):
        raise BadLag(f"max_lag must lie in [1, {n - 1}], got {max_lag}")
    dev, s2 = series.center()
    if s2 <= 0.0:
        raise ZeroVariance("series has zero variance")
    if max_lag <= _DIRECT_LAG_LIMIT:
        cov = np.array([np.dot(dev[: n - k], dev[k:]) for k in range(1, max_lag + 1)])
    else:
        cov = _autocov_fft(dev, max_lag)
    return cov / (n * s2)


def yule_walker(acf, n: int) -> ArFit:
    """Fit AR(p) coefficients from the sample ACF at lags 1..p.

    The asymptotic covariance of the coefficients is returned in correlation
    units, ``(1 - rho' pi) R^{-1} / n``.
    """
    acf = np.asarray(acf, dtype=float)
    p = acf.size
    if p < 1:
        raise ValueError("yule_walker needs at least one lag")
    R = scipy.linalg.toeplitz(np.concatenate(([1.0], acf[:-1])))
    eig = np.linalg.eigvalsh(R)
    if eig[0] <= 1e-12 * max(1.0, eig[-1]):
        raise SingularToeplitz(f"Toeplitz matrix of order {p} is singular")
    Rinv = np.linalg.inv(R)
    Rinv = 0.5 * (Rinv + Rinv.T)
    coeffs = Rinv @ acf
    ratio = 1.0 - float(np.dot(acf, coeffs))
    if ratio < -1e-10:
        raise SingularToeplitz(f"negative innovation variance at order {p}")
    ratio = max(ratio, 0.0)
    cov = ratio * Rinv / n
    return ArFit(p, coeffs, acf, cov, n, ratio)


def _white_noise_fit(n: int, s2: float) -> ArFit:
    return ArFit(0, np.zeros(0), np.zeros(0), np.zeros((0, 0)), n, 1.0, s2, n * math.log(s2))


def check_degenerate(series: SeriesView, unique_min: int = UNIQUE_MIN) -> None:
    """Raise :class:`Degenerate` for series that cannot support an AR fit."""
    if np.unique(series.values).size < unique_min:
        raise Degenerate(f"fewer than {unique_min} distinct values")
    _, s2 = series.center()
    if s2 <= 0.0:
        raise Degenerate("zero variance")


def select_order(series: SeriesView, p_max: Optional[int] = None, unique_min: int = UNIQUE_MIN) -> ArFit:
    """Yule-Walker fits for orders 0..p_max; return the one minimising AIC.

    ``AIC(p) = n log(s^2 (1 - rho' pi)) + 2p``.
    """
    n = series.n
    if n < 10:
        raise ValueError("select_order needs at least 10 observations")
    check_degenerate(series, unique_min)
    if p_max is None:
        p_max = default_p_max(n)
    p_max = min(int(p_max), n - 1)
    _, s2 = series.center()

    best = _white_noise_fit(n, s2)
    if p_max < 1:
        return best
    acf = sample_acf(series, p_max)
    for p in range(1, p_max + 1):
        try:
            fit = yule_walker(acf[:p], n)
        except SingularToeplitz:
            # every higher-order matrix contains this one
            break
        var = s2 * fit.innovation_ratio
        aic = n * math.log(var) + 2 * p if var > 0 else -math.inf
        if aic < best.aic:
            best = ArFit(p, fit.coeffs, fit.acf, fit.cov, n, fit.innovation_ratio, var, aic)
    return best


def act_point(fit: ArFit) -> float:
    if fit.order == 0:
        return 1.0
    num = 1.0 - float(np.dot(fit.acf, fit.coeffs))
    den = (1.0 - float(np.sum(fit.coeffs))) ** 2
    return num / den


def _companion(coeffs: np.ndarray) -> np.ndarray:
    p = coeffs.shape[-1]
    C = np.zeros(coeffs.shape[:-1] + (p, p))
    C[..., 0, :] = coeffs
    if p > 1:
        idx = np.arange(p - 1)
        C[..., idx + 1, idx] = 1.0
    return C


def characteristic_roots(coeffs) -> np.ndarray:
    """Complex roots of ``1 - pi_1 z - ... - pi_p z^p``.

    The AR companion matrix has eigenvalues equal to reciprocal roots; zero
    eigenvalues (trailing zero coefficients) have no finite root.
    """
    coeffs = np.trim_zeros(np.asarray(coeffs, dtype=float), "b")
    if coeffs.size == 0:
        return np.zeros(0, dtype=complex)
    lam = np.linalg.eigvals(_companion(coeffs))
    lam = lam[lam != 0]
    return 1.0 / lam


def is_stationary(coeffs, root_tol: float = ROOT_TOL) -> bool:
    """False iff some root of the characteristic polynomial has modulus <= 1 + root_tol."""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.size == 0 or not np.any(coeffs):
        return True
    if not np.all(np.isfinite(coeffs)):
        return False
    lam = np.linalg.eigvals(_companion(coeffs))
    return bool(np.max(np.abs(lam)) < 1.0 / (1.0 + root_tol))


def _stationary_batch(coeffs: np.ndarray, root_tol: float) -> np.ndarray:
    lam = np.linalg.eigvals(_companion(coeffs))
    return np.max(np.abs(lam), axis=-1) < 1.0 / (1.0 + root_tol)


def _acf_system(coeffs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Linear system ``A rho = b`` for lags 1..p, batched over leading axes."""
    p = coeffs.shape[-1]
    A = np.broadcast_to(np.eye(p), coeffs.shape[:-1] + (p, p)).copy()
    b = np.zeros(coeffs.shape)
    for k in range(1, p + 1):
        for j in range(1, p + 1):
            m = abs(k - j)
            if m == 0:
                b[..., k - 1] += coeffs[..., j - 1]
            else:
                A[..., k - 1, m - 1] -= coeffs[..., j - 1]
    return A, b


def ar_to_acf(coeffs, lags: int) -> np.ndarray:
    """Theoretical ACF at lags 1..lags of a stationary AR process."""
    coeffs = np.asarray(coeffs, dtype=float)
    p = coeffs.size
    if p == 0:
        return np.zeros(lags)
    if not is_stationary(coeffs):
        raise NonstationaryInput("AR coefficients define a nonstationary process")
    A, b = _acf_system(coeffs)
    rho = np.empty(max(lags, p) + 1)
    rho[0] = 1.0
    rho[1 : p + 1] = np.linalg.solve(A, b)
    for k in range(p + 1, lags + 1):
        rho[k] = np.dot(coeffs, rho[k - p : k][::-1])
    return rho[1 : lags + 1]


def _sqrt_psd(V: np.ndarray) -> np.ndarray:
    V = 0.5 * (V + V.T)
    w, Q = np.linalg.eigh(V)
    return (Q * np.sqrt(np.clip(w, 0.0, None))) @ Q.T


def act_ci(
    fit: ArFit,
    draws: int = 1000,
    level: float = 0.95,
    rng: Optional[np.random.Generator] = None,
    root_tol: float = ROOT_TOL,
) -> tuple[float, float]:
    """Simulation-based confidence interval for the autocorrelation time.

    Coefficient vectors are drawn from ``N(pi_hat, V)``; each stationary draw
    yields a theoretical ACF and hence a tau, nonstationary draws give
    ``inf``. The interval is the pair of empirical quantiles at
    ``(1 - level)/2`` and ``1 - (1 - level)/2``.
    """
    if fit.order == 0:
        return 1.0, 1.0
    if draws < 100:
        raise ValueError("draws must be at least 100")
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    if rng is None:
        rng = np.random.default_rng()

    S = _sqrt_psd(fit.cov)
    pis = fit.coeffs + rng.standard_normal((draws, fit.order)) @ S
    taus = np.full(draws, np.inf)
    ok = _stationary_batch(pis, root_tol)
    if np.any(ok):
        good = pis[ok]
        A, b = _acf_system(good)
        rho = np.linalg.solve(A, b[..., None])[..., 0]
        num = 1.0 - np.einsum("ij,ij->i", rho, good)
        taus[ok] = num / (1.0 - good.sum(axis=1)) ** 2
    alpha = 1.0 - level
    lo, hi = np.quantile(taus, [alpha / 2, 1.0 - alpha / 2], method="inverted_cdf")
    return float(lo), float(hi)


def estimate_act(
    series: SeriesView,
    opts: Optional[ActOptions] = None,
    rng: Optional[np.random.Generator] = None,
) -> ActEstimate:
    """AR-based autocorrelation time with a simulated confidence interval.

    Never raises for bad chains: degeneracy and nonstationarity are reported
    through ``status``.
    """
    opts = opts or ActOptions()
    if rng is None:
        rng = np.random.default_rng(opts.seed)
    try:
        fit = select_order(series, opts.p_max, opts.unique_min)
    except (Degenerate, ZeroVariance, ValueError):
        return ActEstimate.degenerate(Method.AR)
    if not is_stationary(fit.coeffs, opts.root_tol):
        return ActEstimate.nonstationary(fit.order)
    tau = act_point(fit)
    lo, hi = act_ci(fit, opts.draws, opts.level, rng, opts.root_tol)
    # the point estimate uses the sample ACF, the draws the theoretical one
    return ActEstimate(tau, min(lo, tau), max(hi, tau), Method.AR, Status.OK, fit.order)


def _pava_nondecreasing(y: np.ndarray) -> np.ndarray:
    """Unit-weight isotonic (nondecreasing) regression."""
    vals: list[float] = []
    counts: list[int] = []
    for v in y:
        vals.append(float(v))
        counts.append(1)
        while len(vals) > 1 and vals[-2] > vals[-1]:
            c = counts[-2] + counts[-1]
            v2 = (vals[-2] * counts[-2] + vals[-1] * counts[-1]) / c
            vals[-2:] = [v2]
            counts[-2:] = [c]
    return np.repeat(vals, counts)


def initial_convex_sequence(gamma: np.ndarray) -> np.ndarray:
    """Positive, nonincreasing, convex version of the paired-ACF sequence."""
    pos = np.flatnonzero(gamma <= 0)
    M = pos[0] if pos.size else gamma.size
    g = np.minimum.accumulate(gamma[: max(M, 1)])
    if g.size <= 2:
        return g
    slopes = _pava_nondecreasing(np.diff(g))
    return np.concatenate(([g[0]], g[0] + np.cumsum(slopes)))


def act_ics(series: SeriesView) -> ActEstimate:
    """Geyer's initial convex sequence estimate; the CI collapses to the point."""
    n = series.n
    if n < 4:
        raise ValueError("act_ics needs at least 4 observations")
    dev, s2 = series.center()
    if s2 <= 0.0:
        return ActEstimate.degenerate(Method.ICS)
    rho = np.concatenate(([1.0], _autocov_fft(dev, n - 1) / (n * s2)))
    pairs = rho.size // 2
    gamma = rho[0 : 2 * pairs : 2] + rho[1 : 2 * pairs : 2]
    tau = 2.0 * float(np.sum(initial_convex_sequence(gamma))) - 1.0
    return ActEstimate(tau, tau, tau, Method.ICS, Status.OK, 0)
