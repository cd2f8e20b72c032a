"""Test distributions: unnormalised log-densities on R^d.

Every ``log_density`` takes a float array of shape ``(dim,)`` and returns a
Python float, ``-inf`` outside the support. Gradients, where provided, are
exact.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable, Optional

import numpy as np

from mcmc_gridbench import _kernels as K
from mcmc_gridbench.errors import ConfigError

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class TargetDistribution:
    name: str
    dim: int
    log_density: Callable[[np.ndarray], float]
    gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None
    known_mean: Optional[np.ndarray] = None
    default_initial_point: Optional[np.ndarray] = None
    label: str = ""
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be at least 1")
        if self.default_initial_point is None:
            if self.known_mean is None:
                raise ValueError("need a known mean or an explicit initial point")
            object.__setattr__(self, "default_initial_point", np.array(self.known_mean, dtype=float))
        if not self.label:
            object.__setattr__(self, "label", self.name)

    @property
    def has_gradient(self) -> bool:
        return self.gradient is not None


def gamma21() -> TargetDistribution:
    """Gamma(2, 1), unnormalised: ``log x - x`` on ``x > 0``."""

    def log_density(x):
        v = x[0]
        if v > 0.0:
            return math.log(v) - v
        return -math.inf

    def gradient(x):
        v = x[0]
        if v > 0.0:
            return np.array([1.0 / v - 1.0])
        return np.array([math.nan])

    return TargetDistribution(
        name="gamma21",
        dim=1,
        log_density=log_density,
        gradient=gradient,
        known_mean=np.array([2.0]),
        label="Gamma(2,1)",
    )


def _gaussian(name, label, mean, cov) -> TargetDistribution:
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    d = mean.size
    chol = np.linalg.cholesky(cov)
    chol_inv = np.linalg.inv(chol)
    precision = chol_inv.T @ chol_inv
    logdet = 2.0 * float(np.sum(np.log(np.diag(chol))))
    const = -0.5 * d * LOG_2PI - 0.5 * logdet

    def log_density(x):
        return K.gaussian_logpdf(x, mean, chol_inv, const)

    def gradient(x):
        return K.gaussian_grad(x, mean, precision)

    return TargetDistribution(
        name=name,
        dim=d,
        log_density=log_density,
        gradient=gradient,
        known_mean=mean.copy(),
        label=label,
    )


def equicorrelation(d: int, rho: float) -> np.ndarray:
    return (1.0 - rho) * np.eye(d) + rho * np.ones((d, d))


def gaussian4_equicorrelated(rho: float = 0.999) -> TargetDistribution:
    """Four-dimensional Gaussian at (1, 2, 3, 4) with all correlations ``rho``."""
    return _gaussian("gaussian4", f"N4(rho={rho:g})", [1.0, 2.0, 3.0, 4.0], equicorrelation(4, rho))


def load_eight_schools() -> tuple[np.ndarray, np.ndarray]:
    text = resources.files("mcmc_gridbench").joinpath("data/eight_schools.csv").read_text()
    rows = list(csv.DictReader(io.StringIO(text)))
    if [k for k in rows[0]] != ["school", "y", "sigma"] or len(rows) != 8:
        raise ValueError("eight_schools.csv must have header school,y,sigma and 8 rows")
    y = np.array([float(r["y"]) for r in rows])
    sigma = np.array([float(r["sigma"]) for r in rows])
    return y, sigma


def eight_schools() -> TargetDistribution:
    """Hierarchical eight-schools posterior over ``(theta_1..theta_8, mu, lam)``.

    ``lam`` is the log of the group-level variance. Priors are flat on ``mu``
    and on the group standard deviation ``exp(lam / 2)``, which contributes a
    Jacobian term ``lam / 2``.
    """
    y, sigma = load_eight_schools()
    prec = np.ascontiguousarray(1.0 / sigma**2)

    def log_density(x):
        return K.eight_schools_logpdf(x, y, prec)

    def gradient(x):
        return K.eight_schools_grad(x, y, prec)

    start = np.concatenate((y, [y.mean(), math.log(np.var(y, ddof=1))]))
    return TargetDistribution(
        name="eight_schools",
        dim=10,
        log_density=log_density,
        gradient=gradient,
        known_mean=None,
        default_initial_point=start,
        label="Eight Schools",
    )


def mixture_modes(mode_seed: int, n_modes: int = 10, dim: int = 10, edge: float = 10.0) -> np.ndarray:
    return np.random.default_rng(mode_seed).uniform(0.0, edge, size=(n_modes, dim))


def gaussian_mixture(modes: np.ndarray, name: str = "mixture", label: str = "") -> TargetDistribution:
    """Equal-weight mixture of unit-variance spherical Gaussians at ``modes``."""
    modes = np.array(modes, dtype=float)
    k, d = modes.shape
    const = -math.log(k) - 0.5 * d * LOG_2PI

    def log_density(x):
        return K.mixture_logpdf(x, modes, const)

    def gradient(x):
        return K.mixture_grad(x, modes)

    return TargetDistribution(
        name=name,
        dim=d,
        log_density=log_density,
        gradient=gradient,
        known_mean=modes.mean(axis=0),
        label=label or name,
    )


def mixture_ten(mode_seed: int = 1) -> TargetDistribution:
    """Ten unit-variance Gaussian modes drawn uniformly on [0, 10]^10."""
    dist = gaussian_mixture(mixture_modes(mode_seed), name="mixture_ten", label="Mixture Ten")
    object.__setattr__(dist, "params", {"mode_seed": mode_seed})
    return dist


def scaled_gaussian(d: int) -> TargetDistribution:
    """Independent Gaussian, variance 1000 in the first coordinate and 1 elsewhere."""
    if d < 2:
        raise ValueError("scaled_gaussian needs d >= 2")
    inv_var = np.ones(d)
    inv_var[0] = 1e-3
    const = -0.5 * d * LOG_2PI - 0.5 * math.log(1000.0)

    def log_density(x):
        return K.diag_gaussian_logpdf(x, inv_var, const)

    def gradient(x):
        return -x * inv_var

    return TargetDistribution(
        name="scaled_gaussian",
        dim=d,
        log_density=log_density,
        gradient=gradient,
        known_mean=np.zeros(d),
        label=f"Scaled Gaussian d={d}",
        params={"dim": d},
    )


_REGISTRY: dict[str, Callable[..., TargetDistribution]] = {
    "gamma21": gamma21,
    "gaussian4": gaussian4_equicorrelated,
    "eight_schools": eight_schools,
    "mixture_ten": mixture_ten,
    "scaled_gaussian": scaled_gaussian,
}

# config parameter name -> factory keyword
_PARAMS = {
    "gamma21": {},
    "gaussian4": {"rho": "rho"},
    "eight_schools": {},
    "mixture_ten": {"mode_seed": "mode_seed"},
    "scaled_gaussian": {"dim": "d"},
}


def distribution_names() -> list[str]:
    return list(_REGISTRY)


def get_distribution(name: str, **params) -> TargetDistribution:
    """Build a registered distribution, e.g. ``get_distribution("scaled_gaussian", dim=8)``."""
    if name not in _REGISTRY:
        raise ConfigError(f"unknown distribution: {name}")
    allowed = _PARAMS[name]
    unknown = set(params) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown parameter for {name}: {sorted(unknown)[0]}")
    if name == "scaled_gaussian" and "dim" not in params:
        raise ConfigError("scaled_gaussian requires dim")
    kwargs = {allowed[k]: v for k, v in params.items()}
    try:
        dist = _REGISTRY[name](**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{name}: {exc}") from exc
    if params and not dist.params:
        object.__setattr__(dist, "params", dict(params))
    return dist
