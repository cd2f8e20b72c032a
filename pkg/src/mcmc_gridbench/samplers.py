"""MCMC transition kernels with exact evaluation counting.

Each kernel has the signature ``kernel(state, target, tuning, rng, adapt=None)``
and returns a :class:`TransitionResult`. The log-density at the current point
is always carried in ``ChainState.cached_logp``, so a Metropolis proposal
costs exactly one evaluation and a slice level costs none.

Kernels only draw randomness through ``rng.random()`` and
``rng.standard_normal(size)``, so tests can substitute a scripted stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np

from mcmc_gridbench import _kernels as K
from mcmc_gridbench.errors import ConfigError

_COS_60 = 0.5
AM_ADAPTED_SCALE = 2.38


@dataclass
class ChainState:
    x: np.ndarray
    cached_logp: float
    iteration: int = 0


@dataclass(frozen=True)
class TuningParams:
    scale: float
    beta: float = 0.05

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        if not 0.0 < self.beta < 1.0:
            raise ValueError(f"beta must lie in (0, 1), got {self.beta}")


class TransitionResult(NamedTuple):
    next: ChainState
    logp_evals: int
    grad_evals: int = 0


class AdaptState:
    """Running mean and scatter matrix of the states seen so far.

    ``running_scatter / (count - 1)`` is the sample covariance. Once
    ``frozen`` is set, updates are ignored.
    """

    def __init__(self, dim: int):
        self.count = 0
        self.running_mean = np.zeros(dim)
        self.running_scatter = np.zeros((dim, dim))
        self.frozen = False
        self._factor: Optional[np.ndarray] = None

    def update(self, x: np.ndarray) -> None:
        if self.frozen:
            return
        self.count += 1
        K.welford_update(np.asarray(x, dtype=float), self.running_mean, self.running_scatter, self.count)
        self._factor = None

    def freeze(self) -> None:
        self.frozen = True

    def covariance(self) -> np.ndarray:
        if self.count < 2:
            return np.zeros_like(self.running_scatter)
        S = self.running_scatter / (self.count - 1)
        return 0.5 * (S + S.T)

    def factor(self) -> np.ndarray:
        """Lower-triangular square root of the jittered adapted covariance."""
        if self._factor is None:
            self._factor = _jittered_factor(self.covariance())
        return self._factor


def _jittered_factor(S: np.ndarray) -> np.ndarray:
    d = S.shape[0]
    trace = float(np.trace(S))
    if not trace > 0.0:
        return np.zeros_like(S)
    jitter = 1e-10 * trace / d
    eye = np.eye(d)
    for _ in range(8):
        try:
            return np.linalg.cholesky(S + jitter * eye)
        except np.linalg.LinAlgError:
            jitter *= 10.0
    w, Q = np.linalg.eigh(S)
    return Q * np.sqrt(np.clip(w, 0.0, None))


def _log_uniform(rng) -> float:
    u = rng.random()
    while u == 0.0:
        u = rng.random()
    return math.log(u)


def _metropolis_accept(delta: float, rng) -> bool:
    if delta >= 0.0:
        return True
    if delta == -math.inf or delta != delta:
        return False
    return math.log(rng.random()) < delta


def univariate_metropolis_transition(state, target, tuning, rng, adapt=None) -> TransitionResult:
    """One sweep of single-coordinate Gaussian random-walk Metropolis updates."""
    x = np.array(state.x, dtype=float)
    lp = state.cached_logp
    logf = target.log_density
    steps = (tuning.scale * np.asarray(rng.standard_normal(x.size), dtype=float)).tolist()
    for i, step in enumerate(steps):
        old = x[i]
        x[i] = old + step
        lp_new = logf(x)
        if _metropolis_accept(lp_new - lp, rng):
            lp = lp_new
        else:
            x[i] = old
    return TransitionResult(ChainState(x, lp, state.iteration + 1), x.size, 0)


def adaptive_metropolis_transition(state, target, tuning, rng, adapt: AdaptState) -> TransitionResult:
    """Adaptive Metropolis with a fixed spherical mixture component.

    While ``adapt.count <= 2d`` every proposal is ``N(x, scale^2 I / d)``.
    Afterwards that component is used with probability ``beta`` and
    ``N(x, 2.38^2 Sigma / d)`` otherwise, ``Sigma`` being the adapted
    covariance.
    """
    if adapt is None:
        raise ValueError("adaptive Metropolis needs an AdaptState")
    x = state.x
    d = x.size
    if adapt.count <= 2 * d or rng.random() < tuning.beta:
        proposal = np.asarray(rng.standard_normal(d), dtype=float)
        proposal *= tuning.scale / math.sqrt(d)
        proposal += x
    else:
        z = np.asarray(rng.standard_normal(d), dtype=float)
        proposal = K.correlated_step(x, adapt.factor(), z, AM_ADAPTED_SCALE / math.sqrt(d))
    lp_new = target.log_density(proposal)
    if _metropolis_accept(lp_new - state.cached_logp, rng):
        nxt = ChainState(proposal, lp_new, state.iteration + 1)
    else:
        nxt = ChainState(x.copy(), state.cached_logp, state.iteration + 1)
    adapt.update(nxt.x)
    return TransitionResult(nxt, 1, 0)


def step_out_slice_transition(state, target, tuning, rng, adapt=None) -> TransitionResult:
    """Coordinate-wise slice sampling with unlimited stepping out and shrinkage."""
    x = np.array(state.x, dtype=float)
    lp = state.cached_logp
    logf = target.log_density
    w = tuning.scale
    evals = 0
    for i in range(x.size):
        x0 = x[i]
        level = lp + _log_uniform(rng)
        left = x0 - rng.random() * w
        right = left + w
        while True:
            x[i] = left
            evals += 1
            if logf(x) < level:
                break
            left -= w
        while True:
            x[i] = right
            evals += 1
            if logf(x) < level:
                break
            right += w
        while True:
            x1 = left + rng.random() * (right - left)
            x[i] = x1
            lp1 = logf(x)
            evals += 1
            if lp1 >= level:
                lp = lp1
                break
            if x1 < x0:
                left = x1
            else:
                right = x1
    return TransitionResult(ChainState(x, lp, state.iteration + 1), evals, 0)


def shrinking_rank_transition(
    state, target, tuning, rng, adapt=None, downscale: float = 0.95, min_dimension: int = 1
) -> TransitionResult:
    """Shrinking-rank slice sampling with Gaussian crumbs.

    Crumbs ``c_k ~ N(0, sigma_k^2 I)`` (offsets from the current point) are
    combined into a precision-weighted mean; proposals are drawn from the
    resulting Gaussian and projected onto the subspace orthogonal to the
    columns of ``J``. A rejected proposal whose projected gradient is within
    60 degrees of its full gradient adds that direction to ``J``; otherwise
    the next crumb standard deviation is multiplied by ``downscale``. At
    least ``min_dimension`` directions always remain.
    """
    if target.gradient is None:
        raise ConfigError("shrinking_rank requires a target with a gradient")
    x0 = np.asarray(state.x, dtype=float)
    d = x0.size
    logf = target.log_density
    grad = target.gradient
    level = state.cached_logp + _log_uniform(rng)
    # orthonormal directions removed from the proposal subspace, first k columns in use
    J = np.zeros((d, d))
    k = 0
    sigma = tuning.scale
    precision = 0.0
    weighted = np.zeros(d)
    evals = 0
    grad_evals = 0
    while True:
        # crumb noise in the first d draws, proposal noise in the last d
        z = np.asarray(rng.standard_normal(2 * d), dtype=float)
        proposal = np.empty(d)
        precision = K.shrinking_rank_propose(x0, z, sigma, weighted, precision, J, k, proposal)
        lp = logf(proposal)
        evals += 1
        if lp >= level:
            return TransitionResult(ChainState(proposal, lp, state.iteration + 1), evals, grad_evals)
        if k < d - min_dimension and math.isfinite(lp):
            g = np.asarray(grad(proposal), dtype=float)
            grad_evals += 1
            if K.shrinking_rank_direction(g, J, k, _COS_60):
                k += 1
                continue
        sigma *= downscale


@dataclass(frozen=True)
class SamplerSpec:
    name: str
    kernel: Callable[..., TransitionResult]
    label: str
    needs_gradient: bool = False
    adaptive: bool = False
    uses_beta: bool = False


SAMPLERS: dict[str, SamplerSpec] = {
    s.name: s
    for s in (
        SamplerSpec("adaptive_metropolis", adaptive_metropolis_transition, "Adaptive Metropolis",
                    adaptive=True, uses_beta=True),
        SamplerSpec("univariate_metropolis", univariate_metropolis_transition, "Univariate Metropolis"),
        SamplerSpec("shrinking_rank", shrinking_rank_transition, "Shrinking Rank", needs_gradient=True),
        SamplerSpec("step_out_slice", step_out_slice_transition, "Step-out Slice"),
    )
}


def get_sampler(name: str) -> SamplerSpec:
    try:
        return SAMPLERS[name]
    except KeyError:
        raise ConfigError(f"unknown sampler: {name}") from None
