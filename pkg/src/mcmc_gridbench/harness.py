"""Run grids of (distribution x sampler x tuning x replicate) simulations.

Each cell runs one chain through a counting proxy, drops the burn-in, estimates
per-coordinate autocorrelation times with both the AR and the initial convex
sequence methods, keeps the slowest-mixing coordinate, and multiplies by the
average number of log-density evaluations per iteration.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from mcmc_gridbench.act import (
    ActEstimate,
    ActOptions,
    Method,
    SeriesView,
    Status,
    act_ics,
    estimate_act,
)
from mcmc_gridbench.distributions import TargetDistribution, get_distribution
from mcmc_gridbench.errors import ConfigError
from mcmc_gridbench.samplers import (
    AdaptState,
    ChainState,
    SamplerSpec,
    TuningParams,
    get_sampler,
)

_MASK64 = (1 << 64) - 1


def default_tuning_values(n: int = 9, low: float = 0.1, high: float = 1000.0) -> list[float]:
    """Log-uniform grid; the default is nine values from 0.1 to 1000."""
    return [float(v) for v in np.logspace(math.log10(low), math.log10(high), n)]


@dataclass(frozen=True)
class SimulationConfig:
    chain_length: int = 50_000
    burn_in_fraction: float = 0.2
    tuning_grid: tuple = ()
    replicates: int = 1
    master_seed: int = 0
    ci_draws: int = 1000
    ci_level: float = 0.95
    p_max_override: Optional[int] = None

    def __post_init__(self):
        if self.chain_length < 100:
            raise ConfigError("chain_length must be at least 100")
        if not 0.0 < self.burn_in_fraction < 1.0:
            raise ConfigError("burn_in_fraction must lie in (0, 1)")
        if self.replicates < 1:
            raise ConfigError("replicates must be at least 1")
        if not self.tuning_grid:
            object.__setattr__(
                self, "tuning_grid", tuple(TuningParams(s) for s in default_tuning_values())
            )

    def act_options(self) -> ActOptions:
        return ActOptions(p_max=self.p_max_override, draws=self.ci_draws, level=self.ci_level)


class CountingTarget:
    """Proxy that counts every log-density and gradient call."""

    def __init__(self, target: TargetDistribution):
        self.target = target
        self.name = target.name
        self.dim = target.dim
        self.known_mean = target.known_mean
        self.logp_calls = 0
        self.grad_calls = 0
        self._logf = target.log_density
        self._grad = target.gradient
        self.gradient = self._gradient if target.gradient is not None else None

    def log_density(self, x):
        self.logp_calls += 1
        return self._logf(x)

    def _gradient(self, x):
        self.grad_calls += 1
        return self._grad(x)


@dataclass
class SimulationRecord:
    distribution: str
    dim: int
    sampler: str
    tuning: TuningParams
    replicate: int
    seed: int
    chain_length: int
    burn_in: int
    states: np.ndarray
    known_mean: Optional[np.ndarray]
    logp_evals_burn_in: int
    logp_evals: int
    grad_evals_burn_in: int
    grad_evals: int
    proxy_logp_total: int
    proxy_grad_total: int
    cpu_seconds: float
    wall_seconds: float
    cpu_seconds_burn_in: float = 0.0
    wall_seconds_burn_in: float = 0.0
    # states absorbed by the adaptive proposal before it froze
    adapt_count: Optional[int] = None

    @property
    def iterations(self) -> int:
        """Post-burn-in iteration count."""
        return self.chain_length - self.burn_in

    @property
    def evals_per_iter(self) -> float:
        return self.logp_evals / self.iterations

    @property
    def grad_evals_per_iter(self) -> float:
        return self.grad_evals / self.iterations


def burn_in_length(chain_length: int, fraction: float) -> int:
    return math.floor(fraction * chain_length)


def run_chain(
    target: TargetDistribution,
    sampler,
    tuning: TuningParams,
    chain_length: int,
    seed: int,
    burn_in_fraction: float = 0.2,
    replicate: int = 0,
) -> SimulationRecord:
    """Run one chain from ``target.default_initial_point``.

    Evaluation counters and timings are split at the burn-in boundary, which
    is also where adaptive samplers stop adapting.
    """
    spec: SamplerSpec = get_sampler(sampler) if isinstance(sampler, str) else sampler
    if spec.needs_gradient and not target.has_gradient:
        raise ConfigError(f"{spec.name} requires a gradient, which {target.name} does not provide")
    rng = np.random.default_rng(seed)
    proxy = CountingTarget(target)
    x0 = np.array(target.default_initial_point, dtype=float)
    state = ChainState(x0, target.log_density(x0), 0)
    adapt = AdaptState(target.dim) if spec.adaptive else None
    kernel = spec.kernel
    burn = burn_in_length(chain_length, burn_in_fraction)

    states = np.empty((chain_length, target.dim))
    evals = [0, 0]
    grads = [0, 0]
    cpu = [0.0, 0.0]
    wall = [0.0, 0.0]
    segments = ((0, burn), (burn, chain_length))
    for seg, (start, stop) in enumerate(segments):
        if seg == 1 and adapt is not None:
            adapt.freeze()
        c0 = time.process_time()
        w0 = time.perf_counter()
        n_evals = 0
        n_grads = 0
        for t in range(start, stop):
            res = kernel(state, proxy, tuning, rng, adapt)
            state = res.next
            n_evals += res.logp_evals
            n_grads += res.grad_evals
            states[t] = state.x
        cpu[seg] = time.process_time() - c0
        wall[seg] = time.perf_counter() - w0
        evals[seg] = n_evals
        grads[seg] = n_grads

    if evals[0] + evals[1] != proxy.logp_calls or grads[0] + grads[1] != proxy.grad_calls:
        raise RuntimeError(
            f"evaluation counters disagree with the counting proxy for {spec.name} on {target.name}"
        )
    return SimulationRecord(
        distribution=target.name,
        dim=target.dim,
        sampler=spec.name,
        tuning=tuning,
        replicate=replicate,
        seed=seed,
        chain_length=chain_length,
        burn_in=burn,
        states=states,
        known_mean=None if target.known_mean is None else np.asarray(target.known_mean, dtype=float),
        logp_evals_burn_in=evals[0],
        logp_evals=evals[1],
        grad_evals_burn_in=grads[0],
        grad_evals=grads[1],
        proxy_logp_total=proxy.logp_calls,
        proxy_grad_total=proxy.grad_calls,
        cpu_seconds=cpu[1],
        wall_seconds=wall[1],
        cpu_seconds_burn_in=cpu[0],
        wall_seconds_burn_in=wall[0],
        adapt_count=None if adapt is None else adapt.count,
    )


def apply_burn_in(record: SimulationRecord, burn_in_fraction: Optional[float] = None) -> list[SeriesView]:
    """Drop the first ``floor(fraction * chain_length)`` states, one series per coordinate."""
    if burn_in_fraction is None:
        burn = record.burn_in
    else:
        if not 0.0 < burn_in_fraction < 1.0:
            raise ValueError("burn_in_fraction must lie in (0, 1)")
        burn = burn_in_length(record.chain_length, burn_in_fraction)
    kept = record.states[burn:]
    means = record.known_mean
    return [
        SeriesView(kept[:, i], None if means is None else float(means[i]))
        for i in range(record.dim)
    ]


def slowest_component(acts: Sequence[ActEstimate]) -> ActEstimate:
    """Estimate of the slowest-mixing coordinate (largest tau, first on ties)."""
    if not acts:
        raise ValueError("slowest_component needs at least one estimate")
    for a in acts:
        if a.status is Status.NONSTATIONARY:
            return a
    ok = [a for a in acts if a.status is Status.OK]
    if not ok:
        return acts[0]
    best = ok[0]
    for a in ok[1:]:
        if a.tau > best.tau:
            best = a
    return best


def figure_of_merit(act: ActEstimate, evals_per_iter: float) -> tuple[float, float, float]:
    """Log-density evaluations per independent observation, with CI bounds.

    Degenerate estimates give NaNs, which must not be plotted as values.
    """
    if not evals_per_iter > 0:
        raise ValueError("evals_per_iter must be positive")
    if act.status is Status.NONSTATIONARY:
        return math.inf, math.inf, math.inf
    if act.status is Status.DEGENERATE:
        return math.nan, math.nan, math.nan
    e = evals_per_iter
    return e * act.tau, e * act.ci_low, e * act.ci_high


def _splitmix64(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_cell_seed(master_seed: int, dist_index: int, sampler_index: int, tuning_index: int, replicate: int) -> int:
    """Stable 64-bit seed for one grid cell.

    The four indices (each below 2**16) are packed into one 64-bit key, which
    is XORed into the SplitMix64-finalised master seed and finalised again.
    The finaliser is a bijection, so distinct keys give distinct seeds.
    """
    parts = (dist_index, sampler_index, tuning_index, replicate)
    if any(not 0 <= p < 1 << 16 for p in parts):
        raise ValueError("cell indices must lie in [0, 65536)")
    key = (dist_index << 48) | (sampler_index << 32) | (tuning_index << 16) | replicate
    return _splitmix64(_splitmix64(master_seed & _MASK64) ^ key)


@dataclass(frozen=True)
class DistributionEntry:
    name: str
    params: dict = field(default_factory=dict)

    def build(self) -> TargetDistribution:
        return get_distribution(self.name, **self.params)


@dataclass(frozen=True)
class SamplerEntry:
    name: str
    scales: tuple = ()
    betas: tuple = ()

    def tunings(self, default: Sequence[TuningParams]) -> list[TuningParams]:
        spec = get_sampler(self.name)
        if not self.scales:
            return list(default)
        if self.betas and spec.uses_beta:
            return [TuningParams(s, b) for s in self.scales for b in self.betas]
        return [TuningParams(s) for s in self.scales]


@dataclass(frozen=True)
class ExperimentConfig:
    simulation: SimulationConfig
    distributions: tuple
    samplers: tuple
    grid_axes: dict = field(default_factory=lambda: {"rows": "distribution", "cols": "sampler", "x": "scale"})

    def validate(self) -> None:
        if not self.distributions:
            raise ConfigError("no distributions in config")
        if not self.samplers:
            raise ConfigError("no samplers in config")
        for d in self.distributions:
            d.build()
        for s in self.samplers:
            if not s.tunings(self.simulation.tuning_grid):
                raise ConfigError(f"empty tuning grid for sampler {s.name}")


@dataclass(frozen=True)
class CellTask:
    index: int
    distribution: DistributionEntry
    sampler: str
    tuning: TuningParams
    replicate: int
    seed: int
    simulation: SimulationConfig


@dataclass
class CellResult:
    distribution: str
    dim: int
    sampler: str
    scale: float
    beta: Optional[float]
    replicate: int
    seed: int
    chain_length: int
    burn_in_fraction: float
    evals_per_iter: float
    grad_evals_per_iter: float
    cpu_seconds: float
    wall_seconds: float
    act_ar: ActEstimate
    act_ics: ActEstimate
    fom: float
    fom_lo: float
    fom_hi: float
    status: Status


def plan_cells(config: ExperimentConfig) -> list[CellTask]:
    """All cell tasks in row-major config order, replicates innermost."""
    config.validate()
    sim = config.simulation
    tasks = []
    for di, dist in enumerate(config.distributions):
        target = dist.build()
        for si, samp in enumerate(config.samplers):
            spec = get_sampler(samp.name)
            if spec.needs_gradient and not target.has_gradient:
                raise ConfigError(f"{samp.name} requires a gradient, which {dist.name} does not provide")
            for ti, tuning in enumerate(samp.tunings(sim.tuning_grid)):
                for rep in range(sim.replicates):
                    seed = derive_cell_seed(sim.master_seed, di, si, ti, rep)
                    tasks.append(CellTask(len(tasks), dist, samp.name, tuning, rep, seed, sim))
    return tasks


def estimate_record(record: SimulationRecord, opts: ActOptions) -> tuple[ActEstimate, ActEstimate]:
    """Slowest-component AR and ICS estimates for a finished chain."""
    ar = []
    ics = []
    for i, series in enumerate(apply_burn_in(record)):
        rng = np.random.default_rng(np.random.SeedSequence([record.seed, 1, i]))
        ar.append(estimate_act(series, opts, rng))
        ics.append(act_ics(series) if series.n >= 4 else ActEstimate.degenerate(Method.ICS))
    return slowest_component(ar), slowest_component(ics)


def run_cell(task: CellTask) -> CellResult:
    sim = task.simulation
    target = task.distribution.build()
    spec = get_sampler(task.sampler)
    record = run_chain(target, spec, task.tuning, sim.chain_length, task.seed, sim.burn_in_fraction, task.replicate)
    ar, ics = estimate_record(record, sim.act_options())
    e = record.evals_per_iter
    fom, lo, hi = figure_of_merit(ar, e)
    return CellResult(
        distribution=target.name,
        dim=target.dim,
        sampler=spec.name,
        scale=task.tuning.scale,
        beta=task.tuning.beta if spec.uses_beta else None,
        replicate=task.replicate,
        seed=task.seed,
        chain_length=sim.chain_length,
        burn_in_fraction=sim.burn_in_fraction,
        evals_per_iter=e,
        grad_evals_per_iter=record.grad_evals_per_iter,
        cpu_seconds=record.cpu_seconds,
        wall_seconds=record.wall_seconds,
        act_ar=ar,
        act_ics=ics,
        fom=fom,
        fom_lo=lo,
        fom_hi=hi,
        status=ar.status,
    )


def default_workers() -> int:
    env = os.environ.get("MCMC_GRIDBENCH_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"MCMC_GRIDBENCH_THREADS must be an integer, got {env!r}") from None
        if n >= 1:
            return n
    return os.cpu_count() or 1


def run_grid(
    config: ExperimentConfig,
    workers: Optional[int] = 1,
    on_result: Optional[Callable[[CellResult], None]] = None,
) -> list[CellResult]:
    """Run every cell of the experiment; output order follows the config, not completion."""
    tasks = plan_cells(config)
    if not tasks:
        raise ConfigError("experiment grid is empty")
    workers = default_workers() if workers is None else workers
    results: list[Optional[CellResult]] = [None] * len(tasks)
    if workers <= 1:
        for task in tasks:
            results[task.index] = run_cell(task)
            if on_result:
                on_result(results[task.index])
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(run_cell, t): t.index for t in tasks}
            for fut in as_completed(futures):
                res = fut.result()
                results[futures[fut]] = res
                if on_result:
                    on_result(res)
    return results  # type: ignore[return-value]
