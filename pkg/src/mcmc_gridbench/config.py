"""TOML experiment configuration.

A complete annotated example::

    [simulation]
    chain_length = 50000       # transitions per chain, >= 100
    burn_in_fraction = 0.2     # leading fraction discarded before estimation
    master_seed = 20100        # every cell seed is derived from this
    replicates = 1
    ci_draws = 1000            # parameter draws for the AR confidence interval
    ci_level = 0.95
    # p_max = 30               # optional cap on the AR order
    # default tuning grid, used by samplers that give no `scales`
    scales = [0.1, 0.316, 1.0, 3.16, 10.0, 31.6, 100.0, 316.0, 1000.0]

    [grid_axes]                # suggested plot layout
    rows = "distribution"
    cols = "sampler"
    x = "scale"

    [[distributions]]
    name = "mixture_ten"
    mode_seed = 1              # remaining keys are distribution parameters

    [[samplers]]
    name = "adaptive_metropolis"
    betas = [0.05]             # only meaningful for adaptive_metropolis

Bundled configs may be referenced by file name alone (``figure2.config``).
"""

from __future__ import annotations

import math
import os
from importlib import resources
from pathlib import Path
from typing import Any

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from mcmc_gridbench.distributions import distribution_names
from mcmc_gridbench.errors import ConfigError
from mcmc_gridbench.harness import DistributionEntry, ExperimentConfig, SamplerEntry, SimulationConfig
from mcmc_gridbench.report import FACTORS
from mcmc_gridbench.samplers import SAMPLERS, TuningParams

_SIM_KEYS = {"chain_length", "burn_in_fraction", "master_seed", "replicates", "ci_draws", "ci_level", "p_max", "scales"}
_SAMPLER_KEYS = {"name", "scales", "betas"}
_TOP_KEYS = {"simulation", "grid_axes", "distributions", "samplers"}


def bundled_configs() -> list[str]:
    root = resources.files("mcmc_gridbench") / "configs"
    return sorted(p.name for p in root.iterdir() if p.name.endswith(".config"))


def resolve_config_path(path) -> Path:
    """Return ``path`` if it exists, else the bundled config of that name."""
    p = Path(path)
    if p.exists():
        return p
    if p.name == os.fspath(path) and p.name in bundled_configs():
        return Path(str(resources.files("mcmc_gridbench") / "configs" / p.name))
    raise FileNotFoundError(f"config file not found: {os.fspath(path)}")


def _typed(section: str, key: str, value: Any, kind, *, positive=False):
    where = f"{section}.{key}" if section else key
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
    elif kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        value = float(value)
        if not math.isfinite(value):
            raise ConfigError(f"{where}: must be finite")
    elif kind is list:
        if not isinstance(value, list) or not value:
            raise ConfigError(f"{where}: expected a nonempty list of numbers")
        return tuple(_typed(section, key, v, float, positive=positive) for v in value)
    if positive and not value > 0:
        raise ConfigError(f"{where}: must be positive, got {value!r}")
    return value


def _reject_unknown(section: str, table: dict, allowed: set) -> None:
    for key in table:
        if key not in allowed:
            where = f"{section}.{key}" if section else key
            raise ConfigError(f"unknown key: {where}")


def parse_config(data: dict) -> ExperimentConfig:
    _reject_unknown("", data, _TOP_KEYS)
    sim = data.get("simulation", {})
    if not isinstance(sim, dict):
        raise ConfigError("simulation: expected a table")
    _reject_unknown("simulation", sim, _SIM_KEYS)
    kwargs = {}
    for key, kind in (("chain_length", int), ("replicates", int), ("master_seed", int), ("ci_draws", int)):
        if key in sim:
            kwargs[key] = _typed("simulation", key, sim[key], kind)
    for key in ("burn_in_fraction", "ci_level"):
        if key in sim:
            kwargs[key] = _typed("simulation", key, sim[key], float)
    if "p_max" in sim:
        kwargs["p_max_override"] = _typed("simulation", "p_max", sim["p_max"], int, positive=True)
    if "master_seed" in kwargs and not 0 <= kwargs["master_seed"] < 2**64:
        raise ConfigError("simulation.master_seed: must be a 64-bit unsigned integer")
    if "ci_draws" in kwargs and kwargs["ci_draws"] < 2:
        raise ConfigError("simulation.ci_draws: must be at least 2")
    if "ci_level" in kwargs and not 0.0 < kwargs["ci_level"] < 1.0:
        raise ConfigError("simulation.ci_level: must lie in (0, 1)")
    if "scales" in sim:
        kwargs["tuning_grid"] = tuple(TuningParams(s) for s in _typed("simulation", "scales", sim["scales"], list, positive=True))
    try:
        simulation = SimulationConfig(**kwargs)
    except ConfigError as exc:
        raise ConfigError(f"simulation: {exc}") from None

    dists = []
    for i, entry in enumerate(data.get("distributions", [])):
        if not isinstance(entry, dict) or "name" not in entry:
            raise ConfigError(f"distributions[{i}].name: missing")
        name = entry["name"]
        if name not in distribution_names():
            raise ConfigError(f"unknown distribution: {name}")
        dists.append(DistributionEntry(name, {k: v for k, v in entry.items() if k != "name"}))

    samplers = []
    for i, entry in enumerate(data.get("samplers", [])):
        if not isinstance(entry, dict) or "name" not in entry:
            raise ConfigError(f"samplers[{i}].name: missing")
        name = entry["name"]
        if name not in SAMPLERS:
            raise ConfigError(f"unknown sampler: {name}")
        _reject_unknown(f"samplers[{i}]", entry, _SAMPLER_KEYS)
        scales = _typed(f"samplers[{i}]", "scales", entry["scales"], list, positive=True) if "scales" in entry else ()
        betas = _typed(f"samplers[{i}]", "betas", entry["betas"], list, positive=True) if "betas" in entry else ()
        if any(not b < 1.0 for b in betas):
            raise ConfigError(f"samplers[{i}].betas: values must lie in (0, 1)")
        if betas and not scales:
            scales = tuple(t.scale for t in simulation.tuning_grid)
        samplers.append(SamplerEntry(name, scales, betas))

    axes = data.get("grid_axes", {"rows": "distribution", "cols": "sampler", "x": "scale"})
    if not isinstance(axes, dict) or set(axes) != {"rows", "cols", "x"}:
        raise ConfigError("grid_axes: must name exactly rows, cols and x")
    for key, value in axes.items():
        if value not in FACTORS:
            raise ConfigError(f"grid_axes.{key}: unknown factor {value!r}")
    if len(set(axes.values())) != 3:
        raise ConfigError("grid_axes: rows, cols and x must be distinct")

    config = ExperimentConfig(simulation, tuple(dists), tuple(samplers), dict(axes))
    config.validate()
    return config


def loads_config(text: str) -> ExperimentConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config syntax error: {exc}") from None
    return parse_config(data)


def load_config(path) -> ExperimentConfig:
    p = resolve_config_path(path)
    return loads_config(p.read_text())
