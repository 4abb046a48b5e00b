"""Experiment configuration files (TOML) and their validation.

A config has the sections ``[target]``, ``[run]``, ``[tuner]``, ``[output]`` and
optionally ``[sweep]`` and ``[bench]``. Unknown sections or keys are errors,
reported with the dotted key name. See ``docs/config.md`` for the schema.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .adaptation import AdamConfig, AmnesiaSchedule
from .sampler import RunConfig, TunerConfig
from .targets import BuiltinTargetSpec, InvalidTargetError, make_target

__all__ = [
    "ConfigError",
    "OutputConfig",
    "SweepConfig",
    "BenchConfig",
    "ExperimentConfig",
    "load_config",
    "parse_config",
    "BENCH_METHODS",
]

BENCH_METHODS = ("malt-adaptive-rho", "malt-rho-one", "rhmc-uniform", "rhmc-exponential", "hmc")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


@dataclass(frozen=True)
class OutputConfig:
    dir: str = "out"
    draws: bool = False
    ess_csv: bool = True


@dataclass(frozen=True)
class SweepConfig:
    taus: Sequence[float]
    gammas: Sequence[float]
    repeats: int = 1
    step_size: Optional[float] = None

    def __post_init__(self):
        for name in ("taus", "gammas"):
            grid = list(getattr(self, name))
            if not grid:
                raise ConfigError(f"sweep.{name} must not be empty")
            if any(not g > 0 for g in grid):
                raise ConfigError(f"sweep.{name} must be strictly positive")
            if any(b <= a for a, b in zip(grid, grid[1:])):
                raise ConfigError(f"sweep.{name} must be sorted increasingly")
        if self.repeats < 1:
            raise ConfigError("sweep.repeats must be at least 1")
        if self.step_size is not None and not self.step_size > 0:
            raise ConfigError("sweep.step_size must be positive")


@dataclass(frozen=True)
class BenchConfig:
    methods: Sequence[str] = BENCH_METHODS
    repeats: int = 20
    seeds: Optional[Sequence[int]] = None
    percentile: float = 10.0
    n_boot: int = 1000
    reference: str = "malt-rho-one"

    def __post_init__(self):
        for m in self.methods:
            if m not in BENCH_METHODS:
                raise ConfigError(f"bench.methods: unknown method {m!r}")
        n = len(self.seeds) if self.seeds is not None else self.repeats
        if n < 2:
            raise ConfigError("bench needs at least 2 seeds (bench.repeats or bench.seeds)")
        if not 0 <= self.percentile <= 100:
            raise ConfigError("bench.percentile must lie in [0, 100]")

    def seed_list(self, base: int) -> list:
        if self.seeds is not None:
            return [int(s) for s in self.seeds]
        return [base + i for i in range(self.repeats)]


@dataclass(frozen=True)
class ExperimentConfig:
    target: BuiltinTargetSpec
    run: RunConfig
    output: OutputConfig = OutputConfig()
    sweep: Optional[SweepConfig] = None
    bench: Optional[BenchConfig] = None
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return dataclasses.replace(self, run=dataclasses.replace(self.run, seed=int(seed)))

    def make_target(self):
        return make_target(self.target)


_TARGET_KEYS = {
    "kind": str, "dim": int, "variances": list, "spectrum": list, "rotation_seed": int,
    "curvature": float, "n_obs": int, "data_seed": int, "init_scale": float,
}
_RUN_KEYS = {
    "chains": int, "n_adapt": int, "n_clip": int, "n_postadapt_warmup": int, "n_sample": int,
    "seed": int, "kernel": str, "rho_mode": str, "step_size": float, "length": float,
    "damping": float, "adapt_mass": bool, "mass": list, "init_scale": float,
    "store_coords": list, "preset": str,
}
_TUNER_KEYS = {
    "learning_rate": float, "beta1": float, "beta2": float, "epsilon": float, "a": float,
    "a_w": float, "target_accept": float, "var_floor": float, "damping_fallback": float,
    "max_length_ratio": float, "acceptance_mean": str,
}
_OUTPUT_KEYS = {"dir": str, "draws": bool, "ess_csv": bool}
_SWEEP_KEYS = {"taus": list, "gammas": list, "repeats": int, "step_size": float}
_BENCH_KEYS = {
    "methods": list, "repeats": int, "seeds": list, "percentile": float, "n_boot": int,
    "reference": str,
}
_SECTIONS = {
    "target": _TARGET_KEYS, "run": _RUN_KEYS, "tuner": _TUNER_KEYS, "output": _OUTPUT_KEYS,
    "sweep": _SWEEP_KEYS, "bench": _BENCH_KEYS,
}


def _typed(section: str, table: Any, schema: dict) -> dict:
    if not isinstance(table, dict):
        raise ConfigError(f"[{section}] must be a table")
    out = {}
    for key, value in table.items():
        if key not in schema:
            raise ConfigError(f"unknown key '{section}.{key}'")
        want = schema[key]
        if want is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if (want is int and isinstance(value, bool)) or not isinstance(value, want):
            raise ConfigError(
                f"key '{section}.{key}' must be {want.__name__}, got {type(value).__name__}")
        out[key] = value
    return out


def parse_config(data: dict) -> ExperimentConfig:
    """Validate a parsed TOML document and build an :class:`ExperimentConfig`."""
    for section in data:
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section '{section}'")
    if "target" not in data:
        raise ConfigError("missing section 'target'")
    tables = {name: _typed(name, data.get(name, {}), schema) for name, schema in _SECTIONS.items()}

    try:
        target = BuiltinTargetSpec(**tables["target"])
        make_target(target)
    except InvalidTargetError as err:
        raise ConfigError(f"target: {err}") from err
    except TypeError as err:
        raise ConfigError(f"target: {err}") from err

    t = dict(tables["tuner"])
    adam_keys = {"learning_rate", "beta1", "beta2", "epsilon"}
    try:
        adam = AdamConfig(**{k: t.pop(k) for k in list(t) if k in adam_keys})
        amnesia = AmnesiaSchedule(**{k: t.pop(k) for k in list(t) if k in ("a", "a_w")})
        tuner = TunerConfig(adam=adam, amnesia=amnesia, **t)
    except ValueError as err:
        raise ConfigError(f"tuner: {err}") from err

    r = dict(tables["run"])
    preset = r.pop("preset", None)
    try:
        if preset is None:
            run = RunConfig(tuner=tuner, **r)
        elif preset == "single-chain":
            run = RunConfig.single_chain(tuner=tuner, **r)
        else:
            raise ConfigError(f"run.preset: unknown preset {preset!r}")
    except ValueError as err:
        if isinstance(err, ConfigError):
            raise
        raise ConfigError(f"run: {err}") from err

    output = OutputConfig(**tables["output"])
    try:
        sweep = SweepConfig(**tables["sweep"]) if "sweep" in data else None
        bench = BenchConfig(**tables["bench"]) if "bench" in data else None
    except TypeError as err:
        raise ConfigError(f"sweep/bench: {err}") from err
    return ExperimentConfig(target, run, output, sweep, bench, raw=data)


def load_config(path) -> ExperimentConfig:
    """Read and validate a TOML config file."""
    path = Path(path)
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"malformed config {path}: {err}") from err
    return parse_config(data)
