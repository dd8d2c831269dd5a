"""Experiment configuration: defaults per study, YAML loading and overrides."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Optional

import yaml

from ..errors import DomainError
from ..split import split_size

__all__ = ["EXPERIMENTS", "ExperimentConfig", "default_config", "load_config"]

EXPERIMENTS = ("power", "stability", "coverage_coef", "coverage_projection", "theorem1", "prop1")
SELECTORS = ("knockoff", "stability")


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    n: int = 200
    p: int = 30
    rho: float = 0.0
    f: float = 0.5
    selector: str = "knockoff"
    n_reps: int = 300
    alpha: float = 0.1
    seed: int = 20240101
    knockoff_q: float = 0.3
    knockoff_method: str = "sdp"
    pfer: float = 3.0
    cutoff: float = 0.7
    B: int = 50
    output_path: str = "results"
    # stability study: splits and noise draws per dataset
    n_draws: int = 50
    # asymptotic pivot study
    n_grid: tuple = (100, 400, 1600)
    n_hits: int = 2000
    errors: str = "exponential"
    known_sigma: bool = False
    fixed_s: Optional[tuple] = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.experiment not in EXPERIMENTS:
            raise DomainError(f"unknown experiment {self.experiment!r}")
        if self.selector not in SELECTORS:
            raise DomainError(f"unknown selector {self.selector!r}")
        if self.n < 4 or self.p < 1:
            raise DomainError("need n >= 4 and p >= 1")
        if not 0 <= self.rho < 1:
            raise DomainError("rho must lie in [0, 1)")
        if not 0 < self.f < 1 or not 1 <= split_size(self.n, self.f) < self.n:
            raise DomainError(f"f = {self.f} leaves an empty set for n = {self.n}")
        if not 0 < self.alpha < 1:
            raise DomainError("alpha must lie in (0, 1)")
        if self.n_reps < 1 or self.n_draws < 1 or self.n_hits < 1:
            raise DomainError("replication counts must be positive")
        if not 0 <= self.seed < 2 ** 64:
            raise DomainError("seed must be an unsigned 64-bit integer")
        if self.knockoff_method not in ("sdp", "equi"):
            raise DomainError("knockoff_method must be 'sdp' or 'equi'")
        if self.errors not in ("exponential", "normal"):
            raise DomainError("errors must be 'exponential' or 'normal'")
        if self.selector == "knockoff" and self.experiment in (
                "power", "stability", "coverage_coef"):
            if split_size(self.n, self.f) < 2 * self.p:
                raise DomainError("fixed-X knockoffs need n >= 2p on every selection set")
        if self.experiment == "coverage_projection" and self.selector != "stability":
            raise DomainError("projection study runs with the stability selector only")

    @property
    def cell(self) -> str:
        """Label identifying the parameter cell; keys the random streams."""
        return (f"{self.experiment}|{self.selector}|n={self.n}|p={self.p}|rho={self.rho!r}"
                f"|f={self.f!r}")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


# study-specific defaults from the simulation section
_DEFAULTS = {
    "power": {},
    "stability": {"rho": 0.5, "p": 50, "n_reps": 100},
    "coverage_coef": {"n_reps": 2000},
    "coverage_projection": {"p": 400, "selector": "stability", "n_reps": 2000},
    "theorem1": {"p": 5, "f": 0.75},
    "prop1": {"n": 40, "p": 3, "n_reps": 10_000},
}

_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig) }


def _coerce(name: str, value: Any):
    kind = _FIELDS[name].type
    if value is None:
        return None
    if kind == "int":
        if isinstance(value, bool) or float(value) != int(float(value)):
            raise DomainError(f"{name} must be an integer")
        return int(float(value))
    if kind == "float":
        return float(value)
    if kind == "bool":
        if isinstance(value, str):
            return value.strip().lower() in ("1", "true", "yes", "on")
        return bool(value)
    if kind in ("tuple", "Optional[tuple]"):
        if isinstance(value, str):
            value = [v for v in value.replace(",", " ").split()]
        return tuple(int(v) for v in value)
    return str(value)


def default_config(experiment: str, selector: Optional[str] = None, **overrides) -> ExperimentConfig:
    """Defaults for a study, then overrides.  Stability-selector studies use
    ``p = 400`` unless overridden, knockoff ones the base value."""
    experiment = experiment.replace("-", "_")
    if experiment == "coverage_proj":
        experiment = "coverage_projection"
    if experiment not in _DEFAULTS:
        raise DomainError(f"unknown experiment {experiment!r}")
    values = dict(_DEFAULTS[experiment])
    if selector is not None:
        values["selector"] = selector
    if experiment == "stability" and values.get("selector") == "stability":
        values["p"] = 400
    for k, v in overrides.items():
        if v is None:
            continue
        if k not in _FIELDS or k == "experiment":
            raise DomainError(f"unknown configuration key {k!r}")
        values[k] = _coerce(k, v)
    return ExperimentConfig(experiment=experiment, **values)


def load_config(path, experiment: Optional[str] = None, **overrides) -> ExperimentConfig:
    """Read a flat YAML mapping; ``overrides`` (e.g. CLI flags) win over file values."""
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise DomainError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, Mapping):
        raise DomainError("config file must hold a flat key-value mapping")
    data = dict(data)
    file_experiment = data.pop("experiment", None)
    experiment = experiment or file_experiment
    if experiment is None:
        raise DomainError("config names no experiment")
    for k, v in data.items():
        if isinstance(v, Mapping):
            raise DomainError(f"config key {k!r} must be a scalar or list")
    merged = {**data, **{k: v for k, v in overrides.items() if v is not None}}
    selector = merged.pop("selector", None)
    return default_config(experiment, selector=selector, **merged)
