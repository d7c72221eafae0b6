"""TOML configuration files and their echo into output metadata.

A config file may contain any of the tables below; missing keys keep their
defaults::

    seed = 7
    runs = 100
    mode = "two-an"

    [scenario]        # ScenarioConfig fields
    kind = "a"

    [delays]          # DelayModel fields
    mu_t = 9.0

    [experiment]      # gnss_sigma_m, burn_in, epoch, noise_off

    [sweep]           # mu_t_grid = [...], sigma_t_grid = [...]
"""

from __future__ import annotations

import dataclasses
import sys
from pathlib import Path

from .harness import SWEEP_PARAMS, ExperimentConfig
from .protocol import DelayModel
from .world import ScenarioConfig

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

TOP_KEYS = {"seed", "runs", "mode", "jobs"}
TABLES = {"scenario", "delays", "experiment", "sweep"}


class ConfigError(ValueError):
    """Unreadable or inconsistent configuration."""


def load_file(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    unknown = set(data) - TOP_KEYS - TABLES
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    return data


def _build(cls, table: dict, what: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(table) - names
    if unknown:
        raise ConfigError(f"[{what}] unknown keys {sorted(unknown)}")
    table = {k: tuple(v) if isinstance(v, list) else v for k, v in table.items()}
    try:
        return cls(**table)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{what}] {exc}") from None


def experiment_from_dict(data: dict) -> ExperimentConfig:
    scenario = _build(ScenarioConfig, data.get("scenario", {}), "scenario")
    delays = _build(DelayModel, data.get("delays", {}), "delays")
    exp = dict(data.get("experiment", {}))
    exp.update(scenario=scenario, delays=delays)
    return _build(ExperimentConfig, exp, "experiment")


def sweep_grids(data: dict) -> dict:
    """Optional grid overrides from the ``[sweep]`` table."""
    table = data.get("sweep", {})
    unknown = set(table) - {f"{p}_grid" for p in SWEEP_PARAMS}
    if unknown:
        raise ConfigError(f"[sweep] unknown keys {sorted(unknown)}")
    grids = {}
    for key, grid in table.items():
        if not isinstance(grid, list) or not grid:
            raise ConfigError(f"[sweep] {key} must be a non-empty list")
        grids[key[: -len("_grid")]] = tuple(float(v) for v in grid)
    return grids


def to_dict(obj):
    """Plain nested dict of a config dataclass, suitable for JSON."""
    if dataclasses.is_dataclass(obj):
        return {f.name: to_dict(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [to_dict(v) for v in obj]
    if hasattr(obj, "tolist"):
        return obj.tolist()
    return obj
