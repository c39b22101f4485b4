"""YAML pipeline configuration.

Relative paths are resolved against the directory holding the config file.
See README.md for the full schema.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .solver import SolverParams, SteadyCriteria


class ConfigError(ValueError):
    pass


@dataclass
class ForecastParams:
    sigma: float = 0.25
    n_samples: int = 100
    seed: int = 0
    wet_depth: float = 0.05
    p_some: float = 0.05
    p_higher: float = 0.5
    p_highest: float = 0.95

    @property
    def cutoffs(self):
        return (self.p_some, self.p_higher, self.p_highest)


@dataclass
class PipelineConfig:
    base: Path
    dem: Path
    riverbed: Path
    manning: float | Path
    library_dir: Path
    thresholds_dir: Path | None
    observations: Path | None
    forecast_dir: Path
    inlet_elev: float
    outlet_elev: float
    flow_axis: str
    gauge_xy: tuple[float, float]
    inlets: str | list
    outlets: str | list
    solver: SolverParams
    steady: SteadyCriteria
    tiles: int
    workers: int | None
    library_levels: list[float]
    forecast: ForecastParams
    weighting: str = "event"
    raw: dict = field(default_factory=dict, repr=False)


def _section(raw: dict, name: str) -> dict:
    value = raw.get(name) or {}
    if not isinstance(value, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    return value


def _levels(value) -> list[float]:
    if value is None:
        return []
    if isinstance(value, dict):
        try:
            start, stop, step = float(value["start"]), float(value["stop"]), float(value["step"])
        except KeyError as exc:
            raise ConfigError(f"library.levels range is missing {exc}") from None
        if step <= 0 or stop < start:
            raise ConfigError("library.levels needs step > 0 and stop >= start")
        n = int(np.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + i * step, 10) for i in range(n)]
    return [float(x) for x in value]


def _cells(value, name):
    if value is None or value == "auto":
        return "auto"
    if isinstance(value, str):
        raise ConfigError(f"boundary.{name} must be 'auto' or a list of [row, col]")
    return [(int(r), int(c)) for r, c in value]


def load_config(path) -> PipelineConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML ({exc})") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    base = path.parent.resolve()

    def resolve(p):
        return None if p is None else (base / p)

    paths = _section(raw, "paths")
    for key in ("dem", "riverbed", "library"):
        if key not in paths:
            raise ConfigError(f"{path}: paths.{key} is required")
    manning = paths.get("manning", 0.03)
    manning = float(manning) if isinstance(manning, (int, float)) else resolve(manning)

    river = _section(raw, "riverbed")
    gauge = _section(raw, "gauge")
    boundary = _section(raw, "boundary")
    solver = dict(_section(raw, "solver"))
    tiles = int(solver.pop("tiles", 1))
    workers = solver.pop("workers", None)
    steady = _section(raw, "steady")
    fc = _section(raw, "forecast")
    try:
        cfg = PipelineConfig(
            base=base,
            dem=resolve(paths["dem"]),
            riverbed=resolve(paths["riverbed"]),
            manning=manning,
            library_dir=resolve(paths["library"]),
            thresholds_dir=resolve(paths.get("thresholds")),
            observations=resolve(paths.get("observations")),
            forecast_dir=resolve(paths.get("forecast", "forecast")),
            inlet_elev=float(river["inlet_elev"]),
            outlet_elev=float(river["outlet_elev"]),
            flow_axis=str(river.get("flow_axis", "row")),
            gauge_xy=(float(gauge["x"]), float(gauge["y"])),
            inlets=_cells(boundary.get("inlets"), "inlets"),
            outlets=_cells(boundary.get("outlets"), "outlets"),
            solver=SolverParams(**solver),
            steady=SteadyCriteria(**steady),
            tiles=tiles,
            workers=None if workers is None else int(workers),
            library_levels=_levels(_section(raw, "library").get("levels")),
            forecast=ForecastParams(**fc),
            weighting=str(_section(raw, "evaluation").get("weighting", "event")),
            raw=raw,
        )
    except KeyError as exc:
        raise ConfigError(f"{path}: missing required key {exc}") from None
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if cfg.tiles < 1:
        raise ConfigError("solver.tiles must be >= 1")
    return cfg
