"""Synthetic terrains for tests and demos."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .raster_io import GeoTransform, Grid, MaskGrid, write_ascii_grid, write_mask
from .solver import BoundaryCondition
from .terrain import TerrainModel, flatten_riverbed


@dataclass(frozen=True)
class Scenario:
    terrain: TerrainModel
    inlet_cells: tuple[tuple[int, int], ...]
    outlet_cells: tuple[tuple[int, int], ...]
    bank_elev: float

    def boundary(self, level: float) -> BoundaryCondition:
        return BoundaryCondition(level, self.inlet_cells, self.outlet_cells)


def v_valley(
    rows: int = 40,
    cols: int = 30,
    cell_size: float = 10.0,
    river_width: int = 3,
    bed_top: float = 10.0,
    bed_slope: float = 0.001,
    side_slope: float = 0.02,
    bank_height: float = 1.0,
    manning: float = 0.03,
) -> Scenario:
    """River running north to south down the middle of a V-shaped valley.

    The riverbed is a constant-slope channel ``bank_height`` below the
    valley floor; inlets are the river cells of row 0 and the whole bottom
    row drains freely.
    """
    center = (cols - 1) / 2.0
    r = np.arange(rows)[:, None]
    c = np.arange(cols)[None, :]
    floor = bed_top + bank_height - bed_slope * cell_size * r
    z = floor + side_slope * cell_size * np.abs(c - center)
    geo = GeoTransform(0.0, rows * cell_size, cell_size, rows, cols)
    half = river_width / 2.0
    mask = np.broadcast_to(np.abs(c - center) < half, (rows, cols))
    river = MaskGrid(geo, mask)
    outlet_elev = bed_top - bed_slope * cell_size * (rows - 1)
    dem = flatten_riverbed(Grid(geo, z), river, bed_top, outlet_elev, "row")
    gauge = (rows // 2, int(np.argmax(mask[0])) + river_width // 2)
    terrain = TerrainModel(dem, river, manning, gauge)
    inlets = tuple((0, int(j)) for j in np.nonzero(mask[0])[0])
    outlets = tuple((rows - 1, j) for j in range(cols))
    return Scenario(terrain, inlets, outlets, bed_top + bank_height)


def random_bathymetry(rng: np.random.Generator, rows: int, cols: int, relief: float = 5.0) -> np.ndarray:
    """Smooth-ish random bed: sum of a few random cosine bumps plus noise."""
    y, x = np.mgrid[0:rows, 0:cols]
    z = np.zeros((rows, cols))
    for _ in range(4):
        kx, ky = rng.uniform(0.05, 0.5, size=2)
        phase = rng.uniform(0, 2 * np.pi)
        z += rng.uniform(0.2, 1.0) * np.cos(kx * x + ky * y + phase)
    z += 0.1 * rng.standard_normal((rows, cols))
    z -= z.min()
    return z * (relief / max(z.max(), 1e-12))


def inclined_plane(
    length: int = 120,
    width: int = 3,
    cell_size: float = 10.0,
    slope: float = 0.001,
    manning: float = 0.03,
    top: float = 10.0,
) -> Scenario:
    """Uniform plane sloping along the rows; walls on the long sides."""
    r = np.arange(length, dtype=np.float64)[:, None]
    z = np.broadcast_to(top - slope * cell_size * r, (length, width))
    geo = GeoTransform(0.0, length * cell_size, cell_size, length, width)
    river = MaskGrid.full(geo, True)
    terrain = TerrainModel(Grid(geo, z), river, manning, (length // 2, width // 2))
    inlets = tuple((0, j) for j in range(width))
    outlets = tuple((length - 1, j) for j in range(width))
    return Scenario(terrain, inlets, outlets, top)


def write_project(
    directory,
    scenario: Scenario,
    levels,
    *,
    sigma: float = 0.25,
    n_samples: int = 100,
    seed: int = 0,
    steady: dict | None = None,
    solver: dict | None = None,
) -> Path:
    """Write a scenario as rasters plus a pipeline YAML; returns the YAML path.

    Inlets and outlets are listed explicitly, so the files reproduce the
    scenario's boundary exactly.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    t = scenario.terrain
    write_ascii_grid(t.elevation, directory / "dem.asc")
    write_mask(t.riverbed, directory / "river.asc")
    geo = t.geo
    x, y = geo.cell_center(*t.gauge_cell)
    rows = np.nonzero(t.riverbed.values.any(axis=1))[0]
    bed = t.elevation.values
    first, last = int(rows[0]), int(rows[-1])
    col = int(np.argmax(t.riverbed.values[first]))
    config = {
        "paths": {
            "dem": "dem.asc",
            "riverbed": "river.asc",
            "manning": float(t.manning) if not isinstance(t.manning, Grid) else "manning.asc",
            "library": "library",
            "thresholds": "thresholds",
            "observations": "observations/observations.json",
            "forecast": "forecast",
        },
        "riverbed": {
            "inlet_elev": float(bed[first, col]),
            "outlet_elev": float(bed[last, col]),
            "flow_axis": "row",
        },
        "gauge": {"x": float(x), "y": float(y)},
        "boundary": {
            "inlets": [list(c) for c in scenario.inlet_cells],
            "outlets": [list(c) for c in scenario.outlet_cells],
        },
        "solver": solver or {"cfl_alpha": 0.5},
        "steady": steady or {"epsilon": 1e-4, "window": 100},
        "library": {"levels": [float(v) for v in levels]},
        "forecast": {"sigma": sigma, "n_samples": n_samples, "seed": seed},
    }
    if isinstance(t.manning, Grid):
        write_ascii_grid(t.manning, directory / "manning.asc")
    path = directory / "flood.yaml"
    path.write_text(yaml.safe_dump(config, sort_keys=False))
    return path


def write_observations(directory, snapshots) -> Path:
    """Write (level, wet MaskGrid) pairs as an observation manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    records = []
    for i, (level, wet) in enumerate(snapshots):
        name = f"wet_{i:03d}.asc"
        write_mask(wet, directory / name)
        records.append({"level": float(level), "wet": name})
    path = directory / "observations.json"
    path.write_text(json.dumps(records, indent=2) + "\n")
    return path
