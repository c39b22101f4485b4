"""DEM conditioning: constant-slope riverbed and gauge placement."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .raster_io import Grid, GeoTransform, MaskGrid, check_same_geometry, world_to_cell


class TerrainError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class TerrainModel:
    """Bed elevation, riverbed mask, Manning roughness and gauge cell.

    ``manning`` is either a positive scalar or a Grid of positive values.
    """

    elevation: Grid
    riverbed: MaskGrid
    manning: float | Grid
    gauge_cell: tuple[int, int]
    _manning_array: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        check_same_geometry(self.elevation, self.riverbed)
        if isinstance(self.manning, Grid):
            check_same_geometry(self.elevation, self.manning)
            n = np.array(self.manning.values)
            if not (n[self.elevation.valid] > 0).all():
                raise TerrainError("Manning coefficient must be positive on valid cells")
            n = np.where(self.elevation.valid, n, 1.0)
        else:
            if not self.manning > 0:
                raise TerrainError(f"Manning coefficient must be positive, got {self.manning}")
            n = np.full(self.elevation.shape, float(self.manning))
        n.setflags(write=False)
        object.__setattr__(self, "_manning_array", n)
        r, c = self.gauge_cell
        object.__setattr__(self, "gauge_cell", (int(r), int(c)))
        rows, cols = self.elevation.shape
        if not (0 <= r < rows and 0 <= c < cols):
            raise TerrainError(f"gauge cell {self.gauge_cell} outside grid")
        if not self.riverbed.values[r, c]:
            raise TerrainError(f"gauge cell {self.gauge_cell} is not on the riverbed mask")

    @property
    def geo(self) -> GeoTransform:
        return self.elevation.geo

    @property
    def manning_array(self) -> np.ndarray:
        return self._manning_array

    def fingerprint(self) -> str:
        """SHA-256 over geometry, elevation, riverbed, roughness and gauge cell."""
        h = hashlib.sha256()
        geo = self.geo
        h.update(repr((geo.origin_x, geo.origin_y, geo.cell_size, geo.rows, geo.cols)).encode())
        h.update(np.float64(self.elevation.nodata).tobytes())
        h.update(np.ascontiguousarray(self.elevation.values).tobytes())
        h.update(np.ascontiguousarray(self.riverbed.values).tobytes())
        h.update(np.ascontiguousarray(self._manning_array).tobytes())
        h.update(repr(self.gauge_cell).encode())
        return h.hexdigest()


def flatten_riverbed(
    dem: Grid,
    mask: MaskGrid,
    inlet_elev: float,
    outlet_elev: float,
    flow_axis: str = "row",
) -> Grid:
    """Replace masked cells by a linear bed from inlet to outlet elevation.

    The inlet sits on the first masked line along ``flow_axis`` ("row" means
    flow runs down the rows, "col" across the columns) and the outlet on the
    last. Unmasked cells are left untouched.
    """
    check_same_geometry(dem, mask)
    if flow_axis not in ("row", "col"):
        raise TerrainError(f"flow_axis must be 'row' or 'col', got {flow_axis!r}")
    if inlet_elev < outlet_elev:
        raise TerrainError(
            f"inlet elevation {inlet_elev} is below outlet elevation {outlet_elev}"
        )
    m = mask.values
    if not m.any():
        raise TerrainError("riverbed mask is empty")

    axis = 0 if flow_axis == "row" else 1
    lines = np.nonzero(m.any(axis=1 - axis))[0]
    first, last = int(lines[0]), int(lines[-1])
    index = np.arange(dem.shape[axis], dtype=np.float64)
    span = last - first
    frac = (index - first) / span if span > 0 else np.zeros_like(index)
    bed_line = inlet_elev + (outlet_elev - inlet_elev) * frac
    bed = bed_line[:, None] if axis == 0 else bed_line[None, :]
    bed = np.broadcast_to(bed, dem.shape)

    out = np.where(m, bed, dem.values)
    return Grid(dem.geo, out, dem.nodata)


def locate_gauge(geo: GeoTransform, gauge_x: float, gauge_y: float, mask: MaskGrid) -> tuple[int, int]:
    """Snap a gauge location to the riverbed.

    Returns the containing cell if it is riverbed, else the nearest riverbed
    cell by center distance, ties going to the smallest (row, col).
    """
    if mask.geo != geo:
        raise TerrainError("mask geometry differs from the supplied transform")
    cell = world_to_cell(geo, gauge_x, gauge_y)
    if cell is None:
        raise TerrainError(f"gauge point ({gauge_x}, {gauge_y}) lies outside the grid")
    if not mask.values.any():
        raise TerrainError("riverbed mask is empty")
    if mask.values[cell]:
        return cell
    # argwhere is row-major, so argmin's first hit is the lexicographic minimum
    candidates = np.argwhere(mask.values)
    d2 = (candidates[:, 0] - cell[0]) ** 2 + (candidates[:, 1] - cell[1]) ** 2
    r, c = candidates[int(np.argmin(d2))]
    return (int(r), int(c))
