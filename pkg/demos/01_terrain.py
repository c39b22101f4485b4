"""Condition a DEM: carve a constant-slope riverbed and snap a gauge to it."""
from pathlib import Path

import numpy as np

from floodcast.raster_io import GeoTransform, Grid, MaskGrid, read_ascii_grid, write_ascii_grid
from floodcast.terrain import TerrainModel, flatten_riverbed, locate_gauge

out = Path(__file__).with_name("out")
out.mkdir(exist_ok=True)

# a bumpy 30 x 20 DEM with 10 m cells, row 0 is north
rng = np.random.default_rng(0)
geo = GeoTransform(origin_x=500_000.0, origin_y=2_000_300.0, cell_size=10.0, rows=30, cols=20)
r, c = np.mgrid[0:30, 0:20]
dem = Grid(geo, 20.0 - 0.05 * r + 0.3 * np.abs(c - 9.5) + rng.normal(0, 0.2, (30, 20)))

# the river occupies columns 9 and 10; real river masks come from surveys
mask = MaskGrid(geo, (c == 9) | (c == 10))
bed = flatten_riverbed(dem, mask, inlet_elev=18.0, outlet_elev=16.55, flow_axis="row")
print("bed profile (every 5th row):", bed.values[::5, 9].round(3))

# a gauge reported a little east of the channel snaps onto the nearest river cell
x, y = geo.cell_center(12, 14)
gauge = locate_gauge(geo, x, y, mask)
print("gauge cell:", gauge)

terrain = TerrainModel(bed, mask, 0.035, gauge)
print("terrain fingerprint:", terrain.fingerprint()[:16])

# ESRI ASCII round trip is exact
write_ascii_grid(bed, out / "dem_conditioned.asc")
assert read_ascii_grid(out / "dem_conditioned.asc") == bed
print("wrote", out / "dem_conditioned.asc")
