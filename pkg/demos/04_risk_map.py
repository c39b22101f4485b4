"""Learn pixel thresholds from past floods and fuse them with simulated risk."""
from pathlib import Path

import numpy as np

from floodcast.library import build_library
from floodcast.raster_io import MaskGrid
from floodcast.render import render_risk, save_png
from floodcast.risk import ForecastInput, forecast_risk, probability_map, sample_levels
from floodcast.solver import SolverParams, SteadyCriteria
from floodcast.synthetic import v_valley
from floodcast.thresholds import ObservationStack, Snapshot, fit_thresholds, predict

out = Path(__file__).with_name("out")
out.mkdir(exist_ok=True)
sc = v_valley(rows=40, cols=30, side_slope=0.005)
geo = sc.terrain.geo
lib = build_library(sc.terrain, SolverParams(), [10.4, 10.8, 11.2, 11.6], SteadyCriteria(), sc.inlet_cells, sc.outlet_cells)

# pretend history: noisy copies of the simulated extents, with cloud gaps
rng = np.random.default_rng(1)
snaps = []
for _ in range(12):
    e = lib.entries[rng.integers(len(lib))]
    wet = e.wet_mask(0.05) ^ (rng.random(geo.shape) < 0.02)
    valid = rng.random(geo.shape) > 0.1
    snaps.append(Snapshot(e.gauge_level + rng.normal(0, 0.02), MaskGrid(geo, wet), MaskGrid(geo, valid)))
field = fit_thresholds(ObservationStack(geo, tuple(snaps)))
print("pixels ever seen wet:", int(np.isfinite(field.t_recall).sum()))

level = float(lib.gauge_levels[2])
fc = ForecastInput(level, sigma=0.25, n_samples=200, seed=7)
prob = probability_map(lib, sample_levels(fc))
print("cells with 0 < p < 1:", int(((prob.values > 0) & (prob.values < 1)).sum()))

risk = forecast_risk(lib, predict(field, level), fc)
print("some / higher / highest cells:", risk.some.count(), risk.higher.count(), risk.highest.count())

save_png(render_risk(risk, sc.terrain.elevation, scale=8), out / "risk.png")
print("wrote", out / "risk.png")
