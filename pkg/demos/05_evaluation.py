"""Score forecasts against observed extents and average over a season."""
import numpy as np

from floodcast.evaluation import aggregate, evaluate, evaluate_masks, reports_to_csv
from floodcast.raster_io import GeoTransform, Grid, MaskGrid
from floodcast.risk import discretize

geo = GeoTransform(0.0, 40.0, 10.0, 4, 4)

# hand-countable case: 4 wet pixels, Some catches 3 of them in 10 cells,
# Highest flags 5 cells of which 4 are wet
truth = np.zeros((4, 4), bool)
truth[0] = True
some = np.zeros((4, 4), bool)
some[0, :3] = some[1] = True
some[2, :3] = True
highest = np.zeros((4, 4), bool)
highest[0] = True
highest[3, 3] = True
print(evaluate_masks(MaskGrid(geo, some), MaskGrid(geo, highest), MaskGrid(geo, truth)).to_text())

# a small season of random events; empty Highest regions leave HRP undefined
rng = np.random.default_rng(3)
rows = []
for i in range(5):
    prob = Grid(geo, rng.choice([0.0, 0.3, 0.7, 1.0], (4, 4)))
    risk = discretize(prob, 0.05, 0.5, 0.95)
    rows.append((f"event{i}", evaluate(risk, MaskGrid(geo, rng.random((4, 4)) < 0.4))))
print(reports_to_csv(rows))
print("per-event mean:\n" + aggregate([r for _, r in rows]).to_text())
print("pooled pixels:\n" + aggregate([r for _, r in rows], weighting="pixel").to_text())
