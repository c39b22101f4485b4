"""Probabilistic risk maps from a gauge forecast.

The forecast level is perturbed with Gaussian noise, each sample is looked up
in the steady library, and the per-cell fraction of wet samples is cut into
three nested tiers (Some >= Higher >= Highest). The simulation tiers are then
fused with the threshold model: Some is the union of both Some regions,
Highest the intersection of both Highest regions.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .library import SteadyLibrary
from .raster_io import Grid, MaskGrid, check_same_geometry, read_ascii_grid, read_mask, write_ascii_grid, write_mask
from .thresholds import ModelMasks

DEFAULT_SIGMA = 0.25
DEFAULT_SAMPLES = 100
DEFAULT_WET_DEPTH = 0.05
DEFAULT_CUTOFFS = (0.05, 0.5, 0.95)


@dataclass(frozen=True)
class ForecastInput:
    level: float
    sigma: float = DEFAULT_SIGMA
    n_samples: int = DEFAULT_SAMPLES
    seed: int = 0

    def __post_init__(self):
        if not np.isfinite(self.level):
            raise ValueError("forecast level must be finite")
        if not self.sigma >= 0:
            raise ValueError("sigma must be non-negative")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")


@dataclass(frozen=True)
class RiskMap:
    some: MaskGrid
    higher: MaskGrid
    highest: MaskGrid
    probability: Grid

    def __post_init__(self):
        check_same_geometry(self.some, self.higher, self.highest, self.probability)
        if (self.highest.values & ~self.higher.values).any() or (
            self.higher.values & ~self.some.values
        ).any():
            raise ValueError("risk tiers must be nested: highest <= higher <= some")

    @property
    def geo(self):
        return self.some.geo

    def tier_codes(self) -> np.ndarray:
        """0 = none, 1 = some, 2 = higher, 3 = highest."""
        return (
            self.some.values.astype(np.uint8)
            + self.higher.values.astype(np.uint8)
            + self.highest.values.astype(np.uint8)
        )


def sample_levels(fc: ForecastInput) -> np.ndarray:
    if fc.sigma == 0:
        return np.full(fc.n_samples, float(fc.level))
    rng = np.random.Generator(np.random.PCG64(fc.seed))
    return rng.normal(fc.level, fc.sigma, size=fc.n_samples)


def probability_map(library: SteadyLibrary, levels, wet_depth: float = DEFAULT_WET_DEPTH) -> Grid:
    """Fraction of sampled levels whose library extent wets each cell."""
    if not wet_depth > 0:
        raise ValueError("wet_depth must be positive")
    levels = np.asarray(levels, dtype=np.float64)
    if levels.size == 0:
        raise ValueError("need at least one sampled level")
    picks = np.array([library.query_index(x) for x in levels])
    hits = np.bincount(picks, minlength=len(library))
    # integer counts keep the reduction order-independent
    counts = np.zeros(library.entries[0].depth.shape, dtype=np.int64)
    for i in np.nonzero(hits)[0]:
        counts += hits[i] * library.entries[i].wet_mask(wet_depth)
    geo = library.entries[0].depth.geo
    return Grid(geo, counts / levels.size)


def discretize(prob: Grid, p_some: float, p_higher: float, p_highest: float) -> RiskMap:
    if not (0 < p_some <= p_higher <= p_highest <= 1):
        raise ValueError(
            f"need 0 < p_some <= p_higher <= p_highest <= 1, got "
            f"({p_some}, {p_higher}, {p_highest})"
        )
    p = np.where(prob.valid, prob.values, 0.0)
    return RiskMap(
        MaskGrid(prob.geo, p >= p_some),
        MaskGrid(prob.geo, p >= p_higher),
        MaskGrid(prob.geo, p >= p_highest),
        prob,
    )


def fuse(sim: RiskMap, model: ModelMasks) -> RiskMap:
    """Combine simulation tiers with the threshold model's two masks.

    The middle tier has no model counterpart; it keeps the simulation's
    Higher region, widened to contain the fused Highest and clipped to the
    fused Some so the tiers stay nested.
    """
    check_same_geometry(sim.some, model.some, model.highest)
    some = sim.some.values | model.some.values
    highest = sim.highest.values & model.highest.values
    higher = (sim.higher.values | highest) & some
    geo = sim.geo
    return RiskMap(MaskGrid(geo, some), MaskGrid(geo, higher), MaskGrid(geo, highest), sim.probability)


def forecast_risk(
    library: SteadyLibrary,
    model: ModelMasks | None,
    fc: ForecastInput,
    wet_depth: float = DEFAULT_WET_DEPTH,
    cutoffs=DEFAULT_CUTOFFS,
) -> RiskMap:
    """sample -> probability -> discretize -> fuse (when a model is given)."""
    prob = probability_map(library, sample_levels(fc), wet_depth)
    risk = discretize(prob, *cutoffs)
    if model is not None:
        risk = fuse(risk, model)
    return risk


RISK_FILES = {
    "some": "some.asc",
    "higher": "higher.asc",
    "highest": "highest.asc",
    "probability": "probability.asc",
}


def write_risk_map(risk: RiskMap, directory) -> None:
    """Write the three tier masks and the probability grid into ``directory``."""
    directory = Path(directory)
    write_mask(risk.some, directory / RISK_FILES["some"])
    write_mask(risk.higher, directory / RISK_FILES["higher"])
    write_mask(risk.highest, directory / RISK_FILES["highest"])
    write_ascii_grid(risk.probability, directory / RISK_FILES["probability"])


def read_risk_map(directory) -> RiskMap:
    directory = Path(directory)
    return RiskMap(
        read_mask(directory / RISK_FILES["some"]),
        read_mask(directory / RISK_FILES["higher"]),
        read_mask(directory / RISK_FILES["highest"]),
        read_ascii_grid(directory / RISK_FILES["probability"]),
    )
