"""Per-pixel water-level thresholds learned from historical wet/dry maps.

Each pixel is modelled as wet whenever the gauge level exceeds a pixel
threshold. Two operating points are kept:

* ``t_recall``: lowest level at which the pixel was ever seen wet. The
  Some-risk mask uses ``level >= t_recall``, so every observed wet pixel is
  caught.
* ``t_precision``: highest level at which the pixel was ever seen dry
  (raised to ``t_recall`` if lower). The Highest-risk mask uses
  ``level > t_precision``, so no observed dry pixel is flagged.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .raster_io import (
    GeoTransform,
    Grid,
    MaskGrid,
    atomic_write_dir,
    read_ascii_grid,
    read_mask,
    write_ascii_grid,
    write_mask,
)

# finite stand-ins for +/-inf in ASCII grids
POS_INF_SENTINEL = 1e30
NEG_INF_SENTINEL = -1e30
MANIFEST = "thresholds.json"


class ObservationError(ValueError):
    pass


@dataclass(frozen=True)
class Snapshot:
    gauge_level: float
    wet: MaskGrid
    valid: MaskGrid


@dataclass(frozen=True)
class ObservationStack:
    geo: GeoTransform
    snapshots: tuple[Snapshot, ...]

    def __post_init__(self):
        object.__setattr__(self, "snapshots", tuple(self.snapshots))
        for s in self.snapshots:
            if s.wet.geo != self.geo or s.valid.geo != self.geo:
                raise ObservationError("snapshot geometry differs from the stack")
            if not np.isfinite(s.gauge_level):
                raise ObservationError("gauge level must be finite")

    def arrays(self):
        levels = np.array([s.gauge_level for s in self.snapshots], dtype=np.float64)
        wet = np.stack([s.wet.values for s in self.snapshots])
        valid = np.stack([s.valid.values for s in self.snapshots])
        return levels, wet, valid


@dataclass(frozen=True, eq=False)
class ThresholdField:
    geo: GeoTransform
    t_recall: np.ndarray
    t_precision: np.ndarray
    coverage: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, ThresholdField):
            return NotImplemented
        return (
            self.geo == other.geo
            and np.array_equal(self.t_recall, other.t_recall)
            and np.array_equal(self.t_precision, other.t_precision)
            and np.array_equal(self.coverage, other.coverage)
        )

    __hash__ = None


def fit_thresholds(obs: ObservationStack) -> ThresholdField:
    if not obs.snapshots:
        raise ObservationError("observation stack is empty")
    levels, wet, valid = obs.arrays()
    lv = levels[:, None, None]
    seen_wet = wet & valid
    seen_dry = ~wet & valid

    t_recall = np.min(np.where(seen_wet, lv, np.inf), axis=0)
    t_precision = np.max(np.where(seen_dry, lv, -np.inf), axis=0)
    t_precision = np.maximum(t_precision, t_recall)

    coverage = valid.any(axis=0)
    t_recall[~coverage] = np.inf
    t_precision[~coverage] = np.inf
    return ThresholdField(obs.geo, t_recall, t_precision, coverage)


@dataclass(frozen=True)
class ModelMasks:
    some: MaskGrid
    highest: MaskGrid


def predict(field: ThresholdField, level: float) -> ModelMasks:
    if not np.isfinite(level):
        raise ValueError("forecast level must be finite")
    some = level >= field.t_recall
    highest = level > field.t_precision
    return ModelMasks(MaskGrid(field.geo, some), MaskGrid(field.geo, highest))


def _encode(a: np.ndarray) -> np.ndarray:
    out = np.where(a == np.inf, POS_INF_SENTINEL, a)
    return np.where(out == -np.inf, NEG_INF_SENTINEL, out)


def _decode(a: np.ndarray) -> np.ndarray:
    out = np.where(a >= POS_INF_SENTINEL, np.inf, a)
    return np.where(out <= NEG_INF_SENTINEL, -np.inf, out)


def save_thresholds(field: ThresholdField, directory) -> None:
    with atomic_write_dir(Path(directory)) as tmp:
        write_ascii_grid(Grid(field.geo, _encode(field.t_recall)), tmp / "t_recall.asc")
        write_ascii_grid(Grid(field.geo, _encode(field.t_precision)), tmp / "t_precision.asc")
        write_mask(MaskGrid(field.geo, field.coverage), tmp / "coverage.asc")
        manifest = {
            "t_recall": "t_recall.asc",
            "t_precision": "t_precision.asc",
            "coverage": "coverage.asc",
            "pos_inf_sentinel": POS_INF_SENTINEL,
            "neg_inf_sentinel": NEG_INF_SENTINEL,
        }
        (tmp / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_thresholds(directory) -> ThresholdField:
    directory = Path(directory)
    manifest = json.loads((directory / MANIFEST).read_text())
    rec = read_ascii_grid(directory / manifest["t_recall"])
    prec = read_ascii_grid(directory / manifest["t_precision"])
    cov = read_mask(directory / manifest["coverage"])
    if not (rec.geo == prec.geo == cov.geo):
        raise ObservationError(f"threshold grids in {directory} disagree on geometry")
    return ThresholdField(rec.geo, _decode(np.array(rec.values)), _decode(np.array(prec.values)), np.array(cov.values))


def load_observations(manifest_path) -> ObservationStack:
    """Read a stack described by a JSON list of {level, wet, valid?} records.

    Paths are relative to the manifest. A missing ``valid`` raster means
    every non-nodata pixel of the wet raster was observed.
    """
    manifest_path = Path(manifest_path)
    records = json.loads(manifest_path.read_text())
    if isinstance(records, dict):
        records = records["snapshots"]
    if not records:
        raise ObservationError(f"{manifest_path}: no snapshots")
    base = manifest_path.parent
    snaps = []
    for rec in records:
        wet_grid = read_ascii_grid(base / rec["wet"])
        wet = MaskGrid(wet_grid.geo, wet_grid.valid & (wet_grid.values != 0))
        if rec.get("valid"):
            valid = read_mask(base / rec["valid"])
        else:
            valid = MaskGrid(wet_grid.geo, wet_grid.valid)
        snaps.append(Snapshot(float(rec["level"]), wet, valid))
    return ObservationStack(snaps[0].wet.geo, tuple(snaps))
