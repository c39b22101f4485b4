"""Level-indexed library of steady-state inundation extents.

Each entry is one steady simulation, keyed by the water level it produced
at the gauge cell. A forecast level is answered with the nearest entry.
"""
from __future__ import annotations

import json
from fractions import Fraction
import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .raster_io import Grid, atomic_write_dir, read_ascii_grid, write_ascii_grid
from .solver import (
    BoundaryCondition,
    SolverError,
    SolverParams,
    SteadyCriteria,
    run_to_steady,
)
from .terrain import TerrainModel

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"
FORMAT_VERSION = 1
COLLAPSE_TOL = 1e-3  # metres


class LibraryError(ValueError):
    pass


class FingerprintMismatch(LibraryError):
    pass


class LibraryBuildError(RuntimeError):
    def __init__(self, inflow_level: float, cause: Exception):
        self.inflow_level = inflow_level
        super().__init__(f"simulation for inflow level {inflow_level} m failed: {cause}")


@dataclass(frozen=True, eq=False)
class LibraryEntry:
    inflow_level: float
    gauge_level: float
    depth: Grid
    steps: int
    mass_error: float

    def wet_mask(self, wet_depth: float) -> np.ndarray:
        return self.depth.valid & (self.depth.values >= wet_depth)


@dataclass(frozen=True, eq=False)
class SteadyLibrary:
    entries: tuple[LibraryEntry, ...]
    terrain_fingerprint: str

    def __post_init__(self):
        if not self.entries:
            raise LibraryError("a library needs at least one entry")
        levels = [e.gauge_level for e in self.entries]
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise LibraryError("entries must be strictly increasing in gauge level")
        object.__setattr__(self, "entries", tuple(self.entries))
        object.__setattr__(self, "_levels", np.array(levels))

    @property
    def gauge_levels(self) -> np.ndarray:
        return self._levels

    def __len__(self):
        return len(self.entries)

    def query(self, level: float) -> LibraryEntry:
        return self.entries[self.query_index(level)]

    def query_index(self, level: float) -> int:
        """Index of the entry whose gauge level is nearest; midpoints go low."""
        if not np.isfinite(level):
            raise ValueError(f"query level must be finite, got {level}")
        levels = self._levels
        hi = int(np.searchsorted(levels, level, side="left"))
        if hi == 0:
            return 0
        if hi == len(levels):
            return hi - 1
        lo = hi - 1
        # exact rationals: float subtraction can invent or hide a tie
        x = Fraction(float(level))
        if Fraction(float(levels[hi])) - x < x - Fraction(float(levels[lo])):
            return hi
        return lo


def query(library: SteadyLibrary, level: float) -> LibraryEntry:
    return library.query(level)


def collapse_entries(entries, tol: float = COLLAPSE_TOL) -> list[LibraryEntry]:
    """Sort by gauge level and merge runs closer than ``tol``.

    Each cluster keeps the member with the lowest inflow level.
    """
    ordered = sorted(entries, key=lambda e: (e.gauge_level, e.inflow_level))
    kept: list[LibraryEntry] = []
    cluster_start = None
    for e in ordered:
        if cluster_start is not None and e.gauge_level - cluster_start < tol:
            if e.inflow_level < kept[-1].inflow_level:
                kept[-1] = e
            continue
        kept.append(e)
        cluster_start = e.gauge_level
    return kept


def check_wet_area_monotone(library: SteadyLibrary, wet_depth: float = 0.05) -> bool:
    counts = [int(e.wet_mask(wet_depth).sum()) for e in library.entries]
    ok = all(b >= a for a, b in zip(counts, counts[1:]))
    if not ok:
        warnings.warn(
            f"wet area is not monotone across library entries: {counts}",
            RuntimeWarning,
            stacklevel=2,
        )
    return ok


def build_library(
    terrain: TerrainModel,
    params: SolverParams,
    inflow_levels,
    steady: SteadyCriteria,
    inlet_cells,
    outlet_cells=(),
    tiles: int = 1,
    workers: int = 1,
) -> SteadyLibrary:
    """Run one steady simulation per inflow level and index the results.

    ``workers`` > 1 runs levels concurrently; the result does not depend on
    it because entries are sorted afterwards.
    """
    levels = [float(x) for x in inflow_levels]
    if not levels:
        raise LibraryError("no inflow levels given")
    template = BoundaryCondition(levels[0], inlet_cells, outlet_cells)

    def simulate(level: float) -> LibraryEntry:
        try:
            res = run_to_steady(terrain, params, template.with_level(level), steady, tiles=tiles, workers=1)
        except SolverError as exc:
            raise LibraryBuildError(level, exc) from exc
        log.info(
            "inflow %.3f m -> gauge %.4f m (%d steps, mass error %.2e)",
            level, res.gauge_level, res.steps, res.mass_audit.relative_error,
        )
        return LibraryEntry(level, res.gauge_level, res.depth, res.steps, res.mass_audit.relative_error)

    unique = sorted(set(levels))
    if workers > 1 and len(unique) > 1:
        with ThreadPoolExecutor(min(workers, len(unique))) as pool:
            raw = list(pool.map(simulate, unique))
    else:
        raw = [simulate(level) for level in unique]

    library = SteadyLibrary(tuple(collapse_entries(raw)), terrain.fingerprint())
    check_wet_area_monotone(library)
    return library


def _depth_name(i: int) -> str:
    return f"depth_{i:04d}.asc"


def save_library(library: SteadyLibrary, directory, extra_files: dict | None = None) -> None:
    """Write manifest and depth grids; ``extra_files`` maps names to text."""
    directory = Path(directory)
    with atomic_write_dir(directory) as tmp:
        for name, text in (extra_files or {}).items():
            (tmp / name).write_text(text)
        records = []
        for i, e in enumerate(library.entries):
            write_ascii_grid(e.depth, tmp / _depth_name(i))
            records.append(
                {
                    "inflow_level": e.inflow_level,
                    "gauge_level": e.gauge_level,
                    "steps": e.steps,
                    "mass_error": e.mass_error,
                    "depth": _depth_name(i),
                }
            )
        manifest = {
            "format_version": FORMAT_VERSION,
            "terrain_fingerprint": library.terrain_fingerprint,
            "entries": records,
        }
        (tmp / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_library(directory, expected_fingerprint: str | None = None) -> SteadyLibrary:
    """Load a saved library; a fingerprint mismatch is a hard error."""
    directory = Path(directory)
    path = directory / MANIFEST
    try:
        manifest = json.loads(path.read_text())
    except FileNotFoundError:
        raise
    except json.JSONDecodeError as exc:
        raise LibraryError(f"{path}: invalid manifest ({exc})") from exc
    if manifest.get("format_version") != FORMAT_VERSION:
        raise LibraryError(f"{path}: unsupported format version {manifest.get('format_version')}")
    fingerprint = manifest["terrain_fingerprint"]
    if expected_fingerprint is not None and fingerprint != expected_fingerprint:
        raise FingerprintMismatch(
            f"library at {directory} was built for terrain {fingerprint[:12]}..., "
            f"current terrain is {expected_fingerprint[:12]}..."
        )
    entries = []
    for rec in manifest["entries"]:
        depth = read_ascii_grid(directory / rec["depth"])
        entries.append(
            LibraryEntry(
                float(rec["inflow_level"]),
                float(rec["gauge_level"]),
                depth,
                int(rec["steps"]),
                float(rec["mass_error"]),
            )
        )
    return SteadyLibrary(tuple(entries), fingerprint)
