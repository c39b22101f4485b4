"""``flood`` command line: one subcommand per pipeline stage.

Exit codes: 0 success, 1 validation error, 2 numerical failure, 3 I/O error.
``FLOOD_WORKERS`` overrides the configured worker count; ``--workers``
overrides both.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, PipelineConfig, load_config
from .evaluation import aggregate, evaluate, reports_to_csv
from .library import LibraryBuildError, build_library, load_library, save_library
from .raster_io import (
    MaskGrid,
    atomic_write_dir,
    check_same_geometry,
    read_ascii_grid,
    read_mask,
    write_ascii_grid,
)
from .render import render_risk, save_png
from .risk import ForecastInput, forecast_risk, read_risk_map, write_risk_map
from .solver import WORKERS_ENV, SolverError, default_workers
from .terrain import TerrainModel, flatten_riverbed, locate_gauge
from .thresholds import fit_thresholds, load_observations, load_thresholds, predict, save_thresholds

log = logging.getLogger("floodcast")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _require(path: Path | None, what: str) -> Path:
    if path is None:
        raise ConfigError(f"{what} is not configured")
    if not path.exists():
        raise FileNotFoundError(f"{what} not found: {path}")
    return path


def _load_terrain(cfg: PipelineConfig) -> TerrainModel:
    dem = read_ascii_grid(_require(cfg.dem, "DEM"))
    mask = read_mask(_require(cfg.riverbed, "riverbed mask"))
    check_same_geometry(dem, mask)
    if isinstance(cfg.manning, Path):
        manning = read_ascii_grid(_require(cfg.manning, "Manning grid"))
    else:
        manning = cfg.manning
    flat = flatten_riverbed(dem, mask, cfg.inlet_elev, cfg.outlet_elev, cfg.flow_axis)
    gauge = locate_gauge(dem.geo, *cfg.gauge_xy, mask)
    return TerrainModel(flat, mask, manning, gauge)


def boundary_cells(cfg: PipelineConfig, terrain: TerrainModel):
    """Resolve ``auto`` inlets (first riverbed line) and outlets (last grid line)."""
    m = terrain.riverbed.values
    valid = terrain.elevation.valid
    axis = 0 if cfg.flow_axis == "row" else 1
    if cfg.inlets == "auto":
        first = int(np.nonzero(m.any(axis=1 - axis))[0][0])
        line = m[first] if axis == 0 else m[:, first]
        inlets = [(first, int(j)) if axis == 0 else (int(j), first) for j in np.nonzero(line)[0]]
    else:
        inlets = cfg.inlets
    if cfg.outlets == "auto":
        last = terrain.geo.shape[axis] - 1
        line = valid[last] if axis == 0 else valid[:, last]
        outlets = [(last, int(j)) if axis == 0 else (int(j), last) for j in np.nonzero(line)[0]]
    else:
        outlets = cfg.outlets
    return inlets, outlets


def _workers(cfg: PipelineConfig, args) -> int:
    # flag, then environment, then config, then CPU count
    if getattr(args, "workers", None):
        return args.workers
    if os.environ.get(WORKERS_ENV) or not cfg.workers:
        return default_workers()
    return cfg.workers


def cmd_flatten(cfg: PipelineConfig, args) -> None:
    terrain = _load_terrain(cfg)
    out = Path(args.out) if args.out else cfg.base / "dem_conditioned.asc"
    tmp = out.with_name(f".{out.name}.tmp")
    write_ascii_grid(terrain.elevation, tmp)
    tmp.replace(out)
    log.info("conditioned DEM written to %s (gauge cell %s)", out, terrain.gauge_cell)


def cmd_build(cfg: PipelineConfig, args) -> None:
    terrain = _load_terrain(cfg)
    if not cfg.library_levels:
        raise ConfigError("library.levels is empty")
    inlets, outlets = boundary_cells(cfg, terrain)
    library = build_library(
        terrain,
        cfg.solver,
        cfg.library_levels,
        cfg.steady,
        inlets,
        outlets,
        tiles=cfg.tiles,
        workers=_workers(cfg, args),
    )
    report = {
        "terrain_fingerprint": library.terrain_fingerprint,
        "gauge_cell": list(terrain.gauge_cell),
        "requested_levels": cfg.library_levels,
        "entries": [
            {
                "inflow_level": e.inflow_level,
                "gauge_level": e.gauge_level,
                "steps": e.steps,
                "mass_error": e.mass_error,
                "wet_cells": int(e.wet_mask(cfg.forecast.wet_depth).sum()),
            }
            for e in library.entries
        ],
    }
    out = Path(args.out) if args.out else cfg.library_dir
    save_library(library, out, {"build_report.json": _dump_json(report)})
    log.info("library with %d entries written to %s", len(library), out)


def cmd_train(cfg: PipelineConfig, args) -> None:
    stack = load_observations(_require(cfg.observations, "observation manifest"))
    field = fit_thresholds(stack)
    out = Path(args.out) if args.out else cfg.thresholds_dir
    if out is None:
        raise ConfigError("paths.thresholds is not configured and --out was not given")
    save_thresholds(field, out)
    log.info("thresholds from %d snapshots written to %s", len(stack.snapshots), out)


def cmd_forecast(cfg: PipelineConfig, args) -> None:
    if args.level is None:
        raise ConfigError("forecast needs --level")
    terrain = _load_terrain(cfg)
    library = load_library(_require(cfg.library_dir, "library"), terrain.fingerprint())
    model = None
    if cfg.thresholds_dir is not None:
        field = load_thresholds(_require(cfg.thresholds_dir, "threshold field"))
        if field.geo != terrain.geo:
            raise ConfigError("threshold field geometry differs from the DEM")
        model = predict(field, args.level)
    else:
        log.warning("no threshold field configured; using simulation tiers only")
    fp = cfg.forecast
    seed = fp.seed if args.seed is None else args.seed
    fc = ForecastInput(args.level, fp.sigma, fp.n_samples, seed)
    risk = forecast_risk(library, model, fc, fp.wet_depth, fp.cutoffs)

    meta = {
        "level": fc.level,
        "sigma": fc.sigma,
        "n_samples": fc.n_samples,
        "seed": fc.seed,
        "wet_depth": fp.wet_depth,
        "cutoffs": list(fp.cutoffs),
        "terrain_fingerprint": library.terrain_fingerprint,
        "fused_with_thresholds": model is not None,
        "cells": {k: int(getattr(risk, k).count()) for k in ("some", "higher", "highest")},
    }
    out = Path(args.out) if args.out else cfg.forecast_dir
    with atomic_write_dir(out) as tmp:
        write_risk_map(risk, tmp)
        save_png(render_risk(risk, terrain.elevation), tmp / "risk.png")
        (tmp / "forecast.json").write_text(_dump_json(meta))
    log.info("forecast for %.3f m written to %s", fc.level, out)


def _truth_mask(path: Path) -> MaskGrid:
    g = read_ascii_grid(_require(path, "truth raster"))
    return MaskGrid(g.geo, g.valid & (g.values != 0))


def cmd_evaluate(cfg: PipelineConfig, args) -> None:
    forecasts = args.forecast or [str(cfg.forecast_dir)]
    truths = args.truth or []
    if len(forecasts) != len(truths):
        raise ConfigError(f"got {len(forecasts)} forecast dirs but {len(truths)} truth rasters")
    if args.valid and len(args.valid) != len(truths):
        raise ConfigError("--valid must be given once per truth raster")
    rows = []
    for i, (fdir, tpath) in enumerate(zip(forecasts, truths)):
        risk = read_risk_map(_require(Path(fdir), "forecast directory"))
        valid = read_mask(_require(Path(args.valid[i]), "valid mask")) if args.valid else None
        rows.append((Path(fdir).name or f"event{i}", evaluate(risk, _truth_mask(Path(tpath)), valid)))
    out = Path(args.out) if args.out else cfg.base / "evaluation"
    with atomic_write_dir(out) as tmp:
        if len(rows) == 1:
            (tmp / "report.txt").write_text(rows[0][1].to_text())
        else:
            for i, (name, rep) in enumerate(rows):
                (tmp / f"report_{i:03d}_{name}.txt").write_text(rep.to_text())
        (tmp / "reports.csv").write_text(reports_to_csv(rows))
        agg = aggregate([r for _, r in rows], cfg.weighting)
        (tmp / "aggregate.txt").write_text(f"weighting: {cfg.weighting}\n" + agg.to_text())
    print(agg.to_text(), end="")


def cmd_render(cfg: PipelineConfig, args) -> None:
    fdir = Path(args.forecast[0]) if args.forecast else cfg.forecast_dir
    risk = read_risk_map(_require(fdir, "forecast directory"))
    dem = read_ascii_grid(_require(cfg.dem, "DEM"))
    truth = _truth_mask(Path(args.truth[0])) if args.truth else None
    img = render_risk(risk, dem, truth, scale=args.scale)
    out = Path(args.out) if args.out else fdir.with_name(fdir.name + ".png")
    tmp = out.with_name(f".{out.name}.tmp")
    save_png(img, tmp)
    tmp.replace(out)
    log.info("image written to %s", out)


COMMANDS = {
    "flatten": cmd_flatten,
    "build": cmd_build,
    "train": cmd_train,
    "forecast": cmd_forecast,
    "evaluate": cmd_evaluate,
    "render": cmd_render,
}


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flood", description="Steady-library flood forecasting pipeline.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="pipeline YAML file")
        p.add_argument("--out", help="output path, overriding the config")
        if name in ("build",):
            p.add_argument("--workers", type=int, help="parallel library simulations")
        if name == "forecast":
            p.add_argument("--level", type=float, help="forecast gauge level in metres")
            p.add_argument("--seed", type=_u64, help="sampling seed")
        if name in ("evaluate", "render"):
            p.add_argument("--forecast", action="append", help="forecast directory (repeatable)")
            p.add_argument("--truth", action="append", help="truth wet raster (repeatable)")
        if name == "evaluate":
            p.add_argument("--valid", action="append", help="valid-pixel mask per truth raster")
        if name == "render":
            p.add_argument("--scale", type=int, default=1, help="integer upscaling factor")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load_config(args.config)
        COMMANDS[args.command](cfg, args)
    except (SolverError, LibraryBuildError, FloatingPointError) as exc:
        print(f"flood {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"flood {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, KeyError) as exc:
        print(f"flood {args.command}: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
