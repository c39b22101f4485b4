"""Inertial shallow-water solver on a staggered raster grid.

Depth ``h`` lives at cell centers, unit-width discharge at faces:
``qx`` has shape (rows, cols + 1) and is positive toward +col (east),
``qy`` has shape (rows + 1, cols) and is positive toward +row (south).
Advection is dropped; gravity is explicit and Manning friction is
semi-implicit, so for each open face

    q' = (q - g * hf * dt * d(eta)/dx) / (1 + g * dt * n**2 * |q| / hf**(7/3))

with ``hf = max(eta_a, eta_b) - max(z_a, z_b)``.

Boundaries are level-driven: inlet cells are clamped to a water-surface
elevation, outlet cells on the grid perimeter drain freely using the adjacent
interior water-surface gradient, and every other perimeter or nodata face is
a wall.
"""
from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .raster_io import Grid, GeometryMismatchError
from .terrain import TerrainModel

log = logging.getLogger(__name__)

WORKERS_ENV = "FLOOD_WORKERS"


class SolverError(RuntimeError):
    pass


class SolverInstabilityError(SolverError):
    def __init__(self, cell, t):
        self.cell = cell
        self.t = t
        super().__init__(f"non-finite value at cell {cell}, t={t:.6g} s")


class SteadyStateNotReached(SolverError):
    def __init__(self, steps, residual):
        self.steps = steps
        self.residual = residual
        super().__init__(
            f"no steady state after {steps} steps (last window max |dh| = {residual:.3g} m)"
        )


@dataclass(frozen=True)
class SolverParams:
    g: float = 9.81
    cfl_alpha: float = 0.5
    h_dry: float = 1e-3
    max_dt: float = 10.0
    # weight of a face's own flux against its two axial neighbours;
    # 1.0 gives the plain inertial update
    theta: float = 1.0
    # cap on |q| / (hf * sqrt(g * hf)); None disables
    froude_max: float | None = None

    def __post_init__(self):
        if not self.g > 0:
            raise ValueError("g must be positive")
        if not 0 < self.cfl_alpha <= 1:
            raise ValueError("cfl_alpha must be in (0, 1]")
        if not self.h_dry > 0:
            raise ValueError("h_dry must be positive")
        if not self.max_dt > 0:
            raise ValueError("max_dt must be positive")
        if not 0 < self.theta <= 1:
            raise ValueError("theta must be in (0, 1]")
        if self.froude_max is not None and not self.froude_max > 0:
            raise ValueError("froude_max must be positive")


@dataclass(frozen=True)
class SteadyCriteria:
    epsilon: float = 1e-4
    window: int = 100
    max_steps: int = 1_000_000

    def __post_init__(self):
        if not self.epsilon > 0 or self.window < 1 or self.max_steps < 1:
            raise ValueError("invalid steady-state criteria")


@dataclass(frozen=True)
class BoundaryCondition:
    inflow_level: float
    inlet_cells: tuple[tuple[int, int], ...]
    outlet_cells: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        inlets = tuple(dict.fromkeys((int(r), int(c)) for r, c in self.inlet_cells))
        outlets = tuple(dict.fromkeys((int(r), int(c)) for r, c in self.outlet_cells))
        object.__setattr__(self, "inlet_cells", inlets)
        object.__setattr__(self, "outlet_cells", outlets)
        if set(inlets) & set(outlets):
            raise ValueError("inlet and outlet cells must be disjoint")
        if not math.isfinite(self.inflow_level):
            raise ValueError("inflow_level must be finite")

    def with_level(self, level: float) -> BoundaryCondition:
        return BoundaryCondition(level, self.inlet_cells, self.outlet_cells)


@dataclass
class SimulationState:
    h: np.ndarray
    qx: np.ndarray
    qy: np.ndarray
    t: float = 0.0

    @classmethod
    def dry(cls, shape) -> SimulationState:
        rows, cols = shape
        return cls(
            np.zeros((rows, cols)),
            np.zeros((rows, cols + 1)),
            np.zeros((rows + 1, cols)),
            0.0,
        )

    def copy(self) -> SimulationState:
        return SimulationState(self.h.copy(), self.qx.copy(), self.qy.copy(), self.t)

    def depth_grid(self, terrain: TerrainModel) -> Grid:
        elev = terrain.elevation
        return Grid(elev.geo, np.where(elev.valid, self.h, elev.nodata), elev.nodata)


@dataclass
class MassAudit:
    """Cumulative volumes in m^3."""

    initial_volume: float = 0.0
    final_volume: float = 0.0
    inflow: float = 0.0
    outflow: float = 0.0
    clamped: float = 0.0

    @property
    def error(self) -> float:
        return (self.final_volume - self.initial_volume) - (
            self.inflow - self.outflow + self.clamped
        )

    @property
    def throughput(self) -> float:
        return self.inflow + self.outflow

    @property
    def relative_error(self) -> float:
        if self.throughput > 0:
            return abs(self.error) / self.throughput
        return 0.0 if self.error == 0 else math.inf

    def as_dict(self) -> dict:
        return {
            "initial_volume": self.initial_volume,
            "final_volume": self.final_volume,
            "inflow": self.inflow,
            "outflow": self.outflow,
            "clamped": self.clamped,
            "error": self.error,
            "relative_error": self.relative_error,
        }


@dataclass(frozen=True)
class SteadyResult:
    depth: Grid
    gauge_level: float
    mass_audit: MassAudit
    steps: int
    t: float
    residual: float
    # final depths and face fluxes
    state: SimulationState | None = field(default=None, repr=False)


def stable_dt(state: SimulationState, cell_size: float, params: SolverParams) -> float:
    h_max = float(np.max(state.h)) if state.h.size else 0.0
    if h_max <= params.h_dry:
        return params.max_dt
    return min(params.max_dt, params.cfl_alpha * cell_size / math.sqrt(params.g * h_max))


# --------------------------------------------------------------------------
# Static per-terrain arrays


@dataclass(eq=False)
class _Domain:
    rows: int
    cols: int
    dx: float
    z: np.ndarray
    valid: np.ndarray
    n_face_x: np.ndarray
    n_face_y: np.ndarray
    open_x: np.ndarray
    open_y: np.ndarray
    # +1/-1 on outlet boundary faces giving the outward direction, else 0
    out_x: np.ndarray
    out_y: np.ndarray
    # ghost extrapolation allowed (edge cell has a valid inner neighbour)
    extrap_w: np.ndarray
    extrap_e: np.ndarray
    extrap_n: np.ndarray
    extrap_s: np.ndarray
    inlet_idx: tuple[np.ndarray, np.ndarray]
    inlet_z: np.ndarray
    inflow_level: float
    area: float = field(init=False)

    def __post_init__(self):
        self.area = self.dx * self.dx


def _build_domain(terrain: TerrainModel, bc: BoundaryCondition) -> _Domain:
    elev = terrain.elevation
    rows, cols = elev.shape
    valid = np.array(elev.valid)
    z = np.where(valid, elev.values, 0.0)
    n = terrain.manning_array

    for r, c in bc.inlet_cells + bc.outlet_cells:
        if not (0 <= r < rows and 0 <= c < cols):
            raise ValueError(f"boundary cell ({r}, {c}) lies outside the grid")
        if not valid[r, c]:
            raise ValueError(f"boundary cell ({r}, {c}) is a nodata cell")

    open_x = np.zeros((rows, cols + 1), dtype=bool)
    open_x[:, 1:-1] = valid[:, :-1] & valid[:, 1:]
    open_y = np.zeros((rows + 1, cols), dtype=bool)
    open_y[1:-1, :] = valid[:-1, :] & valid[1:, :]
    out_x = np.zeros((rows, cols + 1), dtype=np.int8)
    out_y = np.zeros((rows + 1, cols), dtype=np.int8)
    for r, c in bc.outlet_cells:
        on_edge = False
        if c == 0:
            open_x[r, 0] = True
            out_x[r, 0] = -1
            on_edge = True
        if c == cols - 1:
            open_x[r, cols] = True
            out_x[r, cols] = 1
            on_edge = True
        if r == 0:
            open_y[0, c] = True
            out_y[0, c] = -1
            on_edge = True
        if r == rows - 1:
            open_y[rows, c] = True
            out_y[rows, c] = 1
            on_edge = True
        if not on_edge:
            raise ValueError(f"outlet cell ({r}, {c}) is not on the grid perimeter")

    def face_n(a, b):
        return (a + b) * 0.5

    n_px = np.concatenate([n[:, :1], n, n[:, -1:]], axis=1)
    n_py = np.concatenate([n[:1, :], n, n[-1:, :]], axis=0)

    inlet = np.array(bc.inlet_cells, dtype=np.intp).reshape(-1, 2)
    inlet_idx = (inlet[:, 0], inlet[:, 1])
    return _Domain(
        rows=rows,
        cols=cols,
        dx=elev.geo.cell_size,
        z=z,
        valid=valid,
        n_face_x=face_n(n_px[:, :-1], n_px[:, 1:]),
        n_face_y=face_n(n_py[:-1, :], n_py[1:, :]),
        open_x=open_x,
        open_y=open_y,
        out_x=out_x,
        out_y=out_y,
        extrap_w=valid[:, 1] if cols > 1 else np.zeros(rows, bool),
        extrap_e=valid[:, -2] if cols > 1 else np.zeros(rows, bool),
        extrap_n=valid[1, :] if rows > 1 else np.zeros(cols, bool),
        extrap_s=valid[-2, :] if rows > 1 else np.zeros(cols, bool),
        inlet_idx=inlet_idx,
        inlet_z=z[inlet_idx],
        inflow_level=float(bc.inflow_level),
    )


# --------------------------------------------------------------------------
# Tiling


@dataclass(frozen=True)
class Tile:
    """Cells [r0, r1) x [c0, c1); owns the x-faces west of its cells, the
    y-faces north of them, and the far perimeter faces when on the edge."""

    r0: int
    r1: int
    c0: int
    c1: int
    fx1: int  # exclusive end of owned x-face columns
    fy1: int  # exclusive end of owned y-face rows


def _split(n: int, parts: int) -> list[int]:
    edges = [round(i * n / parts) for i in range(parts + 1)]
    return edges


def make_tiles(rows: int, cols: int, count: int) -> list[Tile]:
    """Split the grid into ``count`` rectangles (as square as the factors allow)."""
    if count < 1:
        raise ValueError("tile count must be >= 1")
    best = None
    for ty in range(1, count + 1):
        if count % ty:
            continue
        tx = count // ty
        if ty > rows or tx > cols:
            continue
        score = abs(rows / ty - cols / tx)
        if best is None or score < best[0]:
            best = (score, ty, tx)
    if best is None:
        raise ValueError(f"cannot split a {rows}x{cols} grid into {count} tiles")
    _, ty, tx = best
    redges, cedges = _split(rows, ty), _split(cols, tx)
    tiles = []
    for i in range(ty):
        for j in range(tx):
            r0, r1, c0, c1 = redges[i], redges[i + 1], cedges[j], cedges[j + 1]
            tiles.append(
                Tile(r0, r1, c0, c1, c1 + 1 if c1 == cols else c1, r1 + 1 if r1 == rows else r1)
            )
    return tiles


# --------------------------------------------------------------------------
# Kernels. Each evaluates the same per-face/per-cell expression whatever the
# window, so any tiling reproduces the single-tile result bit for bit.


class _Work:
    """Buffers shared by all tiles during one step."""

    def __init__(self, dom: _Domain):
        rows, cols = dom.rows, dom.cols
        self.eta_x = np.empty((rows, cols + 2))
        self.z_x = np.empty((rows, cols + 2))
        self.eta_y = np.empty((rows + 2, cols))
        self.z_y = np.empty((rows + 2, cols))
        self.qy_pad = np.zeros((rows + 1, cols + 2))
        self.qx_pad = np.zeros((rows + 2, cols + 1))
        # axial neighbours, edge-replicated
        self.qx_ax = np.empty((rows, cols + 3))
        self.qy_ax = np.empty((rows + 3, cols))
        self.qx_new = np.zeros((rows, cols + 1))
        self.qy_new = np.zeros((rows + 1, cols))
        self.h_new = np.empty((rows, cols))


def _fill_halos(dom: _Domain, work: _Work, h: np.ndarray, qx: np.ndarray, qy: np.ndarray):
    """Build ghost-padded surfaces; ghosts extrapolate the interior gradient."""
    eta = h + dom.z
    ex, zx = work.eta_x, work.z_x
    ex[:, 1:-1] = eta
    zx[:, 1:-1] = dom.z
    ex[:, 0] = np.where(dom.extrap_w, 2.0 * eta[:, 0] - eta[:, 1 % dom.cols], eta[:, 0])
    ex[:, -1] = np.where(dom.extrap_e, 2.0 * eta[:, -1] - eta[:, -2 % dom.cols], eta[:, -1])
    zx[:, 0] = dom.z[:, 0]
    zx[:, -1] = dom.z[:, -1]

    ey, zy = work.eta_y, work.z_y
    ey[1:-1, :] = eta
    zy[1:-1, :] = dom.z
    ey[0, :] = np.where(dom.extrap_n, 2.0 * eta[0, :] - eta[1 % dom.rows, :], eta[0, :])
    ey[-1, :] = np.where(dom.extrap_s, 2.0 * eta[-1, :] - eta[-2 % dom.rows, :], eta[-1, :])
    zy[0, :] = dom.z[0, :]
    zy[-1, :] = dom.z[-1, :]

    work.qy_pad[:, 1:-1] = qy
    work.qx_pad[1:-1, :] = qx
    work.qx_ax[:, 1:-1] = qx
    work.qx_ax[:, 0] = qx[:, 0]
    work.qx_ax[:, -1] = qx[:, -1]
    work.qy_ax[1:-1, :] = qy
    work.qy_ax[0, :] = qy[0, :]
    work.qy_ax[-1, :] = qy[-1, :]


def _face_update(q, q_lo, q_hi, eta_a, eta_b, z_a, z_b, q_orth, n_face, is_open, outward, dt, dx, p):
    hf = np.maximum(eta_a, eta_b) - np.maximum(z_a, z_b)
    wet = is_open & (hf > p.h_dry)
    q_new = np.zeros(hf.shape)
    if not wet.any():
        return q_new
    # only wet faces carry flux; gather them so dry floodplain costs nothing
    hf = hf[wet]
    qw = q[wet]
    slope = (eta_b[wet] - eta_a[wet]) / dx
    qo = q_orth[wet]
    n = n_face[wet]
    qnorm = np.sqrt(qw * qw + qo * qo)
    if p.theta != 1.0:
        qw = p.theta * qw + (1.0 - p.theta) * 0.5 * (q_lo[wet] + q_hi[wet])
    num = qw - p.g * hf * dt * slope
    den = 1.0 + p.g * dt * (n * n) * qnorm / (hf * hf * np.cbrt(hf))
    out = num / den
    if p.froude_max is not None:
        cap = p.froude_max * hf * np.sqrt(p.g * hf)
        out = np.clip(out, -cap, cap)
    # outlet faces may only drain
    direction = outward[wet]
    out = np.where(direction > 0, np.maximum(out, 0.0), out)
    out = np.where(direction < 0, np.minimum(out, 0.0), out)
    q_new[wet] = out
    return q_new


def _flux_tile(dom: _Domain, work: _Work, qx, qy, tile: Tile, dt: float, p: SolverParams):
    r0, r1, c0, fx1 = tile.r0, tile.r1, tile.c0, tile.fx1
    # x-faces j in [c0, fx1): cells j-1, j sit at padded columns j, j+1
    qy_orth = (
        work.qy_pad[r0:r1, c0:fx1]
        + work.qy_pad[r0:r1, c0 + 1 : fx1 + 1]
        + work.qy_pad[r0 + 1 : r1 + 1, c0:fx1]
        + work.qy_pad[r0 + 1 : r1 + 1, c0 + 1 : fx1 + 1]
    ) * 0.25
    work.qx_new[r0:r1, c0:fx1] = _face_update(
        qx[r0:r1, c0:fx1],
        work.qx_ax[r0:r1, c0:fx1],
        work.qx_ax[r0:r1, c0 + 2 : fx1 + 2],
        work.eta_x[r0:r1, c0:fx1],
        work.eta_x[r0:r1, c0 + 1 : fx1 + 1],
        work.z_x[r0:r1, c0:fx1],
        work.z_x[r0:r1, c0 + 1 : fx1 + 1],
        qy_orth,
        dom.n_face_x[r0:r1, c0:fx1],
        dom.open_x[r0:r1, c0:fx1],
        dom.out_x[r0:r1, c0:fx1],
        dt,
        dom.dx,
        p,
    )

    c1, fy1 = tile.c1, tile.fy1
    qx_orth = (
        work.qx_pad[r0:fy1, c0:c1]
        + work.qx_pad[r0:fy1, c0 + 1 : c1 + 1]
        + work.qx_pad[r0 + 1 : fy1 + 1, c0:c1]
        + work.qx_pad[r0 + 1 : fy1 + 1, c0 + 1 : c1 + 1]
    ) * 0.25
    work.qy_new[r0:fy1, c0:c1] = _face_update(
        qy[r0:fy1, c0:c1],
        work.qy_ax[r0:fy1, c0:c1],
        work.qy_ax[r0 + 2 : fy1 + 2, c0:c1],
        work.eta_y[r0:fy1, c0:c1],
        work.eta_y[r0 + 1 : fy1 + 1, c0:c1],
        work.z_y[r0:fy1, c0:c1],
        work.z_y[r0 + 1 : fy1 + 1, c0:c1],
        qx_orth,
        dom.n_face_y[r0:fy1, c0:c1],
        dom.open_y[r0:fy1, c0:c1],
        dom.out_y[r0:fy1, c0:c1],
        dt,
        dom.dx,
        p,
    )


def _mass_tile(dom: _Domain, work: _Work, h, tile: Tile, dt: float):
    r0, r1, c0, c1 = tile.r0, tile.r1, tile.c0, tile.c1
    qx, qy = work.qx_new, work.qy_new
    net = (qx[r0:r1, c0 + 1 : c1 + 1] - qx[r0:r1, c0:c1]) + (
        qy[r0 + 1 : r1 + 1, c0:c1] - qy[r0:r1, c0:c1]
    )
    work.h_new[r0:r1, c0:c1] = h[r0:r1, c0:c1] - dt * net / dom.dx


class _Stepper:
    """Runs steps for one domain with a fixed tiling."""

    def __init__(self, dom: _Domain, params: SolverParams, tiles: int = 1, workers: int | None = None):
        self.dom = dom
        self.params = params
        self.tiles = make_tiles(dom.rows, dom.cols, tiles)
        self.work = _Work(dom)
        if workers is None:
            workers = default_workers()
        workers = max(1, min(workers, len(self.tiles)))
        self.pool = ThreadPoolExecutor(workers) if workers > 1 else None

    def close(self):
        if self.pool is not None:
            self.pool.shutdown()
            self.pool = None

    def _for_tiles(self, fn):
        if self.pool is None:
            for tile in self.tiles:
                fn(tile)
        else:
            # list() acts as the barrier and re-raises worker exceptions
            list(self.pool.map(fn, self.tiles))

    def advance(self, state: SimulationState, dt: float, audit: MassAudit | None = None) -> SimulationState:
        dom, work, p = self.dom, self.work, self.params
        _fill_halos(dom, work, state.h, state.qx, state.qy)
        self._for_tiles(lambda t: _flux_tile(dom, work, state.qx, state.qy, t, dt, p))
        self._for_tiles(lambda t: _mass_tile(dom, work, state.h, t, dt))

        h_raw = work.h_new
        h = np.maximum(h_raw, 0.0)
        qx = work.qx_new.copy()
        qy = work.qy_new.copy()
        inlet_h = np.maximum(dom.inflow_level - dom.inlet_z, 0.0)
        before_reset = h[dom.inlet_idx]
        h[dom.inlet_idx] = inlet_h
        t = state.t + dt

        if not (np.isfinite(h).all() and np.isfinite(qx).all() and np.isfinite(qy).all()):
            raise SolverInstabilityError(_first_bad(h, qx, qy), t)

        if audit is not None:
            a = dom.area
            outflow = dt * dom.dx * (
                float(np.sum(qx[:, -1])) - float(np.sum(qx[:, 0]))
                + float(np.sum(qy[-1, :])) - float(np.sum(qy[0, :]))
            )
            reset = inlet_h - before_reset
            audit.inflow += a * float(np.sum(np.maximum(reset, 0.0)))
            audit.outflow += outflow - a * float(np.sum(np.minimum(reset, 0.0)))
            audit.clamped += a * float(np.sum(h - h_raw)) - a * float(np.sum(reset))
            audit.final_volume = a * float(np.sum(h))
        return SimulationState(h, qx, qy, t)


def _first_bad(h, qx, qy):
    for arr, name in ((h, "h"), (qx, "qx"), (qy, "qy")):
        bad = ~np.isfinite(arr)
        if bad.any():
            r, c = np.argwhere(bad)[0]
            return (name, int(r), int(c))
    return None


def default_workers() -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            log.warning("ignoring non-integer %s=%r", WORKERS_ENV, env)
    return os.cpu_count() or 1


def _check_state(state: SimulationState, terrain: TerrainModel):
    rows, cols = terrain.elevation.shape
    if (
        state.h.shape != (rows, cols)
        or state.qx.shape != (rows, cols + 1)
        or state.qy.shape != (rows + 1, cols)
    ):
        raise GeometryMismatchError(
            f"state arrays {state.h.shape}/{state.qx.shape}/{state.qy.shape} "
            f"do not match terrain {rows}x{cols}"
        )


def step(
    state: SimulationState,
    terrain: TerrainModel,
    params: SolverParams,
    bc: BoundaryCondition,
    dt: float,
    audit: MassAudit | None = None,
) -> SimulationState:
    """Advance one timestep. Pass a MassAudit to accumulate volume terms."""
    _check_state(state, terrain)
    stepper = _Stepper(_build_domain(terrain, bc), params, tiles=1, workers=1)
    return stepper.advance(state, dt, audit)


def initial_state(terrain: TerrainModel, bc: BoundaryCondition) -> SimulationState:
    """Dry domain with inlet cells filled to the inflow level."""
    state = SimulationState.dry(terrain.elevation.shape)
    dom = _build_domain(terrain, bc)
    state.h[dom.inlet_idx] = np.maximum(dom.inflow_level - dom.inlet_z, 0.0)
    return state


def run_to_steady(
    terrain: TerrainModel,
    params: SolverParams,
    bc: BoundaryCondition,
    steady: SteadyCriteria = SteadyCriteria(),
    tiles: int = 1,
    workers: int | None = None,
) -> SteadyResult:
    """Integrate from a dry start until depths stop changing.

    Every ``steady.window`` steps the depth field is compared with the one
    from the previous check; the run stops once the largest change is below
    ``steady.epsilon``.
    """
    dom = _build_domain(terrain, bc)
    state = initial_state(terrain, bc)
    audit = MassAudit()
    audit.initial_volume = audit.final_volume = dom.area * float(np.sum(state.h))
    stepper = _Stepper(dom, params, tiles=tiles, workers=workers)
    checkpoint = state.h.copy()
    residual = math.inf
    steps = 0
    try:
        while steps < steady.max_steps:
            dt = stable_dt(state, dom.dx, params)
            state = stepper.advance(state, dt, audit)
            steps += 1
            if steps % steady.window == 0:
                residual = float(np.max(np.abs(state.h - checkpoint)))
                if residual < steady.epsilon:
                    break
                checkpoint = state.h.copy()
        else:
            raise SteadyStateNotReached(steps, residual)
    finally:
        stepper.close()

    gr, gc = terrain.gauge_cell
    gauge_level = float(state.h[gr, gc] + dom.z[gr, gc])
    log.debug(
        "steady after %d steps (t=%.1f s, residual %.2e, mass error %.2e)",
        steps, state.t, residual, audit.relative_error,
    )
    return SteadyResult(
        depth=state.depth_grid(terrain),
        gauge_level=gauge_level,
        mass_audit=audit,
        steps=steps,
        t=state.t,
        residual=residual,
        state=state,
    )
