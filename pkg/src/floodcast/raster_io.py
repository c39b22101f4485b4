"""Georeferenced rasters and ESRI ASCII grid I/O.

Row 0 is the northern (top) row; world y decreases as the row index grows.
``GeoTransform.origin_x``/``origin_y`` locate the upper-left corner of cell
(0, 0), while the ASCII header stores the lower-left corner.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DEFAULT_NODATA = -9999.0

_HEADER_KEYS = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize")


class RasterFormatError(ValueError):
    """Malformed ASCII grid; ``lineno`` is 1-based."""

    def __init__(self, message: str, lineno: int | None = None, path=None):
        self.lineno = lineno
        self.path = path
        where = ""
        if path is not None:
            where = f"{path}:"
        if lineno is not None:
            where += f"{lineno}:"
        super().__init__(f"{where} {message}" if where else message)


class GeometryMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class GeoTransform:
    origin_x: float
    origin_y: float
    cell_size: float
    rows: int
    cols: int

    def __post_init__(self):
        if not (self.cell_size > 0 and math.isfinite(self.cell_size)):
            raise ValueError(f"cell_size must be positive, got {self.cell_size}")
        if self.rows < 1 or self.cols < 1:
            raise ValueError(f"grid must be at least 1x1, got {self.rows}x{self.cols}")
        if not (math.isfinite(self.origin_x) and math.isfinite(self.origin_y)):
            raise ValueError("origin must be finite")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    @property
    def yllcorner(self) -> float:
        return self.origin_y - self.rows * self.cell_size

    def cell_center(self, row: int, col: int) -> tuple[float, float]:
        return (
            self.origin_x + (col + 0.5) * self.cell_size,
            self.origin_y - (row + 0.5) * self.cell_size,
        )


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Grid:
    """Float64 raster. Cells equal to ``nodata`` are invalid."""

    geo: GeoTransform
    values: np.ndarray
    nodata: float = DEFAULT_NODATA

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.ndim == 1 and values.size == self.geo.rows * self.geo.cols:
            values = values.reshape(self.geo.shape)
        if values.shape != self.geo.shape:
            raise GeometryMismatchError(
                f"values shape {values.shape} does not match grid {self.geo.shape}"
            )
        if not math.isfinite(self.nodata):
            raise ValueError("nodata sentinel must be finite")
        bad = ~np.isfinite(values)
        if bad.any():
            r, c = np.argwhere(bad)[0]
            raise ValueError(f"non-finite value at cell ({r}, {c})")
        object.__setattr__(self, "values", _readonly(values))

    @property
    def shape(self) -> tuple[int, int]:
        return self.geo.shape

    @property
    def valid(self) -> np.ndarray:
        return self.values != self.nodata

    def __eq__(self, other):
        if not isinstance(other, Grid):
            return NotImplemented
        return (
            self.geo == other.geo
            and _same_bits(self.nodata, other.nodata)
            and np.array_equal(self.values.view(np.uint64), other.values.view(np.uint64))
        )

    __hash__ = None

    def with_values(self, values) -> Grid:
        return Grid(self.geo, values, self.nodata)


@dataclass(frozen=True, eq=False)
class MaskGrid:
    geo: GeoTransform
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=bool, copy=True)
        if values.ndim == 1 and values.size == self.geo.rows * self.geo.cols:
            values = values.reshape(self.geo.shape)
        if values.shape != self.geo.shape:
            raise GeometryMismatchError(
                f"mask shape {values.shape} does not match grid {self.geo.shape}"
            )
        object.__setattr__(self, "values", _readonly(values))

    @property
    def shape(self) -> tuple[int, int]:
        return self.geo.shape

    def count(self) -> int:
        return int(self.values.sum())

    def __eq__(self, other):
        if not isinstance(other, MaskGrid):
            return NotImplemented
        return self.geo == other.geo and np.array_equal(self.values, other.values)

    __hash__ = None

    @classmethod
    def full(cls, geo: GeoTransform, fill: bool = False) -> MaskGrid:
        return cls(geo, np.full(geo.shape, fill, dtype=bool))


def _same_bits(a: float, b: float) -> bool:
    return np.float64(a).view(np.uint64) == np.float64(b).view(np.uint64)


def check_same_geometry(*items) -> GeoTransform:
    geo = items[0].geo
    for item in items[1:]:
        if item.geo != geo:
            raise GeometryMismatchError(f"geometry mismatch: {geo} vs {item.geo}")
    return geo


def format_value(v: float) -> str:
    """Shortest text that parses back to exactly ``v``."""
    v = float(v)
    if v == 0.0:
        return "-0" if math.copysign(1.0, v) < 0 else "0"
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def _lower_left_y(geo: GeoTransform) -> float:
    # Pick a yllcorner that reproduces origin_y exactly on re-read; nudging a
    # few ulps is enough for any sane coordinate range.
    target = geo.origin_y
    span = geo.rows * geo.cell_size
    y = target - span
    for _ in range(64):
        back = y + span
        if back == target:
            return y
        y = np.nextafter(y, np.inf if back < target else -np.inf)
    return target - span


def write_ascii_grid(grid: Grid, path) -> None:
    geo = grid.geo
    nodata_token = format_value(grid.nodata)
    lines = [
        f"ncols {geo.cols}",
        f"nrows {geo.rows}",
        f"xllcorner {format_value(geo.origin_x)}",
        f"yllcorner {format_value(_lower_left_y(geo))}",
        f"cellsize {format_value(geo.cell_size)}",
        f"NODATA_value {nodata_token}",
    ]
    invalid = ~grid.valid
    for r in range(geo.rows):
        row = grid.values[r]
        tokens = [
            nodata_token if invalid[r, c] else format_value(row[c])
            for c in range(geo.cols)
        ]
        lines.append(" ".join(tokens))
    text = "\n".join(lines) + "\n"
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(text)


def _parse_number(token: str, lineno: int, path) -> float:
    try:
        value = float(token)
    except ValueError:
        raise RasterFormatError(f"non-numeric token {token!r}", lineno, path) from None
    if not math.isfinite(value):
        raise RasterFormatError(f"non-finite token {token!r}", lineno, path)
    return value


def read_ascii_grid(path) -> Grid:
    path = Path(path)
    with open(path, encoding="ascii") as fh:
        lines = fh.read().splitlines()

    header: dict[str, float] = {}
    lineno = 0
    expected = list(_HEADER_KEYS) + ["nodata_value"]
    for key in expected:
        # skip blank lines inside the header
        while lineno < len(lines) and not lines[lineno].strip():
            lineno += 1
        if lineno >= len(lines):
            if key == "nodata_value":
                break
            raise RasterFormatError(f"missing header key {key!r}", lineno, path)
        parts = lines[lineno].split()
        name = parts[0].lower()
        if name != key:
            if key == "nodata_value" and _looks_numeric(parts[0]):
                break
            raise RasterFormatError(
                f"expected header key {key!r}, found {parts[0]!r}", lineno + 1, path
            )
        if len(parts) != 2:
            raise RasterFormatError(f"malformed header line for {key!r}", lineno + 1, path)
        header[key] = _parse_number(parts[1], lineno + 1, path)
        lineno += 1

    for key in ("ncols", "nrows"):
        if not float(header[key]).is_integer() or header[key] < 1:
            raise RasterFormatError(f"{key} must be a positive integer", None, path)
    cols, rows = int(header["ncols"]), int(header["nrows"])
    cell = header["cellsize"]
    if cell <= 0:
        raise RasterFormatError("cellsize must be positive", None, path)
    nodata = header.get("nodata_value", DEFAULT_NODATA)

    values = np.empty(rows * cols, dtype=np.float64)
    n = 0
    last_line = lineno
    for i in range(lineno, len(lines)):
        tokens = lines[i].split()
        if not tokens:
            continue
        last_line = i + 1
        if n + len(tokens) > rows * cols:
            raise RasterFormatError(
                f"dimension mismatch: body has more than {rows * cols} values "
                f"({rows} rows x {cols} cols)",
                i + 1,
                path,
            )
        for tok in tokens:
            values[n] = _parse_number(tok, i + 1, path)
            n += 1
    if n != rows * cols:
        raise RasterFormatError(
            f"dimension mismatch: body has {n} values, header expects "
            f"{rows * cols} ({rows} rows x {cols} cols)",
            last_line,
            path,
        )

    origin_y = header["yllcorner"] + rows * cell
    geo = GeoTransform(header["xllcorner"], origin_y, cell, rows, cols)
    return Grid(geo, values.reshape(rows, cols), nodata)


def _looks_numeric(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


def read_mask(path) -> MaskGrid:
    """Read a 0/1 ASCII grid; any nonzero valid cell is True, nodata is False."""
    grid = read_ascii_grid(path)
    return MaskGrid(grid.geo, grid.valid & (grid.values != 0))


def write_mask(mask: MaskGrid, path) -> None:
    write_ascii_grid(Grid(mask.geo, mask.values.astype(np.float64)), path)


def world_to_cell(geo: GeoTransform, x: float, y: float) -> tuple[int, int] | None:
    """Cell containing world point (x, y), or None when outside the grid.

    Cells are half-open, ``[edge, edge + cell_size)``, measured from the
    upper-left origin along each axis.
    """
    dx = (x - geo.origin_x) / geo.cell_size
    dy = (geo.origin_y - y) / geo.cell_size
    if not (math.isfinite(dx) and math.isfinite(dy)):
        return None
    col = math.floor(dx)
    row = math.floor(dy)
    if 0 <= row < geo.rows and 0 <= col < geo.cols:
        return (row, col)
    return None


def atomic_write_dir(final: Path):
    """Context manager yielding a temp dir that replaces ``final`` on success."""
    return _AtomicDir(Path(final))


class _AtomicDir:
    def __init__(self, final: Path):
        self.final = final
        self.tmp = final.with_name(f".{final.name}.tmp-{os.getpid()}")

    def __enter__(self) -> Path:
        import shutil

        if self.tmp.exists():
            shutil.rmtree(self.tmp)
        self.tmp.mkdir(parents=True)
        return self.tmp

    def __exit__(self, exc_type, exc, tb):
        import shutil

        if exc_type is not None:
            shutil.rmtree(self.tmp, ignore_errors=True)
            return False
        if self.final.exists():
            old = self.final.with_name(f".{self.final.name}.old-{os.getpid()}")
            os.replace(self.final, old)
            os.replace(self.tmp, self.final)
            shutil.rmtree(old)
        else:
            self.final.parent.mkdir(parents=True, exist_ok=True)
            os.replace(self.tmp, self.final)
        return False
