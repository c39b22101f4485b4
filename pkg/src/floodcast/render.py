"""Render a risk map as a PNG: three tinted tiers over a hillshaded DEM."""
from __future__ import annotations

import numpy as np
from PIL import Image

from .raster_io import Grid, MaskGrid
from .risk import RiskMap

# RGB tints, documented in the README
TIER_COLORS = {
    "some": (255, 221, 87),
    "higher": (255, 140, 0),
    "highest": (200, 30, 30),
}
TRUTH_OUTLINE = (0, 200, 255)
NODATA_COLOR = (255, 255, 255)
TINT_ALPHA = 0.6


def hillshade(dem: Grid, azimuth: float = 315.0, altitude: float = 45.0) -> np.ndarray:
    """Lambertian hillshade in [0, 1]; nodata cells get 1."""
    z = np.where(dem.valid, dem.values, np.nan)
    fill = np.nanmean(z) if np.isfinite(z).any() else 0.0
    z = np.where(np.isnan(z), fill, z)
    if min(z.shape) < 2:
        return np.where(dem.valid, 0.8, 1.0)
    dzdr, dzdc = np.gradient(z, dem.geo.cell_size)
    # rows run south, so the northward gradient is -dz/drow
    slope = np.arctan(np.hypot(dzdc, dzdr))
    aspect = np.arctan2(-dzdr, -dzdc)
    az = np.deg2rad(360.0 - azimuth + 90.0)
    alt = np.deg2rad(altitude)
    shade = np.sin(alt) * np.cos(slope) + np.cos(alt) * np.sin(slope) * np.cos(az - aspect)
    return np.where(dem.valid, np.clip(shade, 0.0, 1.0), 1.0)


def _outline(mask: np.ndarray) -> np.ndarray:
    pad = np.pad(mask, 1, mode="constant")
    interior = pad[:-2, 1:-1] & pad[2:, 1:-1] & pad[1:-1, :-2] & pad[1:-1, 2:]
    return mask & ~interior


def render_risk(risk: RiskMap, dem: Grid, truth: MaskGrid | None = None, scale: int = 1) -> Image.Image:
    shade = hillshade(dem)
    base = 0.35 + 0.65 * shade
    rgb = np.repeat(base[:, :, None] * 255.0, 3, axis=2)
    for tier in ("some", "higher", "highest"):
        m = getattr(risk, tier).values
        color = np.array(TIER_COLORS[tier], dtype=np.float64)
        rgb[m] = (1.0 - TINT_ALPHA) * rgb[m] + TINT_ALPHA * color
    rgb[~dem.valid] = NODATA_COLOR
    if truth is not None:
        rgb[_outline(truth.values)] = TRUTH_OUTLINE
    img = Image.fromarray(np.round(rgb).astype(np.uint8), mode="RGB")
    if scale > 1:
        img = img.resize((img.width * scale, img.height * scale), Image.NEAREST)
    return img


def save_png(img: Image.Image, path) -> None:
    # no metadata chunks, so identical pixels give identical bytes
    img.save(path, format="PNG", optimize=False)
