"""Static unary energy map built from ray intersections and GIS occupancy.

Each intersection spreads (w1 * s1 + w2 * s2) of mass with a Gaussian whose
width grows for close-range detections; the GIS raster adds w3 on occupied
pixels. Low values mark favourable object locations.
"""

import logging
import math
from functools import lru_cache
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.signal import fftconvolve

import config
from errors import ConfigurationError, PreconditionError
from geometry.discs import disc_footprint, disc_offsets
from storage.models import EnergyMap, EnergyWeights, GisRaster, GridSpec, Intersection, Pixel

logger = logging.getLogger(__name__)


def intersection_scores(inter: Intersection) -> Tuple[float, float]:
    """(confidence score s1, depth-consistency score s2)."""
    s1 = inter.c1 * inter.c2
    s2 = abs(inter.d1 - inter.delta1) + abs(inter.d2 - inter.delta2)
    return s1, s2


def kernel_sigma(d1: float, d2: float, kernel_scale: float) -> float:
    """Kernel width in pixels, floored at KERNEL_SIGMA_MIN."""
    if not (d1 > 0 and d2 > 0):
        raise PreconditionError(f"depth estimates must be positive, got {d1} and {d2}")
    return max(kernel_scale * (1.0 / d1 + 1.0 / d2), config.KERNEL_SIGMA_MIN)


@lru_cache(maxsize=4096)
def gaussian_kernel(sigma: float) -> np.ndarray:
    """Discrete Gaussian truncated at ceil(3 sigma), renormalised to unit mass."""
    radius = int(math.ceil(config.KERNEL_TRUNCATE * sigma))
    span = np.arange(-radius, radius + 1, dtype=float)
    g = np.exp(-0.5 * (span / sigma) ** 2)
    kernel = np.outer(g, g)
    kernel /= kernel.sum()
    kernel.setflags(write=False)
    return kernel


def splat(acc: np.ndarray, inter: Intersection, weights: EnergyWeights) -> np.ndarray:
    """Add one intersection's weighted kernel to ``acc`` in place, clipping at the border."""
    h, w = acc.shape
    i, j = inter.pixel
    if not (1 <= i <= h and 1 <= j <= w):
        raise PreconditionError(f"intersection pixel {inter.pixel} outside the {h}x{w} accumulator")

    s1, s2 = intersection_scores(inter)
    amplitude = weights.w1 * s1 + weights.w2 * s2
    kernel = gaussian_kernel(kernel_sigma(inter.d1, inter.d2, weights.kernel_scale))
    k = kernel.shape[0] // 2

    # zero-based window of the kernel that lands inside the grid
    r0, c0 = i - 1 - k, j - 1 - k
    top, left = max(r0, 0), max(c0, 0)
    bottom, right = min(r0 + kernel.shape[0], h), min(c0 + kernel.shape[1], w)
    acc[top:bottom, left:right] += amplitude * kernel[top - r0:bottom - r0, left - c0:right - c0]
    return acc


def build_energy_map(intersections: Sequence[Intersection], gis: GisRaster,
                     weights: EnergyWeights, grid: Optional[GridSpec] = None) -> EnergyMap:
    """D = sum_k (w1 s1 + w2 s2) G_k * M_k + w3 R.

    ``grid`` is the grid the intersections were computed on; it must equal
    the GIS raster's grid.
    """
    if grid is not None and grid != gis.grid:
        raise ConfigurationError(f"intersection grid {grid} does not match GIS grid {gis.grid}")
    grid = gis.grid

    acc = np.zeros(grid.shape, dtype=np.float64)
    for inter in sorted(intersections, key=lambda x: (x.pixel, x.c1, x.c2, x.d1, x.d2, x.delta1, x.delta2)):
        if not grid.contains(inter.pixel):
            raise ConfigurationError(f"intersection at {inter.pixel} lies outside grid {grid.shape}")
        splat(acc, inter, weights)

    acc += weights.w3 * gis.occupancy.astype(np.float64)
    logger.info("energy map %dx%d from %d intersections: min %.3f, max %.3f",
                grid.height, grid.width, len(intersections), acc.min(), acc.max())
    return EnergyMap(grid=grid, values=acc)


def unary_energy(energy: EnergyMap, x: Pixel, r: int) -> float:
    """U(x, r): sum of D over the clipped integer disc of radius ``r`` at ``x``."""
    energy.grid.require(x)
    offsets = disc_offsets(r)
    rows = offsets[:, 0] + (x[0] - 1)
    cols = offsets[:, 1] + (x[1] - 1)
    h, w = energy.values.shape
    inside = (rows >= 0) & (rows < h) & (cols >= 0) & (cols < w)
    return float(energy.values[rows[inside], cols[inside]].sum())


def unary_table(energy: EnergyMap, r: int) -> np.ndarray:
    """U(x, r) for every pixel x, zero-padded at the border (h, w)."""
    return fftconvolve(energy.values, disc_footprint(r), mode="same")


def empty_gis(grid: GridSpec) -> GisRaster:
    return GisRaster(grid=grid, occupancy=np.zeros(grid.shape, dtype=np.uint8))


def weights_from_config(cfg) -> EnergyWeights:
    w = cfg.weights
    return EnergyWeights(w1=w.w1, w2=w.w2, w3=w.w3, alpha=w.alpha, kernel_scale=w.kernel_scale)