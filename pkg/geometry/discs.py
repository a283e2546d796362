"""Disc geometry on the pixel lattice: membership and lens overlap areas."""

import math
from functools import lru_cache
from typing import Set

import numpy as np

from errors import PreconditionError
from storage.models import GridSpec, Pixel


@lru_cache(maxsize=None)
def disc_offsets(r: int) -> np.ndarray:
    """Integer offsets (di, dj) with di^2 + dj^2 <= r^2, shape (n, 2)."""
    span = np.arange(-r, r + 1)
    di, dj = np.meshgrid(span, span, indexing="ij")
    inside = di * di + dj * dj <= r * r
    offsets = np.column_stack([di[inside], dj[inside]])
    offsets.setflags(write=False)
    return offsets


@lru_cache(maxsize=None)
def disc_footprint(r: int) -> np.ndarray:
    """(2r+1, 2r+1) 0/1 mask of the integer disc of radius ``r``."""
    span = np.arange(-r, r + 1)
    di, dj = np.meshgrid(span, span, indexing="ij")
    mask = (di * di + dj * dj <= r * r).astype(np.float64)
    mask.setflags(write=False)
    return mask


def disc_pixels(center: Pixel, r: int, grid: GridSpec) -> Set[Pixel]:
    """Grid pixels within Euclidean distance ``r`` of ``center``, clipped to the grid."""
    grid.require(center)
    if r < 1:
        raise PreconditionError(f"disc radius must be >= 1, got {r}")
    ci, cj = center
    return {(ci + int(di), cj + int(dj)) for di, dj in disc_offsets(r)
            if grid.contains((ci + int(di), cj + int(dj)))}


def _lens(r1, r2, d):
    # Sum of the two circular segments cut by the radical line; requires
    # |r1 - r2| < d < r1 + r2.
    d1 = (r1 ** 2 - r2 ** 2 + d ** 2) / (2 * d)
    d2 = d - d1
    a1 = r1 ** 2 * np.arccos(np.clip(d1 / r1, -1.0, 1.0)) - d1 * np.sqrt(np.maximum(r1 ** 2 - d1 ** 2, 0.0))
    a2 = r2 ** 2 * np.arccos(np.clip(d2 / r2, -1.0, 1.0)) - d2 * np.sqrt(np.maximum(r2 ** 2 - d2 ** 2, 0.0))
    return a1 + a2


def overlap_area(r1, r2, d) -> np.ndarray:
    """Vectorised lens area for broadcastable radii and centre distances."""
    r1, r2, d = np.broadcast_arrays(np.asarray(r1, dtype=float),
                                    np.asarray(r2, dtype=float),
                                    np.asarray(d, dtype=float))
    out = np.zeros(d.shape, dtype=float)

    contained = d <= np.abs(r1 - r2)
    out[contained] = math.pi * np.minimum(r1, r2)[contained] ** 2

    partial = (~contained) & (d < r1 + r2)
    if np.any(partial):
        out[partial] = _lens(r1[partial], r2[partial], d[partial])
    return out


def disc_overlap_area(x1: Pixel, r1: float, x2: Pixel, r2: float) -> float:
    """Exact overlap area (pixel^2) of two continuous discs."""
    if not (r1 > 0 and r2 > 0):
        raise PreconditionError(f"disc radii must be positive, got {r1} and {r2}")
    d = math.hypot(x1[0] - x2[0], x1[1] - x2[1])
    return float(overlap_area(r1, r2, d))
