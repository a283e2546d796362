"""Local equirectangular projection between WGS84 and the pixel grid.

Footprints are city-block scale, so a flat projection about the grid origin
stays well inside one pixel of a geodesic one.
"""

import math
from typing import Tuple

import numpy as np

import config
from errors import OutOfGridError
from storage.models import GeoPoint, GridSpec, Pixel


def lonlat_to_metres(lon, lat, grid: GridSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorised (east, north) metres of lon/lat arrays relative to the grid origin."""
    lat0 = math.radians(grid.origin.lat)
    east = config.EARTH_RADIUS * math.cos(lat0) * np.radians(np.asarray(lon, dtype=float) - grid.origin.lon)
    north = config.EARTH_RADIUS * np.radians(np.asarray(lat, dtype=float) - grid.origin.lat)
    return east, north


def to_metres(point: GeoPoint, grid: GridSpec) -> Tuple[float, float]:
    """(east, north) metres of ``point`` relative to the grid origin."""
    east, north = lonlat_to_metres(point.lon, point.lat, grid)
    return float(east), float(north)


def to_geo(east: float, north: float, grid: GridSpec) -> GeoPoint:
    lat0 = math.radians(grid.origin.lat)
    lat = grid.origin.lat + math.degrees(north / config.EARTH_RADIUS)
    lon = grid.origin.lon + math.degrees(east / (config.EARTH_RADIUS * math.cos(lat0)))
    return GeoPoint(lat, lon)


def in_footprint(east: float, north: float, grid: GridSpec) -> bool:
    width_m, height_m = grid.extent
    return 0.0 <= east < width_m and 0.0 <= north < height_m


def metres_to_pixel(east: float, north: float, grid: GridSpec) -> Pixel:
    if not in_footprint(east, north, grid):
        raise OutOfGridError(
            f"planar point ({east:.3f} m E, {north:.3f} m N) outside the "
            f"{grid.extent[0]:.2f} x {grid.extent[1]:.2f} m grid footprint")
    i = 1 + int(math.floor(north / grid.resolution))
    j = 1 + int(math.floor(east / grid.resolution))
    # floor of a value within one ulp of the upper edge
    return min(i, grid.height), min(j, grid.width)


def pixel_to_metres(pixel: Pixel, grid: GridSpec) -> Tuple[float, float]:
    """Centre of ``pixel`` in planar metres."""
    grid.require(pixel)
    i, j = pixel
    return (j - 0.5) * grid.resolution, (i - 0.5) * grid.resolution


def project(point: GeoPoint, grid: GridSpec) -> Pixel:
    """Pixel containing ``point``; raises OutOfGridError outside the footprint."""
    east, north = to_metres(point, grid)
    try:
        return metres_to_pixel(east, north, grid)
    except OutOfGridError:
        raise OutOfGridError(
            f"point (lat={point.lat}, lon={point.lon}) projects to "
            f"({east:.3f} m E, {north:.3f} m N), outside the grid footprint") from None


def unproject(pixel: Pixel, grid: GridSpec) -> GeoPoint:
    """Geographic position of the centre of ``pixel``."""
    east, north = pixel_to_metres(pixel, grid)
    return to_geo(east, north, grid)


def grid_from_config(cfg) -> GridSpec:
    g = cfg.grid
    return GridSpec(origin=GeoPoint(g.origin_lat, g.origin_lon),
                    height=g.height, width=g.width, resolution=g.resolution)
