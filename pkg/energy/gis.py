"""Rasterize GIS occupancy polygons (buildings, water) onto the pixel grid."""

import json
import logging
import math
from typing import Any, Dict, List

import numpy as np
import shapely
from shapely.errors import ShapelyError
from shapely.geometry import shape
from shapely.ops import transform

from errors import DataError
from geometry.projection import lonlat_to_metres
from storage.models import GisRaster, GridSpec

logger = logging.getLogger(__name__)


def _to_grid_frame(geom, grid: GridSpec):
    return transform(lambda lon, lat, z=None: lonlat_to_metres(lon, lat, grid), geom)


def polygons_from_geojson(data: Dict[str, Any], source: str = "<geojson>") -> List:
    if data.get("type") == "FeatureCollection":
        geoms = [f.get("geometry") for f in data.get("features", [])]
    elif data.get("type") == "Feature":
        geoms = [data.get("geometry")]
    else:
        geoms = [data]

    polygons = []
    for k, g in enumerate(geoms):
        if g is None:
            continue
        try:
            geom = shape(g)
        except (KeyError, ValueError, TypeError, AttributeError, ShapelyError) as e:
            raise DataError(f"{source}: feature {k} is not a valid geometry ({e})") from None
        if geom.geom_type in ("Polygon", "MultiPolygon"):
            polygons.append(geom)
        else:
            logger.warning("%s: feature %d is a %s, ignored (only polygons occupy pixels)",
                           source, k, geom.geom_type)
    return polygons


def rasterize_polygons(polygons: List, grid: GridSpec) -> GisRaster:
    """Mark every pixel whose centre lies inside any polygon (lon/lat coordinates)."""
    occupancy = np.zeros(grid.shape, dtype=np.uint8)
    res = grid.resolution
    for poly in polygons:
        local = _to_grid_frame(poly, grid)
        min_e, min_n, max_e, max_n = local.bounds
        # candidate pixel index ranges (zero-based) from the polygon bounds
        c0 = max(int(math.floor(min_e / res - 0.5)), 0)
        c1 = min(int(math.ceil(max_e / res + 0.5)), grid.width)
        r0 = max(int(math.floor(min_n / res - 0.5)), 0)
        r1 = min(int(math.ceil(max_n / res + 0.5)), grid.height)
        if c0 >= c1 or r0 >= r1:
            continue
        east = (np.arange(c0, c1) + 0.5) * res
        north = (np.arange(r0, r1) + 0.5) * res
        ee, nn = np.meshgrid(east, north)
        inside = shapely.contains_xy(local, ee, nn)
        occupancy[r0:r1, c0:c1] |= inside.astype(np.uint8)
    logger.info("rasterized %d polygons: %d of %d pixels occupied",
                len(polygons), int(occupancy.sum()), occupancy.size)
    return GisRaster(grid=grid, occupancy=occupancy)


def rasterize_geojson(path: str, grid: GridSpec) -> GisRaster:
    try:
        with open(path, "r") as f:
            data = json.load(f)
    except OSError as e:
        raise DataError(f"cannot read GIS file {path}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise DataError(f"GIS file {path} is not valid JSON: {e.msg} (line {e.lineno})") from None
    return rasterize_polygons(polygons_from_geojson(data, source=path), grid)
