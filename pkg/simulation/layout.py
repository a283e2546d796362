"""Synthetic street layout: ground-truth street lights, cameras and building blocks.

Streets form a rectilinear grid of ``block_size`` x ``block_depth`` blocks.
Lights stand on the north kerb of the east-west streets, OBJECT_SPACING apart
and at least CROSSING_CLEARANCE from any north-south centreline, so no light
sits in a crossing or next to a light of the perpendicular street. Cameras
sit on every centreline at CAMERA_SPACING intervals. Both are jittered along
their street. The blocks between streets, inset from the centrelines, are
buildings for the GIS layer.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Tuple

import numpy as np
from scipy.spatial import cKDTree

import config
from errors import ConfigurationError
from geometry.projection import to_geo
from storage.models import Camera, GridSpec, GroundTruthObject

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Layout:
    objects: List[GroundTruthObject]
    cameras: List[Camera]
    buildings: Dict[str, Any]  # GeoJSON FeatureCollection of building polygons


def street_lines(area: GridSpec, block_size: float,
                 block_depth: float = config.BLOCK_DEPTH) -> Tuple[np.ndarray, np.ndarray]:
    """Centreline offsets (metres) of east-west streets (north values) and north-south streets (east values)."""
    width_m, height_m = area.extent
    north = np.arange(block_depth / 2, height_m, block_depth)
    east = np.arange(block_size / 2, width_m, block_size)
    return north, east


def _spaced(lo: float, hi: float, spacing: float) -> np.ndarray:
    """As many points as fit ``spacing`` apart in [lo, hi], centred in the interval."""
    k = int(np.floor((hi - lo) / spacing)) + 1
    return (lo + hi) / 2 + (np.arange(k) - (k - 1) / 2) * spacing


def _kerb_positions(length: float, crossings: np.ndarray, spacing: float, clearance: float) -> np.ndarray:
    """Along-street positions on [0, length] that keep ``clearance`` from every crossing."""
    bounds = [0.0]
    for c in crossings:
        bounds += [c - clearance, c + clearance]
    bounds.append(length)
    free = [(lo, hi) for lo, hi in zip(bounds[::2], bounds[1::2]) if hi >= lo]
    if not free:
        return np.empty(0)
    return np.concatenate([_spaced(lo, hi, spacing) for lo, hi in free])


def _object_slots(area: GridSpec, block_size: float, block_depth: float) -> np.ndarray:
    width_m, height_m = area.extent
    north_lines, east_lines = street_lines(area, block_size, block_depth)
    along = _kerb_positions(width_m, east_lines, config.OBJECT_SPACING, config.CROSSING_CLEARANCE)
    slots = [(s, y + config.KERB_OFFSET, 1.0, 0.0)
             for y in north_lines if y + config.KERB_OFFSET < height_m
             for s in along]
    return np.array(slots, dtype=float).reshape(-1, 4)


def _camera_slots(area: GridSpec, block_size: float, block_depth: float) -> np.ndarray:
    width_m, height_m = area.extent
    north_lines, east_lines = street_lines(area, block_size, block_depth)
    slots = [(s, y, 1.0, 0.0) for y in north_lines
             for s in np.arange(config.CAMERA_SPACING / 2, width_m, config.CAMERA_SPACING)]
    slots += [(x, s, 0.0, 1.0) for x in east_lines
              for s in np.arange(config.CAMERA_SPACING / 2, height_m, config.CAMERA_SPACING)]
    return np.array(slots, dtype=float).reshape(-1, 4)


def _place(area: GridSpec, base: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    jitter = rng.uniform(-config.POSITION_JITTER, config.POSITION_JITTER, size=len(base))
    pos = base[:, :2] + jitter[:, None] * base[:, 2:]
    width_m, height_m = area.extent
    # keep jittered points strictly inside the footprint
    pos[:, 0] = np.clip(pos[:, 0], 0.0, np.nextafter(width_m, 0))
    pos[:, 1] = np.clip(pos[:, 1], 0.0, np.nextafter(height_m, 0))
    return pos


def _camera_order(slots: np.ndarray, objects: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Random slot order, cameras that can see a light first."""
    order = rng.permutation(len(slots))
    reach = config.OBJECT_SPACING - 2 * config.POSITION_JITTER
    dist, _ = cKDTree(objects).query(slots[order, :2])
    return order[np.argsort(dist >= reach, kind="stable")]


def _buildings(area: GridSpec, block_size: float, block_depth: float) -> Dict[str, Any]:
    width_m, height_m = area.extent
    north_lines, east_lines = street_lines(area, block_size, block_depth)

    def _spans(lines, extent):
        edges = [(-np.inf, lines[0])] if len(lines) else []
        edges += list(zip(lines[:-1], lines[1:]))
        if len(lines):
            edges.append((lines[-1], np.inf))
        spans = []
        for lo, hi in edges:
            a = 0.0 if np.isinf(lo) else lo + config.BUILDING_INSET
            b = extent if np.isinf(hi) else hi - config.BUILDING_INSET
            if b > a:
                spans.append((a, b))
        return spans

    features = []
    for n0, n1 in _spans(north_lines, height_m):
        for e0, e1 in _spans(east_lines, width_m):
            ring = [to_geo(e, n, area) for e, n in ((e0, n0), (e1, n0), (e1, n1), (e0, n1), (e0, n0))]
            features.append({
                "type": "Feature",
                "properties": {"kind": "building"},
                "geometry": {"type": "Polygon",
                             "coordinates": [[[p.lon, p.lat] for p in ring]]},
            })
    return {"type": "FeatureCollection", "features": features}


def synth_layout(area: GridSpec, n_objects: int, n_cameras: int, rng: np.random.Generator,
                 block_size: float = config.BLOCK_SIZE,
                 block_depth: float = config.BLOCK_DEPTH) -> Layout:
    """Street-like ground truth and camera positions spread over ``area``; deterministic under ``rng``."""
    if n_objects < 1 or n_cameras < 1:
        raise ConfigurationError("layout needs at least one object and one camera")

    object_slots = _object_slots(area, block_size, block_depth)
    camera_slots = _camera_slots(area, block_size, block_depth)
    if len(object_slots) < n_objects or len(camera_slots) < n_cameras:
        raise ConfigurationError(
            f"area {area.extent[0]:.0f} x {area.extent[1]:.0f} m with {block_size:.0f} x {block_depth:.0f} m "
            f"blocks holds {len(object_slots)} objects and {len(camera_slots)} cameras; "
            f"requested {n_objects} and {n_cameras}")

    chosen = np.sort(rng.permutation(len(object_slots))[:n_objects])
    obj_pos = _place(area, object_slots[chosen], rng)
    cam_base = camera_slots[_camera_order(camera_slots, obj_pos, rng)[:n_cameras]]
    cam_pos = _place(area, cam_base, rng)

    objects = [GroundTruthObject(f"obj{k:04d}", to_geo(e, n, area)) for k, (e, n) in enumerate(obj_pos)]
    cameras = [Camera(f"cam{k:04d}", to_geo(e, n, area)) for k, (e, n) in enumerate(cam_pos)]
    buildings = _buildings(area, block_size, block_depth)
    logger.info("layout: %d objects, %d cameras, %d building blocks",
                len(objects), len(cameras), len(buildings["features"]))
    return Layout(objects=objects, cameras=cameras, buildings=buildings)
