"""Camera-to-object rays and their pairwise intersections."""

import logging
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

import config
from errors import DataError, PreconditionError
from geometry.projection import in_footprint, metres_to_pixel, to_metres
from storage.models import Camera, Detection, GridSpec, Intersection, Ray

logger = logging.getLogger(__name__)

_PARALLEL_TOL = 1e-12


def crossing_point(a: Ray, b: Ray, max_range: float = config.MAX_RAY_RANGE
                   ) -> Optional[Tuple[float, float, float, float]]:
    """Forward crossing of two half-lines as (east, north, delta_a, delta_b).

    None when the rays are parallel, cross behind either camera, or cross
    further than ``max_range`` from either camera.
    """
    if a.camera_id == b.camera_id:
        raise PreconditionError(f"rays share camera {a.camera_id!r}; self-pairs carry no triangulation")

    ua = np.asarray(a.direction)
    ub = np.asarray(b.direction)
    det = ua[0] * (-ub[1]) - ua[1] * (-ub[0])
    if abs(det) < _PARALLEL_TOL:
        return None

    # a.origin + t * ua = b.origin + s * ub  (Cramer's rule)
    rhs = np.asarray(b.origin, dtype=float) - np.asarray(a.origin, dtype=float)
    t = (rhs[0] * (-ub[1]) - rhs[1] * (-ub[0])) / det
    s = (ua[0] * rhs[1] - ua[1] * rhs[0]) / det
    if not (0.0 <= t <= max_range and 0.0 <= s <= max_range):
        return None

    east = a.origin[0] + t * ua[0]
    north = a.origin[1] + t * ua[1]
    return float(east), float(north), float(t), float(s)


def ray_pair_intersection(a: Ray, b: Ray, grid: GridSpec,
                          max_range: float = config.MAX_RAY_RANGE) -> Optional[Intersection]:
    """Intersection evidence of two rays, or None when they do not cross in range.

    A crossing outside the grid footprint is also None: it cannot be splatted.
    """
    hit = crossing_point(a, b, max_range)
    if hit is None:
        return None
    east, north, t, s = hit
    if not in_footprint(east, north, grid):
        return None
    return Intersection(
        pixel=metres_to_pixel(east, north, grid),
        c1=a.confidence, c2=b.confidence,
        d1=a.depth, d2=b.depth,
        delta1=t, delta2=s,
    )


def all_intersections(rays: Sequence[Ray], grid: GridSpec,
                      max_range: float = config.MAX_RAY_RANGE) -> List[Intersection]:
    """Every in-range, in-grid crossing over unordered ray pairs from distinct cameras.

    Sorted by pixel, then by the (a, b) input pair index, so downstream
    accumulation is reproducible.
    """
    if len(rays) < 2:
        return []

    # Only rays whose origins are within 2 * max_range can meet in range.
    origins = np.array([r.origin for r in rays], dtype=float)
    tree = cKDTree(origins)
    pairs = sorted(tree.query_pairs(r=2.0 * max_range + 1e-9))

    found = []
    for ia, ib in pairs:
        a, b = rays[ia], rays[ib]
        if a.camera_id == b.camera_id:
            continue
        hit = ray_pair_intersection(a, b, grid, max_range)
        if hit is not None:
            found.append((hit.pixel, ia, ib, hit))

    found.sort(key=lambda x: (x[0], x[1], x[2]))
    logger.debug("%d rays -> %d candidate pairs -> %d intersections",
                 len(rays), len(pairs), len(found))
    return [f[3] for f in found]


def detections_to_rays(detections: Iterable[Detection], cameras: Iterable[Camera],
                       grid: GridSpec) -> List[Ray]:
    """Project camera positions into the grid frame and attach each detection's ray."""
    positions: Dict[str, Tuple[float, float]] = {
        cam.id: to_metres(cam.position, grid) for cam in cameras}
    rays = []
    for k, det in enumerate(detections):
        if det.camera_id not in positions:
            raise DataError(f"detection {k} references unknown camera {det.camera_id!r}")
        rays.append(Ray(
            camera_id=det.camera_id,
            origin=positions[det.camera_id],
            bearing=det.bearing,
            confidence=det.confidence,
            depth=det.distance,
        ))
    return rays
