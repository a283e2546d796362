"""Noisy street-level detections and CNN-like false-positive contamination."""

import logging
import math
from typing import List, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

import config
from errors import PreconditionError
from geometry.projection import to_geo, to_metres
from storage.models import Camera, Detection, GridSpec, GroundTruthObject, NoiseProfile

logger = logging.getLogger(__name__)


def noise_profile(level: int) -> NoiseProfile:
    if level not in config.NOISE_LEVELS:
        raise PreconditionError(f"noise level must be one of {sorted(config.NOISE_LEVELS)}, got {level}")
    sigma_d, sigma_b, p = config.NOISE_LEVELS[level]
    return NoiseProfile(level=level, sigma_distance=sigma_d, sigma_bearing=sigma_b, contamination=p)


def detection_probability(distance: float) -> float:
    """Chance that an object at ``distance`` metres is detected (0 beyond the last band)."""
    for lo, hi, prob, lo_closed, hi_closed in config.DETECTION_BANDS:
        above = distance >= lo if lo_closed else distance > lo
        below = distance <= hi if hi_closed else distance < hi
        if above and below:
            return prob
    return 0.0


def assign_confidence(rng: np.random.Generator, rate: float = config.CONFIDENCE_RATE) -> float:
    """1 - a with a ~ Exponential(rate), resampled until the result lies in (0.5, 1)."""
    if not rate > 0:
        raise PreconditionError(f"confidence rate must be positive, got {rate}")
    while True:
        c = 1.0 - rng.exponential(1.0 / rate)
        if 0.5 < c < 1.0:
            return c


def _bearing(dx: float, dy: float) -> float:
    return math.degrees(math.atan2(dx, dy)) % 360.0


def _noisy_distance(d: float, sigma: float, rng: np.random.Generator) -> float:
    while True:
        value = rng.normal(d, sigma)
        if value > 0:
            return float(value)


def _detect(camera_xy: np.ndarray, camera_ids: Sequence[str], object_xy: np.ndarray,
            profile: NoiseProfile, rng: np.random.Generator, rate: float,
            contaminant: bool) -> List[Detection]:
    if len(object_xy) == 0:
        return []
    tree = cKDTree(object_xy)
    k = min(config.NEAREST_OBJECTS, len(object_xy))
    detections = []
    for cam_id, (cx, cy) in zip(camera_ids, camera_xy):
        dists, idx = tree.query((cx, cy), k=k)
        dists, idx = np.atleast_1d(dists), np.atleast_1d(idx)
        # ties resolved by object index so runs are reproducible
        for n in np.lexsort((idx, dists)):
            d = float(dists[n])
            prob = detection_probability(d)
            if prob == 0.0:
                continue
            if rng.random() >= prob:
                continue
            if d == 0.0 and profile.sigma_distance == 0.0:
                logger.debug("camera %s sits on an object; no bearing to detect", cam_id)
                continue
            ox, oy = object_xy[idx[n]]
            bearing = _bearing(ox - cx, oy - cy)
            distance = _noisy_distance(d, profile.sigma_distance, rng)
            bearing_noisy = float(rng.normal(bearing, profile.sigma_bearing)) % 360.0
            detections.append(Detection(
                camera_id=cam_id,
                bearing=bearing_noisy,
                distance=distance,
                confidence=assign_confidence(rng, rate),
                is_contaminant=contaminant,
            ))
    return detections


def _positions(items, grid: GridSpec) -> np.ndarray:
    return np.array([to_metres(it.position, grid) for it in items], dtype=float).reshape(-1, 2)


def detect_objects(cameras: Sequence[Camera], objects: Sequence[GroundTruthObject],
                   profile: NoiseProfile, grid: GridSpec, rng: np.random.Generator,
                   rate: float = config.CONFIDENCE_RATE) -> List[Detection]:
    """Each camera sees its 15 nearest objects with band-dependent probability, plus noise."""
    if not cameras or not objects:
        raise PreconditionError("detect_objects needs at least one camera and one object")
    return _detect(_positions(cameras, grid), [c.id for c in cameras], _positions(objects, grid),
                   profile, rng, rate, contaminant=False)


def contamination_count(n_detections: int, p: float) -> int:
    # tolerance keeps floor(p * N) exact for decimal p such as 0.07 * 100
    return int(math.floor(p * n_detections + 1e-9))


def contaminate(detections: List[Detection], cameras: Sequence[Camera], profile: NoiseProfile,
                grid: GridSpec, rng: np.random.Generator, rate: float = config.CONFIDENCE_RATE
                ) -> Tuple[List[Detection], List[GroundTruthObject]]:
    """Seed floor(p N) phantom objects near random cameras and append their detections.

    Returns (augmented detections, phantom seeds).
    """
    n = contamination_count(len(detections), profile.contamination)
    if n == 0:
        return list(detections), []
    if n > len(cameras):
        raise PreconditionError(
            f"{n} phantom seeds requested but only {len(cameras)} cameras to draw without replacement")

    chosen = rng.choice(len(cameras), size=n, replace=False)
    cam_xy = _positions(cameras, grid)
    lo, hi = config.PHANTOM_DISTANCE
    phantoms = []
    for k, c in enumerate(chosen):
        d = rng.uniform(lo, hi)
        b = math.radians(rng.uniform(0.0, 360.0))
        east = cam_xy[c, 0] + d * math.sin(b)
        north = cam_xy[c, 1] + d * math.cos(b)
        phantoms.append(GroundTruthObject(f"phantom{k:04d}", to_geo(east, north, grid)))

    secondary = _detect(cam_xy, [c.id for c in cameras], _positions(phantoms, grid),
                        profile, rng, rate, contaminant=True)
    logger.info("contamination: %d phantom seeds from %d detections -> %d extra detections",
                n, len(detections), len(secondary))
    return list(detections) + secondary, phantoms
