"""Data models for street-furniture geolocation."""

import math
from dataclasses import dataclass, field
from typing import Iterator, Tuple

import numpy as np

import config
from errors import OutOfGridError, PreconditionError

Pixel = Tuple[int, int]  # (i, j), 1-based; i counts rows northwards, j columns eastwards


@dataclass(frozen=True)
class GeoPoint:
    lat: float  # degrees WGS84
    lon: float  # degrees WGS84

    def __post_init__(self):
        if not (-90.0 <= self.lat <= 90.0):
            raise OutOfGridError(f"latitude {self.lat} outside [-90, 90]")
        if not (-180.0 <= self.lon <= 180.0):
            raise OutOfGridError(f"longitude {self.lon} outside [-180, 180]")


@dataclass(frozen=True)
class GridSpec:
    origin: GeoPoint  # anchor of pixel (1, 1)
    height: int
    width: int
    resolution: float  # metres per pixel

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise PreconditionError(f"grid must be at least 1x1, got {self.height}x{self.width}")
        if not self.resolution > 0:
            raise PreconditionError(f"grid resolution must be positive, got {self.resolution}")

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.height, self.width)

    @property
    def extent(self) -> Tuple[float, float]:
        """(east, north) size of the footprint in metres."""
        return (self.width * self.resolution, self.height * self.resolution)

    def contains(self, pixel: Pixel) -> bool:
        i, j = pixel
        return 1 <= i <= self.height and 1 <= j <= self.width

    def require(self, pixel: Pixel):
        if not self.contains(pixel):
            raise OutOfGridError(
                f"pixel {tuple(pixel)} outside grid 1..{self.height} x 1..{self.width}")


@dataclass(frozen=True)
class Camera:
    id: str
    position: GeoPoint


@dataclass(frozen=True)
class Ray:
    camera_id: str
    origin: Tuple[float, float]  # planar metres (east, north) in the grid frame
    bearing: float  # degrees clockwise from north
    confidence: float
    depth: float  # estimated camera-to-object distance, metres

    def __post_init__(self):
        object.__setattr__(self, "bearing", float(self.bearing) % 360.0)
        if not (0.5 < self.confidence < 1.0):
            raise PreconditionError(f"ray confidence {self.confidence} outside (0.5, 1)")
        if not self.depth > 0:
            raise PreconditionError(f"ray depth estimate must be positive, got {self.depth}")

    @property
    def direction(self) -> Tuple[float, float]:
        b = math.radians(self.bearing)
        return (math.sin(b), math.cos(b))


@dataclass(frozen=True)
class Intersection:
    pixel: Pixel
    c1: float
    c2: float
    d1: float  # depth estimates
    d2: float
    delta1: float  # camera-to-intersection distances along each ray
    delta2: float

    @property
    def i(self) -> int:
        return self.pixel[0]

    @property
    def j(self) -> int:
        return self.pixel[1]


@dataclass(frozen=True)
class EnergyWeights:
    w1: float
    w2: float
    w3: float
    alpha: float
    kernel_scale: float  # c_sigma, metres * pixels

    def __post_init__(self):
        if not all(math.isfinite(w) for w in (self.w1, self.w2, self.w3)):
            raise PreconditionError("energy weights w1, w2, w3 must be finite")
        if self.alpha < 0:
            raise PreconditionError(f"alpha must be non-negative, got {self.alpha}")
        if not self.kernel_scale > 0:
            raise PreconditionError(f"kernel scale must be positive, got {self.kernel_scale}")


@dataclass(frozen=True, eq=False)
class GisRaster:
    grid: GridSpec
    occupancy: np.ndarray  # uint8, shape (h, w), row 0 is pixel row i = 1

    def __post_init__(self):
        if self.occupancy.shape != self.grid.shape:
            raise PreconditionError(
                f"GIS raster shape {self.occupancy.shape} does not match grid {self.grid.shape}")
        if not np.isin(self.occupancy, (0, 1)).all():
            raise PreconditionError("GIS occupancy must be binary")


@dataclass(frozen=True, eq=False)
class EnergyMap:
    grid: GridSpec
    values: np.ndarray  # float64, shape (h, w)

    def __post_init__(self):
        if self.values.shape != self.grid.shape:
            raise PreconditionError(
                f"energy map shape {self.values.shape} does not match grid {self.grid.shape}")
        if not np.isfinite(self.values).all():
            raise PreconditionError("energy map contains non-finite values")
        self.values.setflags(write=False)

    def at(self, pixel: Pixel) -> float:
        self.grid.require(pixel)
        return float(self.values[pixel[0] - 1, pixel[1] - 1])


@dataclass(frozen=True, order=True)
class ConfigPoint:
    i: int
    j: int
    r: int  # radius mark, pixels

    def __post_init__(self):
        if not (config.RADIUS_MIN <= self.r <= config.RADIUS_MAX):
            raise PreconditionError(
                f"radius mark {self.r} outside {config.RADIUS_MIN}..{config.RADIUS_MAX} pixels")

    @property
    def pixel(self) -> Pixel:
        return (self.i, self.j)


@dataclass(frozen=True)
class Configuration:
    """A finite set of marked points, kept in sorted order."""
    points: Tuple[ConfigPoint, ...] = field(default_factory=tuple)

    def __post_init__(self):
        pts = tuple(sorted(self.points))
        if len(set(pts)) != len(pts):
            raise PreconditionError("configuration contains duplicate (x, r) points")
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self) -> Iterator[ConfigPoint]:
        return iter(self.points)

    def __contains__(self, p: object) -> bool:
        return p in set(self.points)

    def without(self, p: ConfigPoint) -> "Configuration":
        if p not in self:
            raise PreconditionError(f"point {p} is not in the configuration")
        return Configuration(tuple(q for q in self.points if q != p))


@dataclass(frozen=True)
class GroundTruthObject:
    id: str
    position: GeoPoint


@dataclass(frozen=True)
class NoiseProfile:
    level: int
    sigma_distance: float  # metres
    sigma_bearing: float  # degrees
    contamination: float  # fraction p

    def __post_init__(self):
        if self.sigma_distance < 0 or self.sigma_bearing < 0:
            raise PreconditionError("noise standard deviations must be non-negative")
        if not (0.0 <= self.contamination < 1.0):
            raise PreconditionError(f"contamination {self.contamination} outside [0, 1)")


@dataclass(frozen=True)
class Detection:
    camera_id: str
    bearing: float  # noisy, degrees
    distance: float  # noisy, metres
    confidence: float
    is_contaminant: bool = False  # evaluation only, never used by the optimizer

    def __post_init__(self):
        if not (0.5 < self.confidence < 1.0):
            raise PreconditionError(f"detection confidence {self.confidence} outside (0.5, 1)")
        if not self.distance > 0:
            raise PreconditionError(f"detection distance must be positive, got {self.distance}")
