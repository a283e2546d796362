"""Configuration for street-furniture geolocation with stochastic birth & death."""

import hashlib
import json
import os
from typing import Any, Dict, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from errors import ConfigurationError

# Grid
GRID_RESOLUTION = 0.25  # metres per pixel
GRID_ORIGIN_LAT = 53.3440  # only anchors the synthetic scene
GRID_ORIGIN_LON = -6.2670
GRID_HEIGHT = 2400
GRID_WIDTH = 2400
EARTH_RADIUS = 6_371_000.0

# Rays
MAX_RAY_RANGE = 20.0  # metres from each camera

# Energy weights (hand-tuned)
W1 = -3.0  # confidence
W2 = 0.1  # depth consistency
W3 = 0.4  # GIS occupancy
ALPHA = 10.0  # pairwise overlap
KERNEL_SCALE = 4.0  # sigma = KERNEL_SCALE * (1/d1 + 1/d2), pixels
KERNEL_SIGMA_MIN = 0.5
KERNEL_TRUNCATE = 3.0

# Birth & death
N0 = 100
EPSILON = 0.999
BETA = 0.999
T_WAIT = 500
MAX_ITERATIONS = 10_000
RADIUS_MIN = 2
RADIUS_MAX = 10
RADIUS_DECAY = 10.0  # P(r = k) ∝ exp(-k / RADIUS_DECAY)
BIRTH_REDRAWS = 10
EXP_CLAMP = 700.0
SEED = 42

# Simulation
NEAREST_OBJECTS = 15
DETECTION_BANDS = (
    # (lower, upper, probability, lower_inclusive, upper_inclusive)
    (0.0, 2.0, 0.7, True, False),
    (2.0, 10.0, 0.9, True, True),
    (10.0, 20.0, 0.7, False, True),
)
PHANTOM_DISTANCE = (1.0, 15.0)
CONFIDENCE_RATE = 10.0
N_OBJECTS = 680
N_CAMERAS = 1400
BLOCK_SIZE = 40.0  # east-west length of a block, between north-south streets
BLOCK_DEPTH = 25.0  # north-south depth, between east-west streets
CROSSING_CLEARANCE = 8.0  # no light closer than this to a crossing street centreline
OBJECT_SPACING = 20.0
CAMERA_SPACING = 10.0
KERB_OFFSET = 4.0
BUILDING_INSET = 8.0
POSITION_JITTER = 2.0

# Noise levels: (sigma distance m, sigma bearing deg, contamination fraction)
NOISE_LEVELS = {
    0: (1.0, 2.0, 0.03),
    1: (2.0, 3.0, 0.05),
    2: (3.0, 4.5, 0.075),
    3: (4.0, 6.0, 0.1),
}
DEFAULT_NOISE_LEVEL = 1

# Evaluation
EVAL_THRESHOLDS = (1.0, 2.0, 3.0, 4.0, 5.0)
CLUSTER_RADIUS = 5.0
GT_MATCH_RADIUS = 5.0
STABILITY_RUNS = 10

# Paths
BASE_DIR = os.path.dirname(os.path.abspath(__file__))
OUTPUT_DIR = os.environ.get("SBD_OUTPUT_DIR", os.path.join(BASE_DIR, "output"))
WORKERS = int(os.environ.get("SBD_WORKERS", "0"))  # 0 = one per CPU


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GridConfig(_Section):
    origin_lat: float = Field(GRID_ORIGIN_LAT, ge=-90, le=90)
    origin_lon: float = Field(GRID_ORIGIN_LON, ge=-180, le=180)
    height: int = Field(GRID_HEIGHT, ge=1)
    width: int = Field(GRID_WIDTH, ge=1)
    resolution: float = Field(GRID_RESOLUTION, gt=0)


class WeightsConfig(_Section):
    w1: float = W1
    w2: float = W2
    w3: float = W3
    alpha: float = Field(ALPHA, ge=0)
    kernel_scale: float = Field(KERNEL_SCALE, gt=0)


class SbdConfig(_Section):
    n0: float = Field(N0, gt=0)
    epsilon: float = Field(EPSILON, gt=0, lt=1)
    beta: float = Field(BETA, gt=0)
    t_wait: int = Field(T_WAIT, ge=1)
    schedule: Literal["text", "box"] = "text"
    birth_mode: Literal["boltzmann", "literal"] = "boltzmann"
    max_iterations: int = Field(MAX_ITERATIONS, ge=1)
    fixed_radius: Optional[int] = Field(None, ge=RADIUS_MIN, le=RADIUS_MAX)


class SimulationConfig(_Section):
    noise_level: int = Field(DEFAULT_NOISE_LEVEL, ge=0, le=3)
    confidence_rate: float = Field(CONFIDENCE_RATE, gt=0)
    n_objects: int = Field(N_OBJECTS, ge=1)
    n_cameras: int = Field(N_CAMERAS, ge=1)
    block_size: float = Field(BLOCK_SIZE, gt=0)
    block_depth: float = Field(BLOCK_DEPTH, gt=0)


class PathsConfig(_Section):
    gis_geojson: Optional[str] = None
    gis_raster: Optional[str] = None

    @field_validator("gis_geojson", "gis_raster")
    @classmethod
    def _must_exist(cls, value: Optional[str]) -> Optional[str]:
        if value is not None and not os.path.exists(value):
            raise ValueError(f"file does not exist: {value}")
        return value


class PipelineConfig(_Section):
    seed: int = Field(SEED, ge=0, lt=2**64)
    grid: GridConfig = GridConfig()
    weights: WeightsConfig = WeightsConfig()
    sbd: SbdConfig = SbdConfig()
    simulation: SimulationConfig = SimulationConfig()
    paths: PathsConfig = PathsConfig()


def _format_validation_error(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        key = ".".join(str(p) for p in err["loc"]) or "<root>"
        parts.append(f"{key}: {err['msg']}")
    return "; ".join(parts)


def validate_config(data: Dict[str, Any]) -> PipelineConfig:
    try:
        return PipelineConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigurationError(_format_validation_error(e)) from None


def load_config(path: Optional[str] = None) -> PipelineConfig:
    """Load a JSON config file; no path means the built-in defaults."""
    if path is None:
        return PipelineConfig()
    try:
        with open(path, "r") as f:
            data = json.load(f)
    except OSError as e:
        raise ConfigurationError(f"cannot read config {path}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"config {path} is not valid JSON: {e.msg} (line {e.lineno})") from None
    return validate_config(data)


def override(cfg: PipelineConfig, updates: Dict[str, Any]) -> PipelineConfig:
    """Apply dotted-key overrides (e.g. ``sbd.schedule="box"``), skipping None."""
    data = cfg.model_dump()
    for dotted, value in updates.items():
        if value is None:
            continue
        node = data
        *parents, leaf = dotted.split(".")
        for p in parents:
            node = node[p]
        node[leaf] = value
    return validate_config(data)


def config_hash(cfg: PipelineConfig) -> str:
    payload = json.dumps(cfg.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()
