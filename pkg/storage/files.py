"""File storage for scenarios, rasters, configurations and traces.

Tables are CSV read and written through pandas with explicit column schemas;
rasters are raw little-endian float32, row-major, beside a JSON sidecar that
carries the grid, provenance and a sha256 checksum of the raw bytes.
"""

import hashlib
import json
import os
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from errors import DataError
from geometry.projection import unproject
from storage.models import (Camera, ConfigPoint, Configuration, Detection, EnergyMap,
                            EnergyWeights, GeoPoint, GisRaster, GridSpec, GroundTruthObject)

POINT_COLUMNS = {"id": str, "lat": float, "lon": float}
DETECTION_COLUMNS = {"camera_id": str, "bearing_deg": float, "distance_m": float,
                     "confidence": float, "is_contaminant": bool}
CONFIG_COLUMNS = {"pixel_i": int, "pixel_j": int, "radius_px": int,
                  "lat": float, "lon": float, "radius_m": float}
RASTER_DTYPE = "<f4"


# ── CSV helpers ──

def _coerce(value: Any, kind: type):
    if kind is bool:
        if isinstance(value, (bool, np.bool_)):
            return bool(value)
        text = str(value).strip().lower()
        if text in ("true", "1"):
            return True
        if text in ("false", "0"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    if kind is int:
        f = float(value)
        if not f.is_integer():
            raise ValueError(f"not an integer: {value!r}")
        return int(f)
    if kind is float:
        f = float(value)
        if not np.isfinite(f):
            raise ValueError(f"not finite: {value!r}")
        return f
    text = str(value)
    if text == "" or text == "nan":
        raise ValueError("empty value")
    return text


def read_table(path: str, schema: Dict[str, type]) -> List[Dict[str, Any]]:
    """Read a CSV and coerce every cell, naming the row and column of the first violation."""
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False)
    except FileNotFoundError:
        raise DataError(f"{path}: file not found") from None
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DataError(f"{path}: cannot parse CSV ({e})") from None

    missing = [c for c in schema if c not in df.columns]
    if missing:
        raise DataError(f"{path}: missing column(s) {', '.join(missing)}")

    rows = []
    for n, raw in enumerate(df[list(schema)].itertuples(index=False), start=2):
        row = {}
        for col, kind in schema.items():
            value = getattr(raw, col)
            try:
                row[col] = _coerce(value, kind)
            except (TypeError, ValueError) as e:
                raise DataError(f"{path}: row {n}, column {col!r}: {e}") from None
        rows.append(row)
    return rows


def _write_csv(path: str, rows: List[Dict[str, Any]], columns: Sequence[str]):
    try:
        pd.DataFrame(rows, columns=list(columns)).to_csv(path, index=False)
    except OSError as e:
        raise DataError(f"cannot write {path}: {e.strerror}") from None


# ── Scenario tables ──

def write_points(path: str, items: Sequence):
    _write_csv(path, [{"id": it.id, "lat": it.position.lat, "lon": it.position.lon} for it in items],
               POINT_COLUMNS)


def read_objects(path: str) -> List[GroundTruthObject]:
    return [GroundTruthObject(r["id"], _geo(path, n, r)) for n, r in enumerate(read_table(path, POINT_COLUMNS), start=2)]


def read_cameras(path: str) -> List[Camera]:
    cams = [Camera(r["id"], _geo(path, n, r)) for n, r in enumerate(read_table(path, POINT_COLUMNS), start=2)]
    seen = set()
    for n, c in enumerate(cams, start=2):
        if c.id in seen:
            raise DataError(f"{path}: row {n}, column 'id': duplicate camera id {c.id!r}")
        seen.add(c.id)
    return cams


def _geo(path: str, n: int, row: Dict[str, Any]) -> GeoPoint:
    try:
        return GeoPoint(row["lat"], row["lon"])
    except ValueError as e:
        raise DataError(f"{path}: row {n}: {e}") from None


def write_detections(path: str, detections: Sequence[Detection]):
    _write_csv(path, [{"camera_id": d.camera_id, "bearing_deg": d.bearing, "distance_m": d.distance,
                       "confidence": d.confidence, "is_contaminant": d.is_contaminant}
                      for d in detections], DETECTION_COLUMNS)


def read_detections(path: str) -> List[Detection]:
    out = []
    for n, r in enumerate(read_table(path, DETECTION_COLUMNS), start=2):
        try:
            out.append(Detection(camera_id=r["camera_id"], bearing=r["bearing_deg"],
                                 distance=r["distance_m"], confidence=r["confidence"],
                                 is_contaminant=r["is_contaminant"]))
        except ValueError as e:
            raise DataError(f"{path}: row {n}: {e}") from None
    return out


# ── Rasters ──

def grid_to_dict(grid: GridSpec) -> Dict[str, Any]:
    return {"origin_lat": grid.origin.lat, "origin_lon": grid.origin.lon,
            "height": grid.height, "width": grid.width, "resolution": grid.resolution}


def grid_from_dict(d: Dict[str, Any]) -> GridSpec:
    return GridSpec(origin=GeoPoint(d["origin_lat"], d["origin_lon"]),
                    height=int(d["height"]), width=int(d["width"]), resolution=float(d["resolution"]))


def _write_raster(prefix: str, values: np.ndarray, grid: GridSpec, extra: Dict[str, Any]) -> Tuple[str, str]:
    raw = np.ascontiguousarray(values, dtype=RASTER_DTYPE).tobytes(order="C")
    raw_path, meta_path = prefix + ".raw", prefix + ".json"
    sidecar = {"grid": grid_to_dict(grid), "dtype": "float32", "byte_order": "little",
               "layout": "row-major, row 0 = pixel row i = 1",
               "sha256": hashlib.sha256(raw).hexdigest()}
    sidecar.update(extra)
    try:
        with open(raw_path, "wb") as f:
            f.write(raw)
        with open(meta_path, "w") as f:
            json.dump(sidecar, f, indent=2, sort_keys=True)
    except OSError as e:
        raise DataError(f"cannot write raster {prefix}: {e.strerror}") from None
    return raw_path, meta_path


def _read_raster(prefix: str) -> Tuple[np.ndarray, GridSpec, Dict[str, Any]]:
    raw_path, meta_path = prefix + ".raw", prefix + ".json"
    try:
        with open(meta_path, "r") as f:
            sidecar = json.load(f)
        with open(raw_path, "rb") as f:
            raw = f.read()
    except OSError as e:
        raise DataError(f"cannot read raster {e.filename}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise DataError(f"{meta_path}: sidecar is not valid JSON ({e.msg})") from None

    try:
        grid = grid_from_dict(sidecar["grid"])
        expected = sidecar["sha256"]
    except (KeyError, TypeError, ValueError) as e:
        raise DataError(f"{meta_path}: malformed sidecar ({e})") from None
    if hashlib.sha256(raw).hexdigest() != expected:
        raise DataError(f"{raw_path}: checksum mismatch with {meta_path}; raster is corrupt")
    if len(raw) != grid.height * grid.width * 4:
        raise DataError(f"{raw_path}: {len(raw)} bytes, expected {grid.height * grid.width * 4}")
    values = np.frombuffer(raw, dtype=RASTER_DTYPE).reshape(grid.shape).astype(np.float64)
    return values, grid, sidecar


def write_energy_map(prefix: str, energy: EnergyMap, weights: EnergyWeights,
                     config_hash: str, n_intersections: int) -> Tuple[str, str]:
    extra = {"kind": "energy_map", "config_hash": config_hash, "n_intersections": n_intersections,
             "weights": {"w1": weights.w1, "w2": weights.w2, "w3": weights.w3,
                         "alpha": weights.alpha, "kernel_scale": weights.kernel_scale}}
    return _write_raster(prefix, energy.values, energy.grid, extra)


def read_energy_map(prefix: str) -> Tuple[EnergyMap, Dict[str, Any]]:
    values, grid, sidecar = _read_raster(prefix)
    try:
        return EnergyMap(grid=grid, values=values), sidecar
    except ValueError as e:
        raise DataError(f"{prefix}.raw: {e}") from None


def write_gis_raster(prefix: str, gis: GisRaster, config_hash: str) -> Tuple[str, str]:
    return _write_raster(prefix, gis.occupancy, gis.grid, {"kind": "gis", "config_hash": config_hash})


def read_gis_raster(prefix: str) -> GisRaster:
    values, grid, _ = _read_raster(prefix)
    try:
        return GisRaster(grid=grid, occupancy=values.astype(np.uint8) if np.isin(values, (0, 1)).all() else values)
    except ValueError as e:
        raise DataError(f"{prefix}.raw: {e}") from None


def raster_prefix(path: str) -> str:
    """Accept either the prefix or one of its .raw/.json files."""
    root, ext = os.path.splitext(path)
    return root if ext in (".raw", ".json") else path


# ── Optimiser output ──

def write_configuration(path: str, g: Configuration, grid: GridSpec):
    rows = []
    for p in g:
        pos = unproject(p.pixel, grid)
        rows.append({"pixel_i": p.i, "pixel_j": p.j, "radius_px": p.r,
                     "lat": pos.lat, "lon": pos.lon, "radius_m": p.r * grid.resolution})
    _write_csv(path, rows, CONFIG_COLUMNS)


def read_configuration(path: str) -> Tuple[Configuration, List[GeoPoint]]:
    rows = read_table(path, CONFIG_COLUMNS)
    try:
        g = Configuration(tuple(ConfigPoint(r["pixel_i"], r["pixel_j"], r["radius_px"]) for r in rows))
    except ValueError as e:
        raise DataError(f"{path}: {e}") from None
    return g, [_geo(path, n, r) for n, r in enumerate(rows, start=2)]


def write_trace(path: str, trace_frame: pd.DataFrame):
    try:
        trace_frame.to_csv(path, index=False)
    except OSError as e:
        raise DataError(f"cannot write {path}: {e.strerror}") from None


def write_json(path: str, payload: Any, indent: Optional[int] = None) -> str:
    try:
        with open(path, "w") as f:
            json.dump(payload, f, indent=indent, sort_keys=True)
    except OSError as e:
        raise DataError(f"cannot write {path}: {e.strerror}") from None
    return path


def write_manifest(out_dir: str, payload: Dict[str, Any], name: str = "manifest.json") -> str:
    return write_json(os.path.join(out_dir, name), payload, indent=2)


def read_manifest(path: str) -> Dict[str, Any]:
    try:
        with open(path, "r") as f:
            return json.load(f)
    except OSError as e:
        raise DataError(f"cannot read {path}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise DataError(f"{path}: not valid JSON ({e.msg})") from None


def ensure_dir(path: str):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as e:
        raise DataError(f"cannot create output directory {path}: {e.strerror}") from None
    if not os.access(path, os.W_OK):
        raise DataError(f"output directory {path} is not writable")


def optional_prefix(path: Optional[str]) -> Optional[str]:
    return raster_prefix(path) if path else None
