"""Street-furniture geolocation with stochastic birth & death: main pipeline."""

import argparse
import logging
import multiprocessing
import os
import sys
import time
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

import config
from analyzers.matching import pooled_distance_to_gt, pr_sweep
from analyzers.stability import stability_clusters
from energy.energy_map import build_energy_map, empty_gis, weights_from_config
from energy.gis import polygons_from_geojson, rasterize_geojson, rasterize_polygons
from errors import ConfigurationError, DataError, OutOfGridError, PreconditionError
from geometry.projection import grid_from_config, lonlat_to_metres, to_metres, unproject
from geometry.rays import all_intersections, detections_to_rays
from optimizer.birth_death import SbdParams, run
from reporting import tables
from rng import make_rng
from simulation.scenario import simulate_scenario
from storage import files
from storage.models import Camera, Configuration, Detection, EnergyMap, GeoPoint, GisRaster, GridSpec

logger = logging.getLogger("sbd")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_NO_IMPROVEMENT = 3


def _banner(title: str):
    print("\n" + "=" * 60)
    print(title)
    print("=" * 60)


def _finish(out_dir: str, command: str, cfg: config.PipelineConfig, written: List[str], **extra):
    """Dump the effective config and a manifest naming every file this command wrote."""
    files.write_json(os.path.join(out_dir, "config.json"), cfg.model_dump(mode="json"), indent=2)
    payload = {"command": command, "config_hash": config.config_hash(cfg), "seed": cfg.seed,
               "files": sorted(set(written) | {"config.json"})}
    payload.update(extra)
    files.write_manifest(out_dir, payload)


# ── simulate ──

def cmd_simulate(cfg: config.PipelineConfig, out_dir: str) -> int:
    """Synthetic layout, detections and contamination for the configured noise level."""
    _banner("SIMULATE")
    files.ensure_dir(out_dir)
    scenario = simulate_scenario(cfg)
    layout, profile = scenario.layout, scenario.profile

    files.write_points(os.path.join(out_dir, "objects.csv"), layout.objects)
    files.write_points(os.path.join(out_dir, "cameras.csv"), layout.cameras)
    files.write_points(os.path.join(out_dir, "phantoms.csv"), scenario.phantoms)
    files.write_detections(os.path.join(out_dir, "detections.csv"), scenario.detections)
    files.write_json(os.path.join(out_dir, "buildings.geojson"), layout.buildings)

    print(f"  Noise level:     {profile.level} (sigma_d={profile.sigma_distance} m, "
          f"sigma_b={profile.sigma_bearing} deg, p={profile.contamination})")
    print(f"  Objects:         {len(layout.objects):,}")
    print(f"  Cameras:         {len(layout.cameras):,}")
    print(f"  Detections:      {len(scenario.detections):,}")
    print(f"  Contaminants:    {scenario.n_contaminants:,} from {len(scenario.phantoms)} phantom seeds")

    _finish(out_dir, "simulate", cfg,
            ["objects.csv", "cameras.csv", "phantoms.csv", "detections.csv", "buildings.geojson"],
            noise_profile={"level": profile.level, "sigma_distance": profile.sigma_distance,
                           "sigma_bearing": profile.sigma_bearing,
                           "contamination": profile.contamination},
            n_detections=len(scenario.detections), n_contaminants=scenario.n_contaminants)
    return EXIT_OK


# ── rasterize-gis ──

def cmd_rasterize_gis(cfg: config.PipelineConfig, geojson_path: Optional[str], out_dir: str) -> int:
    _banner("RASTERIZE GIS")
    geojson_path = geojson_path or cfg.paths.gis_geojson
    if geojson_path is None:
        raise ConfigurationError("paths.gis_geojson: no GeoJSON given (use --geojson or the config)")
    files.ensure_dir(out_dir)
    grid = grid_from_config(cfg)
    gis = rasterize_geojson(geojson_path, grid)
    files.write_gis_raster(os.path.join(out_dir, "gis"), gis, config.config_hash(cfg))
    occupied = int(gis.occupancy.sum())
    print(f"  Source:          {geojson_path}")
    print(f"  Occupied pixels: {occupied:,} of {grid.height * grid.width:,}")
    _finish(out_dir, "rasterize-gis", cfg, ["gis.raw", "gis.json"], occupied_pixels=occupied)
    return EXIT_OK


# ── energy ──

def build_energy(cfg: config.PipelineConfig, detections: Sequence[Detection], cameras: Sequence[Camera],
                 gis: GisRaster) -> Tuple[EnergyMap, int]:
    grid = grid_from_config(cfg)
    rays = detections_to_rays(detections, cameras, grid)
    intersections = all_intersections(rays, grid)
    logger.info("%d rays -> %d intersections inside the grid", len(rays), len(intersections))
    energy = build_energy_map(intersections, gis, weights_from_config(cfg), grid=grid)
    return energy, len(intersections)


def _load_gis(cfg: config.PipelineConfig, gis_path: Optional[str], grid: GridSpec) -> GisRaster:
    gis_path = gis_path or cfg.paths.gis_raster
    if gis_path is None:
        logger.info("no GIS raster given; using an empty occupancy layer")
        return empty_gis(grid)
    gis = files.read_gis_raster(files.raster_prefix(gis_path))
    if gis.grid != grid:
        raise DataError(f"{gis_path}: GIS raster grid {gis.grid} does not match configured grid {grid}")
    return gis


def cmd_energy(cfg: config.PipelineConfig, detections_path: str, cameras_path: str,
               gis_path: Optional[str], out_dir: str) -> int:
    _banner("ENERGY MAP")
    files.ensure_dir(out_dir)
    grid = grid_from_config(cfg)
    detections = files.read_detections(detections_path)
    cameras = files.read_cameras(cameras_path)
    gis = _load_gis(cfg, gis_path, grid)

    energy, n_inter = build_energy(cfg, detections, cameras, gis)
    files.write_energy_map(os.path.join(out_dir, "energy"), energy, weights_from_config(cfg),
                           config.config_hash(cfg), n_inter)
    print(f"  Detections:      {len(detections):,}")
    print(f"  Intersections:   {n_inter:,}")
    print(f"  Energy range:    {energy.values.min():.3f} .. {energy.values.max():.3f}")
    _finish(out_dir, "energy", cfg, ["energy.raw", "energy.json"], n_intersections=n_inter)
    return EXIT_OK


# ── run ──

def _sbd_task(task):
    """One isolated SBD run in a worker process."""
    prefix, params, alpha, role = task
    energy, _ = files.read_energy_map(prefix)
    return run(energy, params, alpha=alpha, rng=make_rng(params.seed, role))


def run_many(prefix: str, cfg: config.PipelineConfig, n_runs: int, workers: int,
             progress: bool = True) -> List[Tuple[Configuration, object]]:
    """``n_runs`` seeded runs over one energy map, in a process pool when workers > 1."""
    params = SbdParams.from_config(cfg)
    tasks = [(prefix, params, cfg.weights.alpha, f"sbd-run-{k}") for k in range(n_runs)]
    workers = workers if workers > 0 else multiprocessing.cpu_count()
    workers = min(workers, n_runs)
    if workers <= 1:
        return [_sbd_task(t) for t in tqdm(tasks, desc="Runs", disable=not progress)]
    with multiprocessing.Pool(processes=workers) as pool:
        return list(tqdm(pool.imap(_sbd_task, tasks), total=n_runs, desc="Runs", disable=not progress))


def _write_run(out_dir: str, g: Configuration, trace, grid: GridSpec) -> List[str]:
    files.write_configuration(os.path.join(out_dir, "detections_out.csv"), g, grid)
    files.write_trace(os.path.join(out_dir, "trace.csv"), trace.to_frame())
    return ["detections_out.csv", "trace.csv"]


def cmd_run(cfg: config.PipelineConfig, energy_path: str, out_dir: str, progress: bool = True) -> int:
    _banner("STOCHASTIC BIRTH & DEATH")
    files.ensure_dir(out_dir)
    prefix = files.raster_prefix(energy_path)
    energy, sidecar = files.read_energy_map(prefix)
    if sidecar.get("weights", {}).get("alpha", cfg.weights.alpha) != cfg.weights.alpha:
        logger.warning("energy map was built with alpha=%s; running with alpha=%s",
                       sidecar["weights"]["alpha"], cfg.weights.alpha)

    params = SbdParams.from_config(cfg)
    start = time.time()
    best, trace = run(energy, params, alpha=cfg.weights.alpha,
                      rng=make_rng(params.seed, "sbd"), progress=progress)
    elapsed = time.time() - start

    written = _write_run(out_dir, best, trace, energy.grid)
    print(f"  Iterations:      {trace.iterations:,} ({trace.stop_reason})")
    print(f"  Objects found:   {len(best):,}")
    print(f"  H_min:           {trace.best_energy:.4f}")
    print(f"\nRun completed in {elapsed:.1f}s")
    _finish(out_dir, "run", cfg, written, energy_config_hash=sidecar.get("config_hash"),
            iterations=trace.iterations, stop_reason=trace.stop_reason,
            best_energy=trace.best_energy, n_objects=len(best),
            no_improvement=trace.no_improvement)
    return EXIT_NO_IMPROVEMENT if trace.no_improvement else EXIT_OK


# ── eval / stability ──

def _truth_xy(truth_path: str, grid: GridSpec) -> np.ndarray:
    objects = files.read_objects(truth_path)
    return np.array([to_metres(o.position, grid) for o in objects], dtype=float).reshape(-1, 2)


def _geo_xy(points: Sequence[GeoPoint], grid: GridSpec) -> np.ndarray:
    east, north = lonlat_to_metres([p.lon for p in points], [p.lat for p in points], grid)
    return np.column_stack([east, north]).reshape(-1, 2)


def _config_xy(g: Configuration, grid: GridSpec) -> np.ndarray:
    """Planar disc centres, through the same lat/lon a written configuration carries."""
    return _geo_xy([unproject(p.pixel, grid) for p in g], grid)


def evaluate_runs(noise_level: int, runs_xy: Sequence[np.ndarray], truth: np.ndarray
                  ) -> Dict[str, pd.DataFrame]:
    """Metric, curve and stability tables for the runs of one noise level."""
    sweeps = [pr_sweep(xy, truth) for xy in runs_xy]
    out = {
        "metrics": tables.mean_metrics(noise_level, sweeps),
        "pr_curves": tables.pr_curves(noise_level, sweeps),
    }
    gt = pooled_distance_to_gt(runs_xy, truth)
    if len(runs_xy) >= 2:
        report = stability_clusters(runs_xy, truth)
        out["table"] = tables.stability_table([tables.stability_row(noise_level, report, gt)])
        out["distances"] = tables.within_cluster_distances(noise_level, report)
        logger.info("noise level %d: %d within-cluster pairs, %d matched to GT",
                    noise_level, report.n_pairs, gt.n)
    return out


def cmd_eval(cfg: config.PipelineConfig, predictions_path: str, truth_path: str, out_dir: str) -> int:
    _banner("EVALUATION")
    files.ensure_dir(out_dir)
    grid = grid_from_config(cfg)
    g, positions = files.read_configuration(predictions_path)
    truth = _truth_xy(truth_path, grid)
    result = evaluate_runs(cfg.simulation.noise_level, [_geo_xy(positions, grid)], truth)

    tables.write_table(result["metrics"], os.path.join(out_dir, "metrics.csv"))
    tables.write_table(result["pr_curves"], os.path.join(out_dir, "pr_curves.csv"))
    print(f"  Predictions:     {len(g):,}")
    print(f"  Ground truth:    {len(truth):,}")
    tables.print_metrics(result["metrics"])
    _finish(out_dir, "eval", cfg, ["metrics.csv", "pr_curves.csv"])
    return EXIT_OK


def _write_campaign(out_dir: str, results: Sequence[Dict[str, pd.DataFrame]]) -> List[str]:
    written = []
    for key, name in (("metrics", "metrics.csv"), ("pr_curves", "pr_curves.csv"),
                      ("table", "table.csv"), ("distances", "within_cluster_distances.csv")):
        frames = [r[key] for r in results if key in r]
        if frames:
            tables.write_table(pd.concat(frames, ignore_index=True), os.path.join(out_dir, name))
            written.append(name)
    return written


def cmd_stability(cfg: config.PipelineConfig, truth_path: str, out_dir: str,
                  energy_path: Optional[str] = None, run_dirs: Optional[Sequence[str]] = None,
                  n_runs: int = config.STABILITY_RUNS, workers: int = config.WORKERS,
                  progress: bool = True) -> int:
    """Stability over existing run directories, or over ``n_runs`` fresh seeded runs."""
    _banner("STABILITY")
    files.ensure_dir(out_dir)
    grid = grid_from_config(cfg)
    truth = _truth_xy(truth_path, grid)
    written: List[str] = []

    if run_dirs:
        stored = [files.read_configuration(os.path.join(d, "detections_out.csv")) for d in run_dirs]
        configs = [g for g, _ in stored]
        runs_xy = [_geo_xy(positions, grid) for _, positions in stored]
    elif energy_path:
        results = run_many(files.raster_prefix(energy_path), cfg, n_runs, workers, progress)
        configs = []
        for k, (g, trace) in enumerate(results):
            run_dir = os.path.join(out_dir, f"run_{k:02d}")
            files.ensure_dir(run_dir)
            written += [f"run_{k:02d}/{name}" for name in _write_run(run_dir, g, trace, grid)]
            configs.append(g)
        runs_xy = [_config_xy(g, grid) for g in configs]
    else:
        raise ConfigurationError("stability needs --energy or --run-dirs")
    if len(configs) < 2:
        raise PreconditionError(f"stability needs at least 2 runs, got {len(configs)}")

    result = evaluate_runs(cfg.simulation.noise_level, runs_xy, truth)
    written += _write_campaign(out_dir, [result])
    tables.print_stability(result["table"])
    _finish(out_dir, "stability", cfg, written, runs=len(configs))
    return EXIT_OK


# ── experiment ──

def cmd_experiment(cfg: config.PipelineConfig, out_dir: str, noise_levels: Sequence[int],
                   n_runs: int = config.STABILITY_RUNS, workers: int = config.WORKERS,
                   progress: bool = True) -> int:
    """Simulate, rasterize, build the energy map and run SBD for each noise level."""
    _banner("EXPERIMENT")
    files.ensure_dir(out_dir)
    results = []
    written: List[str] = []
    for level in noise_levels:
        level_start = time.time()
        level_cfg = config.override(cfg, {"simulation.noise_level": level})
        level_dir = os.path.join(out_dir, f"noise_{level}")
        files.ensure_dir(level_dir)
        grid = grid_from_config(level_cfg)

        scenario = simulate_scenario(level_cfg)
        gis = rasterize_polygons(polygons_from_geojson(scenario.layout.buildings, "synthetic buildings"), grid)
        energy, n_inter = build_energy(level_cfg, scenario.detections, scenario.layout.cameras, gis)
        prefix = os.path.join(level_dir, "energy")
        files.write_energy_map(prefix, energy, weights_from_config(level_cfg),
                               config.config_hash(level_cfg), n_inter)
        written += [f"noise_{level}/energy.raw", f"noise_{level}/energy.json"]

        configs = []
        for k, (g, trace) in enumerate(run_many(prefix, level_cfg, n_runs, workers, progress)):
            run_dir = os.path.join(level_dir, f"run_{k:02d}")
            files.ensure_dir(run_dir)
            written += [f"noise_{level}/run_{k:02d}/{n}" for n in _write_run(run_dir, g, trace, grid)]
            configs.append(g)

        truth = np.array([to_metres(o.position, grid) for o in scenario.layout.objects], dtype=float)
        results.append(evaluate_runs(level, [_config_xy(g, grid) for g in configs], truth))
        print(f"\n  Noise level {level}: {len(scenario.detections):,} detections, "
              f"{n_inter:,} intersections, counts {[len(g) for g in configs]}")
        print(f"  Level {level} completed in {time.time() - level_start:.1f}s")

    written += _write_campaign(out_dir, results)
    if any("table" in r for r in results):
        tables.print_stability(pd.concat([r["table"] for r in results if "table" in r], ignore_index=True))
    _finish(out_dir, "experiment", cfg, written, noise_levels=list(noise_levels), runs=n_runs)
    return EXIT_OK


# ── CLI ──

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON config file (defaults when omitted)")
    common.add_argument("--seed", type=int, help="Master seed for every random stream")
    common.add_argument("--out", help="Output directory")
    common.add_argument("--noise-level", type=int, choices=sorted(config.NOISE_LEVELS))
    common.add_argument("--schedule", choices=["text", "box"], help="Cooling schedule for the death step")
    common.add_argument("--verbose", action="store_true", help="Debug logging")
    common.add_argument("--quiet", action="store_true", help="No progress bars")

    parser = _Parser(description="Street-furniture geolocation with stochastic birth & death")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("simulate", parents=[common], help="Synthetic objects, cameras and detections")

    p = sub.add_parser("rasterize-gis", parents=[common], help="GeoJSON polygons to an occupancy raster")
    p.add_argument("--geojson", help="Polygon GeoJSON (overrides paths.gis_geojson)")

    p = sub.add_parser("energy", parents=[common], help="Detections to an energy map")
    p.add_argument("--detections", required=True)
    p.add_argument("--cameras", required=True)
    p.add_argument("--gis", help="GIS raster prefix (overrides paths.gis_raster)")

    p = sub.add_parser("run", parents=[common], help="One SBD run over an energy map")
    p.add_argument("--energy", required=True)

    p = sub.add_parser("eval", parents=[common], help="Precision/recall/F1 against ground truth")
    p.add_argument("--predictions", required=True)
    p.add_argument("--truth", required=True)

    p = sub.add_parser("stability", parents=[common], help="Run-to-run stability")
    p.add_argument("--truth", required=True)
    p.add_argument("--energy", help="Energy map for fresh runs")
    p.add_argument("--run-dirs", nargs="+", help="Existing run directories")
    p.add_argument("--runs", type=int, default=config.STABILITY_RUNS)
    p.add_argument("--workers", type=int, default=config.WORKERS)

    p = sub.add_parser("experiment", parents=[common], help="Full campaign over noise levels")
    p.add_argument("--noise-levels", type=int, nargs="+", choices=sorted(config.NOISE_LEVELS),
                   default=sorted(config.NOISE_LEVELS))
    p.add_argument("--runs", type=int, default=config.STABILITY_RUNS)
    p.add_argument("--workers", type=int, default=config.WORKERS)
    return parser


def _dispatch(args, cfg: config.PipelineConfig) -> int:
    out = args.out or os.path.join(config.OUTPUT_DIR, args.command)
    progress = not args.quiet
    if args.command == "simulate":
        return cmd_simulate(cfg, out)
    if args.command == "rasterize-gis":
        return cmd_rasterize_gis(cfg, args.geojson, out)
    if args.command == "energy":
        return cmd_energy(cfg, args.detections, args.cameras, args.gis, out)
    if args.command == "run":
        return cmd_run(cfg, args.energy, out, progress)
    if args.command == "eval":
        return cmd_eval(cfg, args.predictions, args.truth, out)
    if args.runs < 2:
        raise ConfigurationError(f"--runs: stability needs at least 2 runs, got {args.runs}")
    if args.command == "stability":
        return cmd_stability(cfg, args.truth, out, args.energy, args.run_dirs,
                             args.runs, args.workers, progress)
    return cmd_experiment(cfg, out, args.noise_levels, args.runs, args.workers, progress)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    start = time.time()
    try:
        cfg = config.override(config.load_config(args.config), {
            "seed": args.seed,
            "simulation.noise_level": args.noise_level,
            "sbd.schedule": args.schedule,
        })
        code = _dispatch(args, cfg)
    except ConfigurationError as e:
        logger.error("configuration error: %s", e)
        return EXIT_CONFIG
    except (DataError, OutOfGridError, PreconditionError) as e:
        logger.error("%s: %s", type(e).__name__, e)
        return EXIT_DATA
    if code == EXIT_NO_IMPROVEMENT:
        logger.warning("terminated without improving on the empty configuration")
    print(f"\n{args.command} completed in {time.time() - start:.1f}s")
    return code


if __name__ == "__main__":
    sys.exit(main())
