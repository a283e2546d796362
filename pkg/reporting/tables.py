"""Metric tables and plot-ready long-format CSVs for evaluation and stability campaigns."""

from typing import Dict, Iterable, List, Sequence

import numpy as np
import pandas as pd

from analyzers.matching import DistanceStats
from analyzers.stability import StabilityReport
from errors import DataError

METRIC_COLUMNS = ["noise_level", "tau_m", "precision", "recall", "f1"]
STABILITY_COLUMNS = ["noise_level", "cluster_median_m", "cluster_sd_m",
                     "count_median", "count_sd", "gt_median_m", "gt_sd_m"]
CURVE_COLUMNS = ["noise_level", "run", "tau_m", "metric", "value"]
DISTANCE_COLUMNS = ["noise_level", "distance_m"]


def metrics_table(noise_level: int, sweep: pd.DataFrame) -> pd.DataFrame:
    out = sweep[["tau_m", "precision", "recall", "f1"]].copy()
    out.insert(0, "noise_level", noise_level)
    return out[METRIC_COLUMNS].reset_index(drop=True)


def mean_metrics(noise_level: int, sweeps: Sequence[pd.DataFrame]) -> pd.DataFrame:
    """Per-threshold mean of precision, recall and F1 over several runs."""
    stacked = pd.concat(sweeps, ignore_index=True)
    agg = stacked.groupby("tau_m", sort=True)[["precision", "recall", "f1"]].mean().reset_index()
    return metrics_table(noise_level, agg)


def stability_row(noise_level: int, report: StabilityReport, gt: DistanceStats) -> Dict[str, float]:
    return {
        "noise_level": noise_level,
        "cluster_median_m": report.distance_median,
        "cluster_sd_m": report.distance_sd,
        "count_median": report.count_median,
        "count_sd": report.count_sd,
        "gt_median_m": gt.median,
        "gt_sd_m": gt.sd,
    }


def stability_table(rows: Iterable[Dict[str, float]]) -> pd.DataFrame:
    return pd.DataFrame(list(rows), columns=STABILITY_COLUMNS).sort_values("noise_level").reset_index(drop=True)


def pr_curves(noise_level: int, sweeps: Sequence[pd.DataFrame]) -> pd.DataFrame:
    """Long format: one row per (run, threshold, metric)."""
    frames: List[pd.DataFrame] = []
    for k, sweep in enumerate(sweeps):
        long = sweep.melt(id_vars=["tau_m"], value_vars=["precision", "recall", "f1"],
                          var_name="metric", value_name="value")
        long.insert(0, "run", k)
        long.insert(0, "noise_level", noise_level)
        frames.append(long)
    if not frames:
        return pd.DataFrame(columns=CURVE_COLUMNS)
    return pd.concat(frames, ignore_index=True)[CURVE_COLUMNS]


def within_cluster_distances(noise_level: int, report: StabilityReport) -> pd.DataFrame:
    return pd.DataFrame({"noise_level": np.full(report.distances.size, noise_level, dtype=int),
                         "distance_m": report.distances}, columns=DISTANCE_COLUMNS)


def write_table(df: pd.DataFrame, path: str):
    try:
        df.to_csv(path, index=False)
    except OSError as e:
        raise DataError(f"cannot write {path}: {e.strerror}") from None


def print_stability(df: pd.DataFrame):
    print(f"\n  {'Noise':>5}  {'Cluster med':>11}  {'SD':>6}  {'Count med':>9}  {'SD':>6}  "
          f"{'GT med':>7}  {'SD':>6}")
    for row in df.itertuples(index=False):
        print(f"  {row.noise_level:>5}  {row.cluster_median_m:>11.3f}  {row.cluster_sd_m:>6.3f}  "
              f"{row.count_median:>9.1f}  {row.count_sd:>6.2f}  {row.gt_median_m:>7.3f}  {row.gt_sd_m:>6.3f}")


def print_metrics(df: pd.DataFrame):
    print(f"\n  {'Noise':>5}  {'tau (m)':>7}  {'Precision':>9}  {'Recall':>7}  {'F1':>6}")
    for row in df.itertuples(index=False):
        print(f"  {row.noise_level:>5}  {row.tau_m:>7.1f}  {row.precision:>9.3f}  "
              f"{row.recall:>7.3f}  {row.f1:>6.3f}")
