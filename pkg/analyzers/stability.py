"""Run-to-run stability: within-cluster distances and object counts over repeated runs."""

from dataclasses import dataclass
from typing import List, Sequence

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import pdist

import config
from analyzers.matching import sample_sd
from errors import PreconditionError


@dataclass(frozen=True)
class StabilityReport:
    distance_median: float  # metres, pooled within-cluster pairwise distances
    distance_sd: float
    n_pairs: int
    count_median: float  # predictions per run
    count_sd: float
    distances: np.ndarray
    cluster_sizes: np.ndarray  # members per ground-truth object, across all runs

    @property
    def expected_pairs(self) -> int:
        k = self.cluster_sizes
        return int(np.sum(k * (k - 1) // 2))


def stability_clusters(runs: Sequence, truth, tau_cluster: float = config.CLUSTER_RADIUS
                       ) -> StabilityReport:
    """Cluster every run's predictions on their nearest ground-truth object within ``tau_cluster``.

    Points further than ``tau_cluster`` from any object are discarded. Pairwise
    distances inside each cluster are pooled across clusters.
    """
    if len(runs) < 2:
        raise PreconditionError(f"stability needs at least 2 runs, got {len(runs)}")
    gt = np.asarray(truth, dtype=float).reshape(-1, 2)
    runs = [np.asarray(r, dtype=float).reshape(-1, 2) for r in runs]
    counts = np.array([len(r) for r in runs], dtype=float)

    members: List[List[np.ndarray]] = [[] for _ in range(len(gt))]
    if len(gt):
        tree = cKDTree(gt)
        for pts in runs:
            if len(pts) == 0:
                continue
            dist, idx = tree.query(pts, k=1, distance_upper_bound=tau_cluster)
            for p, d, j in zip(pts, dist, idx):
                if np.isfinite(d) and d <= tau_cluster:
                    members[j].append(p)

    sizes = np.array([len(m) for m in members], dtype=int)
    pooled = [pdist(np.array(m)) for m in members if len(m) >= 2]
    distances = np.concatenate(pooled) if pooled else np.zeros(0)

    return StabilityReport(
        distance_median=float(np.median(distances)) if distances.size else float("nan"),
        distance_sd=sample_sd(distances) if distances.size else float("nan"),
        n_pairs=int(distances.size),
        count_median=float(np.median(counts)),
        count_sd=sample_sd(counts),
        distances=distances,
        cluster_sizes=sizes,
    )
