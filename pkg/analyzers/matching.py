"""Prediction-to-ground-truth matching, precision/recall/F1 and distance-to-GT."""

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.spatial import cKDTree

import config
from errors import PreconditionError


@dataclass(frozen=True)
class MatchResult:
    pairs: List[Tuple[int, int, float]]  # (prediction index, truth index, metres)
    unmatched_predictions: List[int]
    unmatched_truth: List[int]
    threshold: float

    @property
    def n_matched(self) -> int:
        return len(self.pairs)

    @property
    def distances(self) -> np.ndarray:
        return np.array([d for _, _, d in self.pairs], dtype=float)


@dataclass(frozen=True)
class DistanceStats:
    median: float
    sd: float
    n: int

    @property
    def empty(self) -> bool:
        return self.n == 0


def sample_sd(values: Sequence[float]) -> float:
    """Sample standard deviation; 0 for fewer than two values."""
    values = np.asarray(values, dtype=float)
    return float(values.std(ddof=1)) if values.size > 1 else 0.0


def _as_xy(points) -> np.ndarray:
    return np.asarray(points, dtype=float).reshape(-1, 2)


def match(predictions, truth, tau: float) -> MatchResult:
    """Greedy one-to-one matching of planar points (metres) within ``tau``.

    Candidate pairs are accepted in ascending distance, ties broken by
    (prediction index, truth index), when both endpoints are still free.
    """
    if not tau > 0:
        raise PreconditionError(f"match threshold must be positive, got {tau}")
    pred = _as_xy(predictions)
    gt = _as_xy(truth)
    if len(pred) == 0 or len(gt) == 0:
        return MatchResult([], list(range(len(pred))), list(range(len(gt))), tau)

    near = cKDTree(pred).query_ball_tree(cKDTree(gt), tau)
    cand_i = np.array([i for i, js in enumerate(near) for _ in js], dtype=int)
    cand_j = np.array([j for js in near for j in js], dtype=int)
    cand_v = np.linalg.norm(pred[cand_i] - gt[cand_j], axis=1) if cand_i.size else np.zeros(0)

    order = np.lexsort((cand_j, cand_i, cand_v))
    used_p, used_t = set(), set()
    pairs = []
    for k in order:
        i, j, v = int(cand_i[k]), int(cand_j[k]), float(cand_v[k])
        if v > tau or i in used_p or j in used_t:
            continue
        used_p.add(i)
        used_t.add(j)
        pairs.append((i, j, v))
    return MatchResult(
        pairs=pairs,
        unmatched_predictions=[i for i in range(len(pred)) if i not in used_p],
        unmatched_truth=[j for j in range(len(gt)) if j not in used_t],
        threshold=tau,
    )


def precision_recall_f1(result: MatchResult, n_pred: int, n_truth: int) -> Tuple[float, float, float]:
    """Precision is 1 with no predictions, recall is 1 with no truth, F1 is 0 when both are 0."""
    if n_pred < 0 or n_truth < 0:
        raise PreconditionError("counts must be non-negative")
    matched = result.n_matched
    precision = matched / n_pred if n_pred > 0 else 1.0
    recall = matched / n_truth if n_truth > 0 else 1.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1


def pr_sweep(predictions, truth, thresholds: Sequence[float] = config.EVAL_THRESHOLDS) -> pd.DataFrame:
    """Precision, recall and F1 at each matching distance."""
    pred, gt = _as_xy(predictions), _as_xy(truth)
    rows = []
    for tau in thresholds:
        res = match(pred, gt, tau)
        p, r, f1 = precision_recall_f1(res, len(pred), len(gt))
        rows.append({"tau_m": float(tau), "precision": p, "recall": r, "f1": f1,
                     "matched": res.n_matched})
    return pd.DataFrame(rows, columns=["tau_m", "precision", "recall", "f1", "matched"])


def distance_to_gt(predictions, truth, tau: float = config.GT_MATCH_RADIUS) -> DistanceStats:
    """Median and SD of matched prediction-to-truth distances at ``tau``."""
    pred, gt = _as_xy(predictions), _as_xy(truth)
    if len(pred) == 0 or len(gt) == 0:
        raise PreconditionError("distance_to_gt needs non-empty predictions and truth")
    d = match(pred, gt, tau).distances
    if d.size == 0:
        return DistanceStats(median=float("nan"), sd=float("nan"), n=0)
    return DistanceStats(median=float(np.median(d)), sd=sample_sd(d), n=int(d.size))


def pooled_distance_to_gt(runs: Sequence, truth, tau: float = config.GT_MATCH_RADIUS) -> DistanceStats:
    """Distance-to-GT over the matched pairs of several runs pooled together."""
    gt = _as_xy(truth)
    if len(gt) == 0:
        raise PreconditionError("pooled_distance_to_gt needs non-empty truth")
    pooled = [match(_as_xy(r), gt, tau).distances for r in runs]
    d = np.concatenate(pooled) if pooled else np.zeros(0)
    if d.size == 0:
        return DistanceStats(median=float("nan"), sd=float("nan"), n=0)
    return DistanceStats(median=float(np.median(d)), sd=sample_sd(d), n=int(d.size))
