"""Configuration energy H(g) and the incremental bookkeeping used by the death sweep."""

import math
from collections import defaultdict
from typing import Dict, Iterable, List, Tuple

import numpy as np

import config
from energy.energy_map import unary_energy
from errors import PreconditionError
from geometry.discs import disc_overlap_area, overlap_area
from storage.models import ConfigPoint, Configuration, EnergyMap


def pair_term(p: ConfigPoint, q: ConfigPoint, alpha: float) -> float:
    """Contribution of the unordered pair {p, q} to H: both normalised overlaps."""
    area = disc_overlap_area(p.pixel, p.r, q.pixel, q.r)
    if area == 0.0:
        return 0.0
    return alpha * (area / (math.pi * q.r ** 2) + area / (math.pi * p.r ** 2))


def config_energy(energy: EnergyMap, g: Iterable[ConfigPoint], alpha: float) -> float:
    """H(g) = sum_p [U(p) + alpha * sum_{q != p} A(p, q) / (pi r_q^2)], by direct double sum.

    Accepts any sequence of points; the inner sum skips by position, so a
    repeated point interacts with its copy.
    """
    points = list(g)
    total = 0.0
    for p in points:
        energy.grid.require(p.pixel)
        total += unary_energy(energy, p.pixel, p.r)
    if len(points) < 2 or alpha == 0:
        return total

    xy = np.array([p.pixel for p in points], dtype=float)
    r = np.array([p.r for p in points], dtype=float)
    d = np.hypot(xy[:, None, 0] - xy[None, :, 0], xy[:, None, 1] - xy[None, :, 1])
    area = overlap_area(r[:, None], r[None, :], d)
    np.fill_diagonal(area, 0.0)
    # row p, column q: A(p, q) normalised by the area of q
    return total + alpha * float((area / (math.pi * r[None, :] ** 2)).sum())


def removal_delta(energy: EnergyMap, g: Configuration, p: ConfigPoint, alpha: float) -> float:
    """H(g) - H(g without p), computed from p's own terms only."""
    if p not in g:
        raise PreconditionError(f"point {p} is not in the configuration")
    delta = unary_energy(energy, p.pixel, p.r)
    for q in g:
        if q != p:
            delta += pair_term(p, q, alpha)
    return delta


class ConfigurationState:
    """Mutable configuration with cached unary energies and overlap neighbours.

    Neighbour lookups go through a bucket grid with cells as wide as the
    largest possible centre distance of two overlapping discs, so adding or
    removing a point touches only the 3x3 surrounding cells.
    """

    def __init__(self, energy: EnergyMap, alpha: float):
        self.energy = energy
        self.alpha = alpha
        self.cell = 2 * config.RADIUS_MAX
        self.unary: Dict[ConfigPoint, float] = {}
        self.neighbours: Dict[ConfigPoint, Dict[ConfigPoint, float]] = {}
        self.buckets: Dict[Tuple[int, int], set] = defaultdict(set)

    def __len__(self) -> int:
        return len(self.unary)

    def __contains__(self, p: ConfigPoint) -> bool:
        return p in self.unary

    def _bucket(self, p: ConfigPoint) -> Tuple[int, int]:
        return (p.i // self.cell, p.j // self.cell)

    def _nearby(self, p: ConfigPoint) -> Iterable[ConfigPoint]:
        bi, bj = self._bucket(p)
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                cell = self.buckets.get((bi + di, bj + dj))
                if cell:
                    yield from cell

    def add(self, p: ConfigPoint, unary: float = None):
        if p in self.unary:
            raise PreconditionError(f"point {p} already in the configuration")
        self.energy.grid.require(p.pixel)
        self.unary[p] = unary_energy(self.energy, p.pixel, p.r) if unary is None else unary
        links = {}
        for q in self._nearby(p):
            term = pair_term(p, q, self.alpha)
            if term != 0.0:
                links[q] = term
                self.neighbours[q][p] = term
        self.neighbours[p] = links
        self.buckets[self._bucket(p)].add(p)

    def remove(self, p: ConfigPoint):
        if p not in self.unary:
            raise PreconditionError(f"point {p} is not in the configuration")
        for q in self.neighbours.pop(p):
            del self.neighbours[q][p]
        del self.unary[p]
        cell = self.buckets[self._bucket(p)]
        cell.discard(p)
        if not cell:
            del self.buckets[self._bucket(p)]

    def delta(self, p: ConfigPoint) -> float:
        """H(g) - H(g without p) for the current configuration."""
        return self.unary[p] + sum(self.neighbours[p][q] for q in sorted(self.neighbours[p]))

    def total_energy(self) -> float:
        """H(g), summed in sorted point order so equal configurations give equal floats."""
        total = 0.0
        for p in sorted(self.unary):
            total += self.unary[p]
            for q in sorted(self.neighbours[p]):
                if p < q:
                    total += self.neighbours[p][q]
        return total

    def points(self) -> List[ConfigPoint]:
        return sorted(self.unary)

    def configuration(self) -> Configuration:
        return Configuration(tuple(self.unary))
