"""Stochastic birth & death optimisation over marked disc configurations.

Each iteration:
  birth  - a Poisson(N0) wave of points sharing one radius, located by a
           probability table derived from U(., r);
  death  - points visited from worst to best removal delta, each removed with
           probability s_m a / (1 + s_m a), a = exp(b_m * delta), deltas
           refreshed after every removal;
  check  - the best configuration is kept; the run stops after T_wait
           iterations without strict improvement or at max_iterations.

Draws are consumed in the order N_m, r_m, locations, death coin flips.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.special import expit
from scipy.stats import median_abs_deviation
from tqdm import tqdm

import config
from energy.energy_map import unary_table
from errors import PreconditionError
from optimizer.energy import ConfigurationState
from rng import make_rng
from storage.models import ConfigPoint, Configuration, EnergyMap

logger = logging.getLogger(__name__)

RADII = np.arange(config.RADIUS_MIN, config.RADIUS_MAX + 1)
_RADIUS_WEIGHTS = np.exp(-RADII / config.RADIUS_DECAY)
RADIUS_PMF = _RADIUS_WEIGHTS / _RADIUS_WEIGHTS.sum()

TRACE_COLUMNS = ["iteration", "config_size", "H", "H_min", "births", "deaths"]


@dataclass(frozen=True)
class SbdParams:
    n0: float = config.N0
    epsilon: float = config.EPSILON
    beta: float = config.BETA
    t_wait: int = config.T_WAIT
    schedule: str = "text"  # "text": epsilon^m, "box": constant epsilon
    seed: int = config.SEED
    max_iterations: int = config.MAX_ITERATIONS
    birth_mode: str = "boltzmann"  # or "literal" (P proportional to shifted U)
    fixed_radius: Optional[int] = None

    def __post_init__(self):
        if not self.n0 > 0:
            raise PreconditionError(f"N0 must be positive, got {self.n0}")
        if not (0.0 < self.epsilon < 1.0):
            raise PreconditionError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if not self.beta > 0:
            raise PreconditionError(f"beta must be positive, got {self.beta}")
        if self.t_wait < 1:
            raise PreconditionError(f"T_wait must be >= 1, got {self.t_wait}")
        if self.max_iterations < 1:
            raise PreconditionError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if self.schedule not in ("text", "box"):
            raise PreconditionError(f"schedule must be 'text' or 'box', got {self.schedule!r}")
        if self.birth_mode not in ("boltzmann", "literal"):
            raise PreconditionError(f"birth_mode must be 'boltzmann' or 'literal', got {self.birth_mode!r}")
        if self.fixed_radius is not None and not (config.RADIUS_MIN <= self.fixed_radius <= config.RADIUS_MAX):
            raise PreconditionError(f"fixed_radius must lie in {config.RADIUS_MIN}..{config.RADIUS_MAX}")

    @classmethod
    def from_config(cls, cfg, seed: Optional[int] = None) -> "SbdParams":
        s = cfg.sbd
        return cls(n0=s.n0, epsilon=s.epsilon, beta=s.beta, t_wait=s.t_wait,
                   schedule=s.schedule, seed=cfg.seed if seed is None else seed,
                   max_iterations=s.max_iterations, birth_mode=s.birth_mode,
                   fixed_radius=s.fixed_radius)


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    config_size: int
    energy: float
    energy_min: float
    births: int
    deaths: int


@dataclass
class RunTrace:
    seed: int
    records: List[IterationRecord] = field(default_factory=list)
    best: Configuration = field(default_factory=Configuration)
    best_energy: float = 0.0
    no_improvement: bool = True
    stop_reason: str = ""

    @property
    def iterations(self) -> int:
        return len(self.records)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [(r.iteration, r.config_size, r.energy, r.energy_min, r.births, r.deaths)
             for r in self.records],
            columns=TRACE_COLUMNS)


def validate_trace(trace: RunTrace):
    """Raise if H_min ever increases along the trace."""
    prev = math.inf
    for rec in trace.records:
        if rec.energy_min > prev:
            raise AssertionError(
                f"H_min increased at iteration {rec.iteration}: {prev} -> {rec.energy_min}")
        prev = rec.energy_min


# ── Schedule ──

def log_schedule(m: int, params: SbdParams) -> Tuple[float, float]:
    """(log b_m, log s_m) at iteration m (0-based).

    The first sweep is one discretisation step in, so exponents run from 1.
    Logs stay finite for any m where the powers themselves under- or overflow.
    """
    step = m + 1
    log_b = step * math.log(params.beta)
    log_eps = math.log(params.epsilon)
    log_s = step * log_eps if params.schedule == "text" else log_eps
    return log_b, log_s


def schedule(m: int, params: SbdParams) -> Tuple[float, float]:
    """(b_m, s_m): inverse-temperature and discretisation factors, b capped at exp(EXP_CLAMP)."""
    log_b, log_s = log_schedule(m, params)
    return math.exp(min(log_b, config.EXP_CLAMP)), math.exp(log_s)


def death_probability(delta: float, m: int, params: SbdParams) -> float:
    """s a / (1 + s a) with a = exp(b * delta), evaluated as a clamped logistic in log space."""
    log_b, log_s = log_schedule(m, params)
    z = 0.0
    if delta != 0.0:
        log_mag = log_b + math.log(abs(delta))
        mag = config.EXP_CLAMP if log_mag >= math.log(config.EXP_CLAMP) else math.exp(log_mag)
        z = math.copysign(mag, delta)
    return float(expit(log_s + z))


# ── Birth ──

def sample_radius(rng: np.random.Generator) -> int:
    """r in {2..10} with P(r = k) proportional to exp(-k / 10)."""
    return int(rng.choice(RADII, p=RADIUS_PMF))


def birth_weights(energy: EnergyMap, r: int, mode: str = "boltzmann") -> np.ndarray:
    """Birth probability table over the grid for radius ``r`` (shape (h, w), sums to 1).

    Boltzmann mode: P(x) proportional to exp(-U(x, r) / tau), tau the median
    absolute deviation of U (standard deviation when the MAD is degenerate),
    floored at 1e-6. Literal mode: P proportional to U shifted to be positive.
    """
    u = unary_table(energy, r)
    if mode == "literal":
        weights = u - u.min() + 1e-12
        return weights / weights.sum()

    tau = float(median_abs_deviation(u, axis=None))
    if tau < 1e-6:
        tau = float(u.std())
    tau = max(tau, 1e-6)
    z = np.maximum(-(u - u.min()) / tau, -config.EXP_CLAMP)
    weights = np.exp(z)
    return weights / weights.sum()


class BirthSampler:
    """Caches one cumulative birth table per radius."""

    def __init__(self, energy: EnergyMap, mode: str = "boltzmann"):
        self.energy = energy
        self.mode = mode
        self._cdf: Dict[int, np.ndarray] = {}

    def cdf(self, r: int) -> np.ndarray:
        if r not in self._cdf:
            self._cdf[r] = np.cumsum(birth_weights(self.energy, r, self.mode).ravel())
        return self._cdf[r]

    def draw(self, r: int, rng: np.random.Generator) -> ConfigPoint:
        cdf = self.cdf(r)
        idx = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
        idx = min(idx, cdf.size - 1)
        w = self.energy.grid.width
        return ConfigPoint(idx // w + 1, idx % w + 1, r)


def birth_step(state: ConfigurationState, sampler: BirthSampler, params: SbdParams,
               rng: np.random.Generator) -> int:
    """Append a Poisson(N0) wave of radius-r_m points; returns the number born."""
    n = int(rng.poisson(params.n0))
    r = params.fixed_radius if params.fixed_radius is not None else sample_radius(rng)
    born = 0
    for _ in range(n):
        for _attempt in range(config.BIRTH_REDRAWS + 1):
            p = sampler.draw(r, rng)
            if p not in state:
                state.add(p)
                born += 1
                break
        else:
            logger.debug("birth skipped after %d duplicate redraws (r=%d)", config.BIRTH_REDRAWS, r)
    return born


# ── Death ──

def death_order(state: ConfigurationState) -> List[Tuple[ConfigPoint, float]]:
    """Points with their removal deltas at sweep start, highest delta first (ties by i, j, r)."""
    deltas = [(p, state.delta(p)) for p in state.points()]
    return sorted(deltas, key=lambda item: (-item[1], item[0].i, item[0].j, item[0].r))


def death_step(state: ConfigurationState, params: SbdParams, m: int,
               rng: np.random.Generator) -> int:
    """Sequential sweep from the highest removal delta down; returns the number removed."""
    order = death_order(state)
    removed = 0
    for p, first_delta in order:
        # deltas of points visited later reflect removals already made
        delta = first_delta if removed == 0 else state.delta(p)
        if rng.random() < death_probability(delta, m, params):
            state.remove(p)
            removed += 1
    return removed


# ── Main loop ──

def run(energy: EnergyMap, params: SbdParams, alpha: float = config.ALPHA,
        rng: Optional[np.random.Generator] = None,
        progress: bool = False) -> Tuple[Configuration, RunTrace]:
    """Minimise H over configurations; returns (g*, trace)."""
    rng = rng if rng is not None else make_rng(params.seed, "sbd")
    state = ConfigurationState(energy, alpha)
    sampler = BirthSampler(energy, params.birth_mode)
    trace = RunTrace(seed=params.seed)

    best = Configuration()
    h_min = 0.0
    patience = 0
    m = 0
    bar = tqdm(total=params.max_iterations, desc="SBD", unit=" it", disable=not progress)
    while patience < params.t_wait and m < params.max_iterations:
        births = birth_step(state, sampler, params, rng)
        deaths = death_step(state, params, m, rng)

        h = state.total_energy()
        if h < h_min:
            h_min = h
            best = state.configuration()
            patience = 0
            trace.no_improvement = False
        else:
            patience += 1

        trace.records.append(IterationRecord(m, len(state), h, h_min, births, deaths))
        m += 1
        bar.update(1)
        if m % 100 == 0:
            bar.set_postfix(size=len(state), H=f"{h:.1f}", H_min=f"{h_min:.1f}")
    bar.close()

    trace.best = best
    trace.best_energy = h_min
    trace.stop_reason = "converged" if patience >= params.t_wait else "max_iterations"
    if trace.no_improvement:
        logger.warning("SBD run (seed %d) never improved on the empty configuration "
                       "after %d iterations (%s)", params.seed, m, trace.stop_reason)
    else:
        logger.info("SBD run (seed %d): %s after %d iterations, |g*| = %d, H_min = %.4f",
                    params.seed, trace.stop_reason, m, len(best), h_min)
    validate_trace(trace)
    return best, trace
