import math
from itertools import combinations

import numpy as np
import pandas as pd
import pytest
from scipy.stats import chisquare

from conftest import make_grid, well_map
from energy.energy_map import unary_energy, unary_table
from errors import PreconditionError
from geometry.discs import overlap_area
from optimizer.birth_death import (RADII, RADIUS_PMF, BirthSampler, IterationRecord, RunTrace, SbdParams,
                                   birth_step, birth_weights, death_order, death_probability, death_step, run,
                                   sample_radius, schedule, validate_trace)
from optimizer.energy import ConfigurationState, config_energy, removal_delta
from rng import make_rng
from storage.models import ConfigPoint, Configuration, EnergyMap


def _random_configuration(rng, grid, n: int) -> Configuration:
    points = set()
    while len(points) < n:
        i, j = rng.integers(1, grid.height + 1), rng.integers(1, grid.width + 1)
        points.add(ConfigPoint(int(i), int(j), int(rng.integers(2, 11))))
    return Configuration(tuple(points))


# ── configuration energy ──

def test_empty_and_single_point_energy(random_map) -> None:
    assert config_energy(random_map, Configuration(), 10.0) == 0.0
    p = ConfigPoint(12, 30, 4)
    assert config_energy(random_map, [p], 10.0) == unary_energy(random_map, p.pixel, p.r)


def test_coincident_points_pay_full_overlap(zero_map) -> None:
    p = ConfigPoint(20, 20, 2)
    assert config_energy(zero_map, [p, p], 10.0) == pytest.approx(20.0)


def test_degenerate_map_has_zero_energy(zero_map) -> None:
    g = _random_configuration(np.random.default_rng(1), zero_map.grid, 15)
    assert config_energy(zero_map, g, 0.0) == 0.0


def test_removal_delta_singleton_and_disjoint(random_map, zero_map) -> None:
    p = ConfigPoint(5, 5, 3)
    assert removal_delta(random_map, Configuration((p,)), p, 10.0) == unary_energy(random_map, p.pixel, p.r)

    a, b = ConfigPoint(5, 5, 2), ConfigPoint(30, 30, 2)
    g = Configuration((a, b))
    assert removal_delta(zero_map, g, a, 10.0) == 0.0
    assert removal_delta(zero_map, g, b, 10.0) == 0.0


def test_removal_delta_matches_full_recompute(random_map) -> None:
    rng = np.random.default_rng(2)
    for _ in range(100):
        g = _random_configuration(rng, random_map.grid, 20)
        full = config_energy(random_map, g, 10.0)
        for p in g:
            expected = full - config_energy(random_map, g.without(p), 10.0)
            assert abs(removal_delta(random_map, g, p, 10.0) - expected) <= 1e-9


def test_removal_delta_requires_membership(random_map) -> None:
    with pytest.raises(PreconditionError):
        removal_delta(random_map, Configuration(), ConfigPoint(1, 1, 2), 10.0)


def test_configuration_state_tracks_energy(random_map) -> None:
    rng = np.random.default_rng(4)
    g = _random_configuration(rng, random_map.grid, 30)
    state = ConfigurationState(random_map, 10.0)
    for p in g:
        state.add(p)
    assert state.total_energy() == pytest.approx(config_energy(random_map, g, 10.0), abs=1e-9)

    for p in list(g)[::3]:
        state.remove(p)
    current = state.configuration()
    assert state.total_energy() == pytest.approx(config_energy(random_map, current, 10.0), abs=1e-9)
    for p in current:
        assert state.delta(p) == pytest.approx(removal_delta(random_map, current, p, 10.0), abs=1e-9)


def test_configuration_state_rejects_duplicates(random_map) -> None:
    state = ConfigurationState(random_map, 10.0)
    state.add(ConfigPoint(3, 3, 2))
    with pytest.raises(PreconditionError):
        state.add(ConfigPoint(3, 3, 2))
    with pytest.raises(PreconditionError):
        state.remove(ConfigPoint(4, 4, 2))


def test_configuration_rejects_duplicates() -> None:
    with pytest.raises(PreconditionError):
        Configuration((ConfigPoint(1, 1, 2), ConfigPoint(1, 1, 2)))


# ── schedule and death probability ──

def test_neutral_point_dies_half_the_time() -> None:
    for mode in ("text", "box"):
        params = SbdParams(schedule=mode)
        assert death_probability(0.0, 0, params) == pytest.approx(0.49975, abs=1e-6)


def test_death_probability_saturates() -> None:
    params = SbdParams()
    assert death_probability(1e9, 0, params) == 1.0
    assert death_probability(-1e9, 0, params) < 1e-300
    assert death_probability(0.0, 5000, params) < death_probability(0.0, 10, params)


def test_schedule_modes() -> None:
    text = SbdParams(epsilon=0.9, beta=0.99, schedule="text")
    box = SbdParams(epsilon=0.9, beta=0.99, schedule="box")
    assert schedule(2, text) == pytest.approx((0.99 ** 3, 0.9 ** 3))
    assert schedule(2, box) == pytest.approx((0.99 ** 3, 0.9))


@pytest.mark.parametrize("params", [
    SbdParams(epsilon=0.5),
    SbdParams(beta=2.0),
    SbdParams(beta=1.1, schedule="box"),
    SbdParams(),
])
def test_death_probability_at_extreme_iterations(params) -> None:
    for m in (1100, 10_000, 1_000_000):
        b, s = schedule(m, params)
        assert math.isfinite(b) and 0.0 <= s <= 1.0
        for delta in (-50.0, -1e-3, 0.0, 1e-3, 50.0):
            assert 0.0 <= death_probability(delta, m, params) <= 1.0


def test_death_probability_saturates_late() -> None:
    assert death_probability(0.0, 1100, SbdParams(epsilon=0.5)) == pytest.approx(0.0, abs=1e-300)
    steep = SbdParams(beta=2.0)
    assert death_probability(1.0, 1100, steep) == 1.0
    assert death_probability(-1.0, 1100, steep) < 1e-300
    assert schedule(1100, steep)[0] == pytest.approx(math.exp(700.0))


def test_run_survives_schedule_underflow(grid16) -> None:
    energy = well_map(grid16, [(8, 8)])
    params = SbdParams(n0=2, epsilon=0.5, t_wait=5000, max_iterations=1200)
    _, trace = run(energy, params, alpha=10.0)
    assert trace.iterations == 1200
    validate_trace(trace)


@pytest.mark.parametrize("kwargs", [
    {"n0": 0}, {"epsilon": 1.0}, {"epsilon": 0.0}, {"beta": 0.0}, {"t_wait": 0},
    {"schedule": "linear"}, {"birth_mode": "uniform"}, {"fixed_radius": 11},
])
def test_params_validation(kwargs) -> None:
    with pytest.raises(PreconditionError):
        SbdParams(**kwargs)


# ── birth ──

def test_radius_pmf() -> None:
    assert list(RADII) == list(range(2, 11))
    assert RADIUS_PMF[0] / RADIUS_PMF[-1] == pytest.approx(math.exp(0.8))
    assert RADIUS_PMF.sum() == pytest.approx(1.0)


def test_radius_draws_follow_pmf() -> None:
    rng = make_rng(42, "radius-test")
    draws = np.array([sample_radius(rng) for _ in range(100_000)])
    assert set(np.unique(draws)) <= set(range(2, 11))
    observed = np.array([(draws == k).sum() for k in RADII])
    assert chisquare(observed, RADIUS_PMF * draws.size).pvalue > 1e-3


def test_birth_weights_uniform_on_zero_map(zero_map) -> None:
    p = birth_weights(zero_map, 4)
    assert np.allclose(p, 1.0 / p.size)


def test_birth_weights_favour_low_energy(random_map) -> None:
    for mode in ("boltzmann", "literal"):
        p = birth_weights(random_map, 3, mode)
        assert p.sum() == pytest.approx(1.0, abs=1e-9)
        assert np.all(p > 0)
    u = unary_table(random_map, 3)
    p = birth_weights(random_map, 3)
    assert np.argmax(p) == np.argmin(u)


def test_birth_weights_stay_positive_on_steep_map(grid16) -> None:
    p = birth_weights(well_map(grid16, [(8, 8)], depth=-1e6), 2)
    assert np.all(p > 0)
    assert p.sum() == pytest.approx(1.0, abs=1e-9)


def test_sampler_draws_inside_grid(random_map) -> None:
    sampler = BirthSampler(random_map)
    rng = make_rng(1, "sampler")
    for _ in range(500):
        p = sampler.draw(5, rng)
        assert random_map.grid.contains(p.pixel)
        assert p.r == 5


def test_empty_wave_changes_nothing(zero_map) -> None:
    state = ConfigurationState(zero_map, 10.0)
    params = SbdParams(n0=1e-12)
    assert birth_step(state, BirthSampler(zero_map), params, make_rng(0, "sbd")) == 0
    assert len(state) == 0


def test_wave_shares_one_radius(zero_map) -> None:
    state = ConfigurationState(zero_map, 10.0)
    born = birth_step(state, BirthSampler(zero_map), SbdParams(n0=30), make_rng(3, "sbd"))
    assert born == len(state)
    assert len({p.r for p in state.points()}) == 1


def test_mean_births_match_poisson_rate(zero_map) -> None:
    sampler = BirthSampler(zero_map)
    params = SbdParams(n0=5)
    rng = make_rng(8, "sbd")
    counts = [birth_step(ConfigurationState(zero_map, 10.0), sampler, params, rng) for _ in range(1000)]
    assert abs(np.mean(counts) - 5) <= 4 * math.sqrt(5 / 1000)


def test_fixed_radius_births(zero_map) -> None:
    state = ConfigurationState(zero_map, 10.0)
    birth_step(state, BirthSampler(zero_map), SbdParams(n0=20, fixed_radius=7), make_rng(2, "sbd"))
    assert {p.r for p in state.points()} == {7}


# ── death ──

def _filled_state(energy: EnergyMap, n: int) -> ConfigurationState:
    state = ConfigurationState(energy, 0.0)
    for p in _random_configuration(np.random.default_rng(6), energy.grid, n):
        state.add(p)
    return state


def test_death_sweep_visits_worst_points_first(random_map) -> None:
    rng = np.random.default_rng(12)
    state = ConfigurationState(random_map, 10.0)
    for p in _random_configuration(rng, random_map.grid, 40):
        state.add(p)
    order = death_order(state)
    assert len(order) == 40
    deltas = [delta for _, delta in order]
    assert all(a >= b for a, b in zip(deltas, deltas[1:]))
    current = state.configuration()
    for p, delta in order[:5]:
        assert delta == pytest.approx(removal_delta(random_map, current, p, 10.0), abs=1e-9)


def test_neutral_sweep_removes_about_half(zero_map) -> None:
    state = _filled_state(zero_map, 50)
    removed = death_step(state, SbdParams(), 0, make_rng(5, "sbd"))
    assert 10 <= removed <= 40
    assert len(state) == 50 - removed


def test_late_sweeps_stop_killing(zero_map) -> None:
    state = _filled_state(zero_map, 50)
    assert death_step(state, SbdParams(epsilon=0.5), 60, make_rng(5, "sbd")) == 0


def test_terrible_points_always_die(grid40) -> None:
    energy = EnergyMap(grid=grid40, values=np.full(grid40.shape, 50.0))
    state = _filled_state(energy, 25)
    assert death_step(state, SbdParams(), 0, make_rng(5, "sbd")) == 25


# ── full runs ──

def test_unfavourable_map_keeps_empty_configuration(grid16) -> None:
    energy = EnergyMap(grid=grid16, values=np.ones(grid16.shape))
    best, trace = run(energy, SbdParams(n0=20, t_wait=20, max_iterations=200), alpha=10.0)
    assert len(best) == 0
    assert trace.best_energy == 0.0
    assert trace.no_improvement
    assert trace.stop_reason == "converged"
    assert trace.iterations == 20


def test_same_seed_same_trace(grid16) -> None:
    energy = well_map(grid16, [(5, 5), (11, 12)])
    params = SbdParams(n0=15, t_wait=15, max_iterations=150, seed=9)
    best_a, trace_a = run(energy, params, alpha=10.0)
    best_b, trace_b = run(energy, params, alpha=10.0)
    assert best_a == best_b
    pd.testing.assert_frame_equal(trace_a.to_frame(), trace_b.to_frame())


def test_trace_minimum_never_increases(grid16) -> None:
    energy = well_map(grid16, [(5, 5), (11, 12)])
    _, trace = run(energy, SbdParams(n0=15, t_wait=15, max_iterations=150, seed=3), alpha=10.0)
    h_min = trace.to_frame()["H_min"].to_numpy()
    assert np.all(np.diff(h_min) <= 0)
    assert h_min[-1] == trace.best_energy
    assert not trace.no_improvement


def test_validate_trace_rejects_rising_minimum() -> None:
    trace = RunTrace(seed=0, records=[IterationRecord(0, 3, -5.0, -5.0, 3, 0),
                                      IterationRecord(1, 3, -4.0, -4.0, 0, 0)])
    with pytest.raises(AssertionError):
        validate_trace(trace)


def test_max_iterations_stops_run(grid16) -> None:
    energy = well_map(grid16, [(8, 8)])
    _, trace = run(energy, SbdParams(n0=10, t_wait=1000, max_iterations=12), alpha=10.0)
    assert trace.iterations == 12
    assert trace.stop_reason == "max_iterations"


WELLS = [(4, 4), (12, 12), (4, 12)]
WELL_ALPHA = 1000.0


def _gaussian_wells(grid, wells, depth: float = 50.0) -> EnergyMap:
    ii, jj = np.meshgrid(np.arange(1, grid.height + 1), np.arange(1, grid.width + 1), indexing="ij")
    values = np.ones(grid.shape)
    for i, j in wells:
        values -= depth * np.exp(-((ii - i) ** 2 + (jj - j) ** 2) / 2.0)
    return EnergyMap(grid=grid, values=values)


def _exhaustive_minimum(energy: EnergyMap, r: int, alpha: float) -> float:
    """Exhaustive minimum of H over all configurations of at most three radius-r points."""
    u = unary_table(energy, r).ravel()
    n = u.size
    w = energy.grid.width
    xy = np.column_stack([np.arange(n) // w, np.arange(n) % w]).astype(float)
    d = np.hypot(xy[:, None, 0] - xy[None, :, 0], xy[:, None, 1] - xy[None, :, 1])
    pair = alpha * overlap_area(float(r), float(r), d) * 2.0 / (math.pi * r * r)

    best = min(0.0, float(u.min()))
    two = u[:, None] + u[None, :] + pair
    best = min(best, float(two[np.triu_indices(n, 1)].min()))
    for a, b in combinations(range(n), 2):
        c = np.arange(b + 1, n)
        if c.size == 0:
            continue
        tri = u[a] + u[b] + pair[a, b] + u[c] + pair[a, c] + pair[b, c]
        best = min(best, float(tri.min()))
    return best


@pytest.mark.parametrize("k", [1, 2, 3])
def test_run_reaches_exhaustive_optimum(grid16, k) -> None:
    energy = _gaussian_wells(grid16, WELLS[:k])
    exhaustive = _exhaustive_minimum(energy, 2, WELL_ALPHA)
    assert exhaustive < 0

    found = []
    for seed in range(10):
        params = SbdParams(n0=20, t_wait=50, max_iterations=400, fixed_radius=2, seed=seed)
        _, trace = run(energy, params, alpha=WELL_ALPHA)
        found.append(trace.best_energy)
    assert min(found) <= exhaustive + 0.05 * abs(exhaustive)
