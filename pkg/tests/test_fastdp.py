import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from seqoff import fastdp, oracle
from seqoff.channel import Discrete, Exponential
from seqoff.core import InfeasibleError, SystemParams, TaskProfile, block_energy


def test_schedule_examples(profile, params):
    s1 = fastdp.schedule(profile, params, 1)
    assert (s1.m_star, s1.t_star) == (13, pytest.approx(0.02))
    assert s1.budget_s == pytest.approx(0.26)
    s2 = fastdp.schedule(profile, params, 2)
    assert s2.m_star == 13
    assert s2.t_star == pytest.approx(0.0083333333, abs=1e-9)
    for s in (s1, s2):
        assert (s.m_star - 1) * params.coherence_s + s.t_star == pytest.approx(s.budget_s, abs=1e-12)


def test_schedule_without_budget(profile, params):
    tight = params.replace(deadline_s=0.09)
    assert not fastdp.schedule(profile, tight, 1).feasible


def test_exact_multiple_uses_a_full_last_block():
    assert fastdp.split_budget(0.06, 0.02) == (3, pytest.approx(0.02))
    m, t = fastdp.split_budget(0.061, 0.02)
    assert m == 4 and t == pytest.approx(0.001)
    assert fastdp.split_budget(0.0, 0.02) == (0, 0.0)


def test_single_block_is_closed_form(rayleigh):
    rule = rayleigh.rule(16)
    st_ = fastdp.build_stage(2e4, [0.013], 1e6, rule, 64)
    expected = np.expm1(st_.grid[:, None] / (1e6 * 0.013)) * 0.013 / rule.nodes[None, :]
    assert np.allclose(st_.q[0], expected, rtol=1e-14, atol=0)


def test_zero_data_costs_nothing(tables):
    for st_ in tables.stages.values():
        for q in st_.q:
            assert np.all(q[0] == 0.0)


def test_q_bar_is_the_expectation(tables):
    st_ = tables.stage(1)
    for q, qb in zip(st_.q, st_.q_bar):
        assert np.allclose(tables.rule.expect(q), qb, rtol=1e-12, atol=0)


def test_table_shapes(tables):
    for n, st_ in tables.stages.items():
        assert oracle.violation(st_.q[0], 0, "nondecreasing") == 0.0
        assert oracle.violation(st_.q[0], 1, "nonincreasing") == 0.0
        for qb in st_.q_bar:
            assert oracle.violation(qb, 0, "convex") <= 1e-6 * qb.max()


def test_stopping_values_bounded_by_local_branch(tables):
    for n in range(1, tables.n_subtasks + 1):
        stay = tables.continue_value(n)
        if math.isfinite(stay):
            assert np.all(tables.z_h[n] <= stay)
    # smallest gain node: offloading is too expensive, so the local branch wins
    assert tables.z_h[1][0] == tables.continue_value(1)


def test_unreachable_tail_is_infinite(tables):
    assert sorted(tables.stages) == [1, 2, 3, 4, 5, 6, 7]
    assert all(math.isinf(tables.z[n]) for n in range(8, 12))
    assert math.isfinite(tables.expected_energy)


def test_forced_offload_at_the_last_stage(tables):
    # stage 7 cannot continue, so its stopping value is the offload value
    st_ = tables.stage(7)
    assert np.array_equal(tables.z_h[7], st_.first_block_value(tables.rule.nodes))


def test_infeasible_instance_raises(profile, params, rayleigh):
    with pytest.raises(InfeasibleError):
        fastdp.build_tables(profile, params.replace(deadline_s=0.09), rayleigh, 32, 8)


def _random_layer(seed, mode):
    rng = np.random.default_rng(seed)
    grid = np.linspace(0, 3e4, 41)
    # a convex, increasing expected cost
    q = block_energy(grid, 1.0, 0.02 * rng.uniform(0.5, 2), 1e6) * rng.uniform(0.5, 5)
    return fastdp._Layer(grid, q, 0.02 * rng.uniform(0.5, 1.5), 1e6, mode), grid, q


@pytest.mark.parametrize("mode", ["continuous", "grid"])
@pytest.mark.parametrize("seed", range(5))
def test_fast_inner_minimum_matches_full_scan(seed, mode):
    layer, grid, q = _random_layer(seed, mode)
    assert layer.convex
    rng = np.random.default_rng(seed + 100)
    d = grid if mode == "grid" else rng.uniform(0, grid[-1], 60)
    h = rng.uniform(0.05, 200, d.size)
    v1, s1, r1 = layer.minimize(d, h)
    v2, _, _ = fastdp.scan_minimize(grid, q, d, h, layer.duration, 1e6, mode)
    assert np.allclose(v1, v2, rtol=1e-12, atol=0)
    assert np.allclose(s1 + r1, d, rtol=1e-12)


def test_non_convex_layer_falls_back_to_scan():
    grid = np.linspace(0, 1e4, 17)
    q = np.abs(np.sin(grid / 1e3)) * 1e-4
    layer = fastdp._Layer(grid, q, 0.02, 1e6, "continuous")
    assert not layer.convex
    d = np.linspace(0, 1e4, 9)
    v1, _, _ = layer.minimize(d, 3.0)
    v2, _, _ = fastdp.scan_minimize(grid, q, d, np.full(d.size, 3.0), 0.02, 1e6)
    assert np.array_equal(v1, v2)


def test_two_layers_on_two_states_match_enumeration():
    prof = TaskProfile.from_units([20], [60])
    par = SystemParams(1e6, 1e-28, 5e8, 5e8, 3e9, 0.04 + 20e6 / 3e9, 0.03)
    dist = Discrete((2.0, 30.0), (0.5, 0.5))
    assert fastdp.schedule(prof, par, 1).m_star == 2
    tab = fastdp.build_tables(prof, par, dist, 64, inner="grid")
    ref = oracle.dp_enumerate(prof, par, dist, 64)
    assert tab.expected_energy == pytest.approx(ref.optimum, rel=1e-9)


def test_three_stage_instance_matches_enumeration():
    prof, par, dist = oracle.tiny_instance()
    tab = fastdp.build_tables(prof, par, dist, 64, inner="grid")
    ref = oracle.dp_enumerate(prof, par, dist, 64)
    for n in (1, 2, 3):
        assert tab.z[n] == pytest.approx(ref.z[n], rel=1e-9)


def test_continuous_inner_is_no_worse_than_grid():
    prof, par, dist = oracle.tiny_instance()
    cont = fastdp.build_tables(prof, par, dist, 64)
    grid = fastdp.build_tables(prof, par, dist, 64, inner="grid")
    assert cont.expected_energy <= grid.expected_energy * (1 + 1e-12)


def test_q_lookup(tables):
    st_ = tables.stage(2)
    nodes = tables.rule.nodes
    assert fastdp.q_lookup(tables, 2, 1, st_.grid[100], nodes[5]) == st_.q[0][100, 5]
    assert fastdp.q_lookup(tables, 2, 3, 0.0, 17.0) == 0.0
    d = 0.5 * (st_.grid[100] + st_.grid[101])
    h = 0.5 * (nodes[5] + nodes[6])
    block = st_.q[0][100:102, 5:7]
    assert block.min() <= fastdp.q_lookup(tables, 2, 1, d, h) <= block.max()
    assert fastdp.q_lookup(tables, 2, 1, d, 1e6) == fastdp.q_lookup(tables, 2, 1, d, nodes[-1])
    with pytest.raises(IndexError):
        fastdp.q_lookup(tables, 2, 99, d, h)
    with pytest.raises(KeyError):
        fastdp.q_lookup(tables, 9, 1, 0.0, h)
    with pytest.raises(ValueError):
        fastdp.q_lookup(tables, 2, 1, 2 * st_.data, h)


def test_overflow_is_reported_as_warning():
    rule = Exponential(1.0).rule(8)
    st_ = fastdp.build_stage(1e7, [0.02, 0.001], 1e6, rule, 32)
    assert st_.warnings and np.isinf(st_.q[-1][-1, 0])
    prof = TaskProfile((1e6,), (1e7,))
    par = SystemParams(1e6, 1e-28, 5e8, 5e8, 3e9, 0.021 + 1e6 / 3e9, 0.02)
    with pytest.warns(RuntimeWarning, match="overflows"):
        tab = fastdp.build_tables(prof, par, Exponential(1.0), 32, 8)
    assert math.isfinite(tab.expected_energy)


def test_save_and_load_round_trip(tmp_path, tables):
    small = fastdp.build_tables(tables.profile, tables.params, tables.dist, 32, 16)
    fastdp.save_tables(small, tmp_path)
    back = fastdp.load_tables(tmp_path, expected_hash=small.params_hash)
    assert back.params_hash == small.params_hash
    assert np.array_equal(back.z[1:8], small.z[1:8])
    for n in small.stages:
        for a, b in zip(small.stages[n].q, back.stages[n].q):
            assert np.array_equal(a, b)
    with pytest.raises(fastdp.StaleTablesError):
        fastdp.load_tables(tmp_path, expected_hash="0" * 16)


@settings(max_examples=10, deadline=None)
@given(st.floats(1e3, 5e4), st.floats(1.0, 100.0))
def test_more_time_never_costs_more(d, mean):
    rule = Exponential(mean).rule(16)
    short = fastdp.build_stage(d, [0.02, 0.02, 0.01], 1e6, rule, 32).q_bar[0][-1]
    long = fastdp.build_stage(d, [0.02, 0.02, 0.02], 1e6, rule, 32).q_bar[0][-1]
    assert long <= short * (1 + 1e-12)
