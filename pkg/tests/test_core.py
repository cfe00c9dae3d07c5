import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from seqoff.core import (
    TaskProfile,
    bits_to_nats,
    block_energy,
    edge_suffix_time,
    local_energy,
    local_prefix_time,
    local_time,
    offload_budget,
)


def test_units_are_converted_to_cycles_and_nats(profile):
    assert profile.n_subtasks == 10
    assert profile.cycles[0] == 7e6
    assert profile.input_nats[0] == pytest.approx(36e3 * math.log(2))


def test_profile_rejects_bad_input():
    with pytest.raises(ValueError):
        TaskProfile((1.0, 2.0), (1.0,))
    with pytest.raises(ValueError):
        TaskProfile((), ())
    with pytest.raises(ValueError):
        TaskProfile((-1.0,), (1.0,))
    with pytest.raises(ValueError):
        TaskProfile((1.0,), (math.nan,))


def test_prefix_and_suffix(profile):
    assert profile.prefix_cycles(1) == 0
    assert profile.prefix_cycles(3) == 37e6
    assert profile.suffix_cycles(1) == 270e6
    assert profile.suffix_cycles(10) == 40e6
    for bad in (0, 11):
        with pytest.raises(IndexError):
            profile.prefix_cycles(bad)


def test_params_validation(params):
    with pytest.raises(ValueError):
        params.replace(f_l=6e8)
    with pytest.raises(ValueError):
        params.replace(f_e=4e8)
    with pytest.raises(ValueError):
        params.replace(deadline_s=0.0)
    assert params.replace(deadline_s=0.4).deadline_s == 0.4


def test_local_time_and_energy():
    assert local_time(5e8, 5e8) == 1.0
    with pytest.raises(ValueError):
        local_time(1.0, 0.0)
    assert local_energy(7e6, 5e8, 1e-28) == pytest.approx(1.75e-4)


def test_block_energy_values():
    assert block_energy(0.0, 3.0, 0.01, 1e6) == 0.0
    d, h, t, w = 5000.0, 50.0, 0.02, 1e6
    assert block_energy(d, h, t, w) == pytest.approx(math.expm1(d / (w * t)) * t / h, rel=1e-15)
    out = block_energy(np.array([0.0, 1e3]), np.array([[1.0], [2.0]]), 0.01, 1e6)
    assert out.shape == (2, 2)


def test_block_energy_overflow_is_inf():
    assert math.isinf(block_energy(1e9, 1.0, 1e-3, 1e6))


@pytest.mark.parametrize("kw", [dict(h=0.0), dict(t=0.0), dict(d=-1.0)])
def test_block_energy_rejects_bad_arguments(kw):
    args = dict(d=1.0, h=1.0, t=1.0) | kw
    with pytest.raises(ValueError):
        block_energy(args["d"], args["h"], args["t"], 1e6)


@given(st.floats(0, 1e5), st.floats(0, 1e5), st.floats(0.1, 100), st.floats(1e-3, 0.1))
def test_block_energy_is_convex_and_increasing_in_data(a, b, h, t):
    ea, eb = block_energy(a, h, t, 1e6), block_energy(b, h, t, 1e6)
    mid = block_energy((a + b) / 2, h, t, 1e6)
    assert mid <= (ea + eb) / 2 * (1 + 1e-12) + 1e-300
    if a <= b:
        assert ea <= eb


def test_bits_to_nats():
    assert bits_to_nats(1.0) == pytest.approx(math.log(2))
    with pytest.raises(ValueError):
        bits_to_nats(-1)


def test_budget_on_default_instance(profile, params):
    assert edge_suffix_time(profile, 1, params.f_e) == pytest.approx(0.09)
    assert local_prefix_time(profile, 1, params.f_l) == 0.0
    assert offload_budget(profile, params, 1, params.f_l) == pytest.approx(0.26, abs=1e-15)
    assert offload_budget(profile, params, 2, params.f_l) == pytest.approx(0.2483333333, abs=1e-9)
