import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from core import HarvestTrace, run_simulation
from exceptions import ConfigurationError, SizeError
from harvest import DensityProfile, gen_deterministic, gen_poisson
from metrics import remark2_throughput
from oracle import brute_force_optimum, build_flow_instance, enumerate_rr_orderings, offline_optimum
from policies import RoundRobinPolicy, UniformizingPolicy, UropPolicy
from schemas import NetworkConfig


@st.composite
def tiny_instances(draw, max_m=4, max_n=6):
    m = draw(st.integers(min_value=1, max_value=max_m))
    k = draw(st.integers(min_value=1, max_value=min(m, 2)))
    n = draw(st.integers(min_value=1, max_value=max_n))
    energy = st.sampled_from([0.0, 0.5, 1.0, 2.0])
    grid = draw(st.lists(st.lists(energy, min_size=n, max_size=n), min_size=m, max_size=m))
    b0 = draw(st.lists(st.integers(0, 2), min_size=m, max_size=m))
    return NetworkConfig(m=m, k=k, horizon_n=n), HarvestTrace.from_rows(grid, b0)


# ------------------------ Offline optimum ------------------------
def test_oracle_on_hand_trace():
    config = NetworkConfig(m=3, k=1, horizon_n=7)
    trace = HarvestTrace.from_rows(np.zeros((3, 7)), [2, 1, 0])
    assert offline_optimum(trace, config) == 3


def test_oracle_limited_by_channel_slots():
    config = NetworkConfig(m=2, k=1, horizon_n=2)
    assert offline_optimum(HarvestTrace.from_rows(np.zeros((2, 2)), [2, 2]), config) == 2


def test_oracle_graph_shape():
    config = NetworkConfig(m=3, k=2, horizon_n=4)
    instance = build_flow_instance(HarvestTrace.from_rows(np.ones((3, 4))), config)
    assert instance.n_vertices == 2 + 4 + 3 * 4
    assert instance.node_vertex(0, 1) == 6
    assert instance.node_vertex(2, 4) == instance.n_vertices - 1


def test_oracle_matches_remark2_on_uniform_traces():
    config = NetworkConfig(m=4, k=2, horizon_n=10)
    trace = gen_deterministic(config, DensityProfile.uniform(4, 0.5))
    assert offline_optimum(trace, config) == remark2_throughput(trace, config) == 8

    config = NetworkConfig(m=2, k=1, horizon_n=10)
    saturated = HarvestTrace.from_rows(np.zeros((2, 10)), [10, 10])
    assert offline_optimum(saturated, config) == remark2_throughput(saturated, config) == 10


def test_oracle_zero_trace():
    config = NetworkConfig(m=3, k=2, horizon_n=5)
    assert offline_optimum(HarvestTrace.from_rows(np.zeros((3, 5))), config) == 0


def test_oracle_with_all_channels_equals_running_everyone():
    config = NetworkConfig(m=3, k=3, horizon_n=6)
    trace = gen_poisson(config, DensityProfile.uniform(3, 0.7), seed=13)
    everyone = run_simulation(config, trace, UropPolicy(3, 3, seed=0))
    assert offline_optimum(trace, config) == everyone.total_sent


def test_oracle_bounds_every_policy():
    config = NetworkConfig(m=6, k=2, horizon_n=30)
    trace = gen_poisson(config, DensityProfile.uniform(6, 0.9), seed=4)
    best = offline_optimum(trace, config)
    for policy in (UropPolicy(6, 2, seed=1), RoundRobinPolicy(6, 2, seed=1), UniformizingPolicy(6, 2, seed=1)):
        assert run_simulation(config, trace, policy).total_sent <= best


def test_up_reaches_optimum_on_hand_and_uniform_traces():
    config = NetworkConfig(m=3, k=1, horizon_n=3)
    trace = HarvestTrace.from_rows(np.zeros((3, 3)), [2, 1, 0])
    up = run_simulation(config, trace, UniformizingPolicy(3, 1, order=[0, 1, 2]))
    assert up.total_sent == offline_optimum(trace, config) == 3

    config = NetworkConfig(m=4, k=2, horizon_n=10)
    trace = gen_deterministic(config, DensityProfile.uniform(4, 0.5))
    up = run_simulation(config, trace, UniformizingPolicy(4, 2, seed=3))
    assert up.total_sent == offline_optimum(trace, config)


# ------------------------ Brute force ------------------------
@settings(max_examples=40, deadline=None)
@given(tiny_instances())
def test_brute_force_agrees_with_oracle(instance):
    config, trace = instance
    assert brute_force_optimum(trace, config) == offline_optimum(trace, config)


@st.composite
def capped_instances(draw):
    config, trace = draw(tiny_instances())
    cap = draw(st.sampled_from([1.0, 1.5, 2.0, 3.0]))
    b0 = np.minimum(trace.initial_battery, 1.0)
    capped = NetworkConfig(m=config.m, k=config.k, horizon_n=config.horizon_n, battery_cap=cap)
    return capped, HarvestTrace.from_rows(trace.grid, b0)


@settings(max_examples=40, deadline=None)
@given(capped_instances())
def test_capped_oracle_overestimates_by_at_most_one_packet_per_node(instance):
    config, trace = instance
    exact = brute_force_optimum(trace, config)
    relaxed = offline_optimum(trace, config)
    assert exact <= relaxed <= exact + config.m


def test_capped_oracle_on_overflowing_trace():
    # Node 0 overflows every slot yet still sends one packet per slot.
    config = NetworkConfig(m=2, k=1, horizon_n=4, battery_cap=1.5)
    trace = HarvestTrace.from_rows([[1.5, 1.5, 1.5, 1.5], [0.0, 0.0, 0.0, 0.0]])
    assert brute_force_optimum(trace, config) == offline_optimum(trace, config) == 4


def test_brute_force_size_limit():
    config = NetworkConfig(m=5, k=1, horizon_n=3)
    with pytest.raises(SizeError) as info:
        brute_force_optimum(HarvestTrace.from_rows(np.zeros((5, 3))), config)
    assert info.value.status_code == 413


# ------------------------ RR orderings ------------------------
def test_rr_orderings_agree_on_full_batteries():
    config = NetworkConfig(m=4, k=2, horizon_n=6)
    result = enumerate_rr_orderings(HarvestTrace.from_rows(np.ones((4, 6))), config)
    assert result.orderings == 6
    assert result.spread == 0
    assert result.max_throughput == 12


def test_rr_ordering_worst_case_reaches_m_minus_k():
    config = NetworkConfig(m=4, k=2, horizon_n=2)
    grid = np.zeros((4, 2))
    grid[0, 1] = grid[1, 1] = 1.0
    result = enumerate_rr_orderings(HarvestTrace.from_rows(grid), config)
    assert (result.min_throughput, result.max_throughput) == (0, 2)
    assert result.spread == config.m - config.k


@st.composite
def rr_instances(draw):
    m, k = draw(st.sampled_from([(2, 1), (4, 1), (4, 2), (6, 1), (6, 2)]))
    n = draw(st.integers(min_value=1, max_value=8 if m < 6 else 5))
    grid = draw(st.lists(st.lists(st.sampled_from([0.0, 0.5, 1.0, 3.0]), min_size=n, max_size=n),
                         min_size=m, max_size=m))
    return NetworkConfig(m=m, k=k, horizon_n=n), HarvestTrace.from_rows(grid)


@settings(max_examples=50, deadline=None)
@given(rr_instances())
def test_rr_ordering_spread_is_at_most_m_minus_k(instance):
    config, trace = instance
    assert enumerate_rr_orderings(trace, config).spread <= config.m - config.k


def test_rr_ordering_limits():
    with pytest.raises(SizeError):
        enumerate_rr_orderings(HarvestTrace.from_rows(np.zeros((7, 2))), NetworkConfig(m=7, k=1, horizon_n=2))
    with pytest.raises(ConfigurationError):
        enumerate_rr_orderings(HarvestTrace.from_rows(np.zeros((4, 2))), NetworkConfig(m=4, k=3, horizon_n=2))
