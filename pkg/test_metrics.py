import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from core import HarvestTrace, run_simulation
from exceptions import DomainError, InvariantError, ParameterError
from harvest import gen_deterministic, make_profile
from metrics import (
    capacity_check,
    density,
    efficiency_curve,
    efficiency_report,
    extract_t0,
    jain_fairness,
    partial_density,
    remark2_throughput,
    rr_efficiency_prediction,
    rr_prediction_from_densities,
    theorem4_lower_bound,
    urop_lower_bound,
)
from policies import RoundRobinPolicy, UropPolicy
from schemas import NetworkConfig, ProfileSpec

FULL_SCALE = NetworkConfig(m=100, k=10, horizon_n=2000)
HIGH = ProfileSpec(count_high=25, d_high=3, d_low=0.3)
LOW = ProfileSpec(count_high=5, d_high=2.1, d_low=0.1)


@pytest.fixture
def hand_run():
    config = NetworkConfig(m=3, k=1, horizon_n=7)
    trace = HarvestTrace.from_rows(np.zeros((3, 7)), [2, 1, 0])
    return run_simulation(config, trace, UropPolicy(3, 1, order=[0, 1, 2])), trace


# ------------------------ Density ------------------------
def test_density_of_empty_trace_is_zero():
    config = NetworkConfig(m=3, k=1, horizon_n=5)
    assert density(HarvestTrace.from_rows(np.zeros((3, 5))), config) == 0.0


def test_density_of_high_profile():
    trace = gen_deterministic(FULL_SCALE, make_profile(HIGH, 100))
    assert density(trace, FULL_SCALE) == pytest.approx(0.975, abs=0.005)


def test_partial_density():
    config = NetworkConfig(m=2, k=1, horizon_n=10)
    steady = gen_deterministic(config, make_profile(ProfileSpec(d_low=0.8), 2))
    assert partial_density(steady, config, 0) == pytest.approx(density(steady, config))
    assert partial_density(steady, config, 5) == pytest.approx(density(steady, config), abs=0.2)

    grid = np.zeros((2, 10))
    grid[:, 6] = 3.0
    burst = HarvestTrace.from_rows(grid)
    assert partial_density(burst, config, 5) > density(burst, config)

    with pytest.raises(ParameterError):
        partial_density(burst, config, 10)


# ------------------------ Capacity ------------------------
def test_capacity_saturated_when_energy_exceeds_slots():
    config = NetworkConfig(m=2, k=1, horizon_n=10)
    result = capacity_check(HarvestTrace.from_rows(np.zeros((2, 10)), [10, 10]), config, 0)
    assert not result.admissible
    assert result.max_efficiency == pytest.approx(0.5)
    assert result.status == "saturated"


def test_capacity_admissible():
    config = NetworkConfig(m=2, k=1, horizon_n=10)
    assert capacity_check(HarvestTrace.from_rows(np.zeros((2, 10))), config, 0).admissible
    trace = gen_deterministic(NetworkConfig(m=9, k=3, horizon_n=10), make_profile(ProfileSpec(d_low=0.9), 9))
    assert capacity_check(trace, NetworkConfig(m=9, k=3, horizon_n=10), 0).admissible


# ------------------------ RR prediction ------------------------
def test_rr_prediction_high_and_low_density():
    high = gen_deterministic(FULL_SCALE, make_profile(HIGH, 100))
    low = gen_deterministic(FULL_SCALE, make_profile(LOW, 100))
    assert rr_efficiency_prediction(high, FULL_SCALE) == pytest.approx(0.487, abs=0.001)
    assert rr_efficiency_prediction(low, FULL_SCALE) == pytest.approx(0.725, abs=0.001)


def test_rr_prediction_without_heavy_nodes_is_one():
    assert rr_prediction_from_densities([0.5, 1.0, 0.2], sigma=20) == 1.0
    assert rr_prediction_from_densities([0.0, 0.0], sigma=3) == 1.0


def test_rr_prediction_worst_case_is_k_over_m():
    densities = [5.0, 5.0] + [0.0] * 8
    assert rr_prediction_from_densities(densities, sigma=200) == pytest.approx(2 / 10)


def test_rr_prediction_non_integer_share():
    # RR grants the heavy node 2 of 1.5 average slots; it had 3 packets.
    assert rr_prediction_from_densities([2.0, 0.0, 0.0], sigma=1.5) == pytest.approx(2 / 3)


def test_rr_measured_matches_prediction_on_deterministic_trace():
    trace = gen_deterministic(FULL_SCALE, make_profile(HIGH, 100))
    run = run_simulation(FULL_SCALE, trace, RoundRobinPolicy(100, 10, seed=0))
    measured = efficiency_report(run, trace).efficiency
    assert measured == pytest.approx(rr_efficiency_prediction(trace, FULL_SCALE), abs=0.01)


# ------------------------ UROP bounds ------------------------
def test_urop_lower_bound_values():
    assert urop_lower_bound(FULL_SCALE, 0.975) == pytest.approx(1 - 200 / 487.5)
    assert urop_lower_bound(FULL_SCALE, 0.2) == pytest.approx(0.9375)
    values = [urop_lower_bound(NetworkConfig(m=100, k=10, horizon_n=n), 0.5) for n in (2000, 10_000, 100_000)]
    assert values == sorted(values)
    assert values[-1] > 0.99


@pytest.mark.parametrize("D", [0.0, 1.0, 1.3, -0.2])
def test_urop_lower_bound_domain(D):
    with pytest.raises(DomainError):
        urop_lower_bound(FULL_SCALE, D)


def test_idle_slot_bound_on_hand_trace(hand_run):
    run, trace = hand_run
    assert extract_t0(run) == 5
    assert theorem4_lower_bound(run, trace) == pytest.approx(1 / 3)
    assert theorem4_lower_bound(run, trace, T0=7) == 1.0
    assert efficiency_report(run, trace).efficiency >= theorem4_lower_bound(run, trace)


# ------------------------ Efficiency and fairness ------------------------
def test_efficiency_report_on_hand_trace(hand_run):
    run, trace = hand_run
    report = efficiency_report(run, trace)
    assert report.total_sent == 3
    assert report.opt_throughput == remark2_throughput(trace, run.config) == 3
    assert report.efficiency == 1.0
    assert report.per_node_x == [1.0, 1.0, None]
    assert report.jain == pytest.approx(1.0)


def test_efficiency_report_uses_oracle_when_asked(hand_run):
    run, trace = hand_run
    report = efficiency_report(run, trace, oracle_throughput=4, use_oracle_norm=True)
    assert report.opt_throughput == 4
    assert report.efficiency == pytest.approx(0.75)
    assert report.remark2_throughput == 3


def test_efficiency_report_rejects_normalizer_below_sent(hand_run):
    run, trace = hand_run
    with pytest.raises(InvariantError) as info:
        efficiency_report(run, trace, oracle_throughput=2, use_oracle_norm=True)
    assert info.value.details["slot"] == 7


def test_efficiency_curve(hand_run):
    run, trace = hand_run
    points = efficiency_curve(run, trace, [1, 3, 7])
    assert [p.horizon for p in points] == [1, 3, 7]
    assert points[1].efficiency == pytest.approx(2 / 3)
    assert points[2].efficiency == 1.0
    with pytest.raises(ParameterError):
        efficiency_curve(run, trace, [8])


def test_jain_values():
    assert jain_fairness([0.4] * 7) == pytest.approx(1.0)
    assert jain_fairness([1 / 3] * 25 + [1.0] * 75) == pytest.approx(0.893, abs=0.001)
    assert jain_fairness([1.0] + [0.0] * 99) == pytest.approx(0.01)
    with pytest.raises(DomainError):
        jain_fairness([0.0, 0.0])


@settings(max_examples=50)
@given(
    st.lists(st.floats(min_value=0.0, max_value=10.0), min_size=1, max_size=20).filter(lambda v: sum(v) > 1e-3),
    st.floats(min_value=0.1, max_value=100.0),
)
def test_jain_is_scale_invariant(values, c):
    assert jain_fairness([c * v for v in values]) == pytest.approx(jain_fairness(values), rel=1e-9)


def test_efficiency_curve_rejects_sends_beyond_harvested_energy(hand_run):
    run, _ = hand_run
    # Same run checked against a trace holding only one packet in total.
    starved = HarvestTrace.from_rows(np.zeros((3, 7)), [1, 0, 0])
    with pytest.raises(InvariantError):
        efficiency_curve(run, starved, [7])
    assert efficiency_curve(run, starved, [1])[0].efficiency == 1.0
