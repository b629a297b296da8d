import numpy as np
import pytest

from core import (
    HarvestTrace,
    NetworkState,
    Outcome,
    ScheduleDecision,
    advance_slot,
    idle_lemma_holds,
    run_simulation,
)
from exceptions import ConfigurationError, InvalidDecisionError
from policies import UropPolicy
from schemas import NetworkConfig


@pytest.fixture
def three_node_trace() -> HarvestTrace:
    """m=3, N=7, no harvest, initial batteries (2, 1, 0)."""
    return HarvestTrace.from_rows(np.zeros((3, 7)), [2, 1, 0])


class DuplicatePolicy:
    name = "dup"
    omniscient = False
    idle_check_applies = False
    checks = 0

    def __init__(self, m, k):
        self.m, self.k = m, k

    def reset(self):
        pass

    def decide(self, feedback, batteries=None):
        return ScheduleDecision(((0, 0), (1, 0)))


# ------------------------ Slot dynamics ------------------------
def test_advance_slot_harvests_then_transmits():
    states = NetworkState.initial(np.array([0.5, 0.0]))
    states, feedback = advance_slot(
        states, ScheduleDecision.from_channels([0, 1]), [0.5, 0.4], channels=2
    )
    assert [o.outcome for o in feedback.outcomes] == [Outcome.TRANSMITTED, Outcome.IDLE]
    assert states.packets_sent.tolist() == [1, 0]
    assert states.battery == pytest.approx([0.0, 0.4])


def test_transmit_first_uses_previous_battery():
    states = NetworkState.initial(np.array([0.0]))
    states, feedback = advance_slot(
        states, ScheduleDecision.from_channels([0]), [1.0], channels=1, harvest_before_transmit=False
    )
    assert feedback.outcomes[0].outcome is Outcome.IDLE
    assert states.battery[0] == pytest.approx(1.0)


def test_unassigned_channels_reported():
    states = NetworkState.initial(np.zeros(3))
    _, feedback = advance_slot(states, ScheduleDecision.from_channels([None, 2]), np.zeros(3), channels=2)
    assert feedback.unassigned == 1
    assert feedback.outcomes[0].outcome is Outcome.UNASSIGNED
    assert feedback.outcomes[0].node is None


def test_battery_cap_clamps_and_records_overflow():
    states = NetworkState.initial(np.array([4.0]))
    states, _ = advance_slot(states, ScheduleDecision(), [3.0], cap=5.0, channels=1)
    assert states.battery[0] == pytest.approx(5.0)
    assert states.overflow_lost[0] == pytest.approx(2.0)
    assert states.conservation_error() == pytest.approx(0.0)


def test_fractional_harvest_accumulates_to_a_packet():
    states = NetworkState.initial(np.zeros(1))
    decision = ScheduleDecision.from_channels([0])
    for _ in range(10):
        states, feedback = advance_slot(states, decision, [0.1], channels=1)
    assert feedback.outcomes[0].outcome is Outcome.TRANSMITTED
    assert states.packets_sent[0] == 1


# ------------------------ Decision validation ------------------------
def test_decision_rejects_duplicate_node():
    with pytest.raises(InvalidDecisionError) as info:
        ScheduleDecision(((0, 1), (1, 1))).validate(m=3, k=2, slot=4)
    assert info.value.details["slot"] == 4


def test_decision_rejects_too_many_assignments():
    with pytest.raises(InvalidDecisionError):
        ScheduleDecision(((0, 0), (1, 1), (2, 2))).validate(m=3, k=2)


def test_decision_rejects_bad_channel():
    with pytest.raises(InvalidDecisionError):
        ScheduleDecision(((2, 0),)).validate(m=3, k=2)


def test_run_rejects_invalid_policy_output(three_node_trace):
    config = NetworkConfig(m=3, k=2, horizon_n=7)
    with pytest.raises(InvalidDecisionError) as info:
        run_simulation(config, three_node_trace, DuplicatePolicy(3, 2))
    assert info.value.details["slot"] == 1


# ------------------------ Traces ------------------------
def test_trace_dimension_mismatch():
    with pytest.raises(ConfigurationError):
        HarvestTrace.from_rows([[0.0, 1.0]], [0.0, 0.0])
    trace = HarvestTrace.from_rows(np.zeros((2, 3)))
    with pytest.raises(ConfigurationError):
        trace.check_against(NetworkConfig(m=3, k=1, horizon_n=3))


def test_trace_rejects_negative_energy():
    with pytest.raises(ConfigurationError):
        HarvestTrace.from_rows([[0.0, -1.0]])


def test_trace_csv_with_and_without_b0(tmp_path):
    trace = HarvestTrace.from_rows([[0.25, 1.0, 0.0], [2.0, 0.0, 0.5]], [1.5, 0.0])
    path = trace.to_csv(tmp_path / "trace.csv")
    loaded = HarvestTrace.from_csv(path)
    assert np.array_equal(loaded.grid, trace.grid)
    assert np.array_equal(loaded.initial_battery, trace.initial_battery)

    bare = tmp_path / "bare.csv"
    bare.write_text("node_id,1,2\n1,0,3\n0,1,2\n", encoding="utf-8")
    loaded = HarvestTrace.from_csv(bare)
    assert loaded.grid.tolist() == [[1.0, 2.0], [0.0, 3.0]]
    assert loaded.initial_battery.tolist() == [0.0, 0.0]


def test_trace_csv_omits_b0_when_batteries_start_empty(tmp_path):
    trace = HarvestTrace.from_rows([[0.5, 1.0, 0.0], [2.0, 0.0, 0.5]])
    lines = trace.to_csv(tmp_path / "trace.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "node_id,1,2,3"
    assert lines[1] == "0,0.5,1.0,0.0"
    loaded = HarvestTrace.from_csv(tmp_path / "trace.csv")
    assert np.array_equal(loaded.grid, trace.grid)
    assert not loaded.initial_battery.any()


def test_trace_csv_requires_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("0,1,2\n", encoding="utf-8")
    with pytest.raises(ConfigurationError):
        HarvestTrace.from_csv(path)


@pytest.mark.parametrize("first_column", ["a", "1.5", ""])
def test_trace_csv_rejects_non_integer_node_id(tmp_path, first_column):
    path = tmp_path / "bad.csv"
    path.write_text(f"node_id,1,2\n0,1,2\n{first_column},0,3\n", encoding="utf-8")
    with pytest.raises(ConfigurationError) as info:
        HarvestTrace.from_csv(path)
    assert info.value.details["field"] == "node_id"


# ------------------------ Runs ------------------------
def test_run_record_tallies(three_node_trace):
    config = NetworkConfig(m=3, k=1, horizon_n=7)
    run = run_simulation(config, three_node_trace, UropPolicy(3, 1, order=[0, 1, 2]), seed=0)
    assert run.total_sent == 3
    assert run.cumulative_sent.tolist() == [1, 2, 2, 3, 3, 3, 3]
    assert run.idle_channel_slots() == 4
    assert run.final_state.conservation_error() == pytest.approx(0.0)
    assert run.tallies()["packets_sent"] == [2, 1, 0]


def test_slot_log_lists_every_channel_slot(three_node_trace, tmp_path):
    config = NetworkConfig(m=3, k=1, horizon_n=7)
    run = run_simulation(config, three_node_trace, UropPolicy(3, 1, order=[0, 1, 2]))
    lines = run.write_slot_log(tmp_path / "slots.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "slot,channel,node_id,outcome"
    assert lines[1] == "1,0,0,transmitted"
    assert lines[3] == "3,0,0,idle"
    assert len(lines) == 8


def test_policy_sized_for_other_network_is_rejected(three_node_trace):
    config = NetworkConfig(m=3, k=1, horizon_n=7)
    with pytest.raises(ConfigurationError):
        run_simulation(config, three_node_trace, UropPolicy(3, 2))


def test_idle_lemma_detects_unsent_energy():
    states = NetworkState.initial(np.array([3.0]))
    assert not idle_lemma_holds(states, 0, np.zeros(1))
    states.battery[0] = 0.4
    states.packets_sent[0] = 3
    states.initial_battery[0] = 3.4
    assert idle_lemma_holds(states, 0, np.zeros(1))
