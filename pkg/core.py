"""Domain types and single-slot dynamics shared by every policy and the oracle.

A slot proceeds as: harvest, clamp to battery capacity, transmit (one unit of
energy per packet). With ``harvest_before_transmit=False`` the transmission
attempt uses the battery left at the end of the previous slot and the slot's
harvest is stored afterwards.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Protocol, Sequence, Tuple

import numpy as np

from exceptions import ConfigurationError, InvalidDecisionError, InvariantError
from schemas import NetworkConfig

logger = logging.getLogger(__name__)

CONSERVATION_TOLERANCE = 1e-9
# Slack for flooring cumulative energy and for the one-packet battery test.
FLOOR_TOLERANCE = 1e-9
PACKET_ENERGY = 1.0


class Outcome(str, Enum):
    TRANSMITTED = "transmitted"
    IDLE = "idle"
    UNASSIGNED = "unassigned"


@dataclass(frozen=True)
class ChannelOutcome:
    channel: int
    outcome: Outcome
    node: Optional[int] = None


@dataclass(frozen=True)
class SlotFeedback:
    """Per-channel outcome of one slot, the only thing a non-omniscient policy observes."""
    outcomes: Tuple[ChannelOutcome, ...]

    def by_node(self) -> Dict[int, Outcome]:
        return {o.node: o.outcome for o in self.outcomes if o.node is not None}

    def nodes_with(self, outcome: Outcome) -> List[int]:
        return [o.node for o in self.outcomes if o.outcome is outcome and o.node is not None]

    @property
    def unassigned(self) -> int:
        return sum(1 for o in self.outcomes if o.outcome is Outcome.UNASSIGNED)


@dataclass(frozen=True)
class ScheduleDecision:
    """The set S(t): up to k (channel, node) pairs."""
    assignments: Tuple[Tuple[int, int], ...] = ()

    @classmethod
    def from_channels(cls, channel_nodes: Sequence[Optional[int]]) -> "ScheduleDecision":
        """Build from a channel-indexed list where None leaves the channel unassigned."""
        return cls(tuple((ch, node) for ch, node in enumerate(channel_nodes) if node is not None))

    @property
    def nodes(self) -> List[int]:
        return [node for _, node in self.assignments]

    def validate(self, m: int, k: int, slot: Optional[int] = None) -> None:
        if len(self.assignments) > k:
            raise InvalidDecisionError(f"{len(self.assignments)} assignments exceed k={k} channels", slot)
        seen_channels: set[int] = set()
        seen_nodes: set[int] = set()
        for channel, node in self.assignments:
            if not 0 <= channel < k:
                raise InvalidDecisionError(f"channel {channel} outside [0, {k})", slot, node)
            if not 0 <= node < m:
                raise InvalidDecisionError(f"node {node} outside [0, {m})", slot, node)
            if channel in seen_channels:
                raise InvalidDecisionError(f"channel {channel} assigned twice", slot, node)
            if node in seen_nodes:
                raise InvalidDecisionError(f"node {node} scheduled on two channels", slot, node)
            seen_channels.add(channel)
            seen_nodes.add(node)


@dataclass(frozen=True)
class HarvestTrace:
    """Per-node, per-slot harvested energy E_i^h(t) plus initial batteries B_i(0)."""
    grid: np.ndarray
    initial_battery: np.ndarray

    def __post_init__(self) -> None:
        grid = np.asarray(self.grid, dtype=float)
        if grid.ndim != 2:
            raise ConfigurationError(f"harvest grid must be 2-D (m x N), got {grid.ndim}-D", "grid")
        initial = np.zeros(grid.shape[0]) if self.initial_battery is None else np.asarray(
            self.initial_battery, dtype=float
        )
        if initial.shape != (grid.shape[0],):
            raise ConfigurationError(
                f"initial_battery has shape {initial.shape}, expected ({grid.shape[0]},)", "initial_battery"
            )
        if not np.isfinite(grid).all() or (grid < 0).any():
            raise ConfigurationError("harvest entries must be finite and nonnegative", "grid")
        if not np.isfinite(initial).all() or (initial < 0).any():
            raise ConfigurationError("initial batteries must be finite and nonnegative", "initial_battery")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "initial_battery", initial)

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[float]], initial_battery: Optional[Sequence[float]] = None):
        try:
            grid = np.asarray(rows, dtype=float)
        except ValueError as exc:
            raise ConfigurationError(f"harvest rows must all have length N: {exc}", "grid") from exc
        initial = None if initial_battery is None else np.asarray(initial_battery, dtype=float)
        return cls(grid, initial)

    @property
    def m(self) -> int:
        return self.grid.shape[0]

    @property
    def horizon_n(self) -> int:
        return self.grid.shape[1]

    def cumulative(self) -> np.ndarray:
        """E_i^tot(t) for t = 1..N (m x N)."""
        return np.cumsum(self.grid, axis=1)

    def energy_received(self) -> np.ndarray:
        """B_i(0) + E_i^tot(N)."""
        return self.initial_battery + self.grid.sum(axis=1)

    def truncated(self, horizon_n: int) -> "HarvestTrace":
        return HarvestTrace(self.grid[:, :horizon_n], self.initial_battery)

    def check_against(self, config: NetworkConfig) -> None:
        if self.m != config.m or self.horizon_n != config.horizon_n:
            raise ConfigurationError(
                f"trace is {self.m}x{self.horizon_n} but config is m={config.m}, N={config.horizon_n}", "trace"
            )
        if config.battery_cap is not None and (self.initial_battery > config.battery_cap).any():
            raise ConfigurationError("initial battery exceeds battery_cap", "initial_battery")

    def to_csv(self, path: str | Path) -> Path:
        """Write `node_id,[b0,]1..N` rows; the b0 column appears only when some B_i(0) is nonzero."""
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        with target.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            with_b0 = bool(np.any(self.initial_battery))
            writer.writerow(["node_id", *(["b0"] if with_b0 else []), *range(1, self.horizon_n + 1)])
            for node in range(self.m):
                head = [repr(float(self.initial_battery[node]))] if with_b0 else []
                writer.writerow([node, *head, *(repr(float(x)) for x in self.grid[node])])
        return target

    @classmethod
    def from_csv(cls, path: str | Path) -> "HarvestTrace":
        """Read a trace CSV; the `b0` column is optional (defaults to zeros)."""
        with Path(path).open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        if not rows or not rows[0] or rows[0][0] != "node_id":
            raise ConfigurationError("trace CSV must start with a node_id header", "trace")
        header, body = rows[0], [r for r in rows[1:] if r]
        has_b0 = len(header) > 1 and header[1] == "b0"
        first_slot = 2 if has_b0 else 1
        try:
            ids = [int(r[0]) for r in body]
        except ValueError as exc:
            raise ConfigurationError(f"non-integer node id: {exc}", "node_id") from exc
        body = [r for _, r in sorted(zip(ids, body), key=lambda pair: pair[0])]
        if sorted(ids) != list(range(len(body))):
            raise ConfigurationError("trace CSV node ids must be 0..m-1", "node_id")
        try:
            grid = [[float(x) for x in r[first_slot:]] for r in body]
            initial = [float(r[1]) for r in body] if has_b0 else None
        except ValueError as exc:
            raise ConfigurationError(f"non-numeric trace entry: {exc}", "trace") from exc
        if len({len(r) for r in grid}) != 1:
            raise ConfigurationError("trace CSV rows have different lengths", "trace")
        return cls.from_rows(grid, initial)


@dataclass(frozen=True)
class NodeState:
    """Per-node view: B_i(t), E_i^tot(t), V_i(t) and energy discarded at capacity."""
    battery: float
    total_harvested: float
    packets_sent: int
    overflow_lost: float


@dataclass
class NetworkState:
    """Node states of the whole network, stored column-wise."""
    battery: np.ndarray
    total_harvested: np.ndarray
    packets_sent: np.ndarray
    overflow_lost: np.ndarray
    initial_battery: np.ndarray
    slot_overflow: np.ndarray

    @classmethod
    def initial(cls, initial_battery: np.ndarray) -> "NetworkState":
        b0 = np.asarray(initial_battery, dtype=float)
        m = b0.shape[0]
        return cls(
            battery=b0.copy(),
            total_harvested=np.zeros(m),
            packets_sent=np.zeros(m, dtype=np.int64),
            overflow_lost=np.zeros(m),
            initial_battery=b0.copy(),
            slot_overflow=np.zeros(m),
        )

    @property
    def m(self) -> int:
        return self.battery.shape[0]

    def node(self, i: int) -> NodeState:
        return NodeState(
            battery=float(self.battery[i]),
            total_harvested=float(self.total_harvested[i]),
            packets_sent=int(self.packets_sent[i]),
            overflow_lost=float(self.overflow_lost[i]),
        )

    def nodes(self) -> List[NodeState]:
        return [self.node(i) for i in range(self.m)]

    def copy(self) -> "NetworkState":
        return NetworkState(*(np.copy(a) for a in (
            self.battery, self.total_harvested, self.packets_sent,
            self.overflow_lost, self.initial_battery, self.slot_overflow,
        )))

    def conservation_error(self) -> float:
        """Max |B(0) + E_tot - battery - sent - overflow| over nodes."""
        residual = (self.initial_battery + self.total_harvested
                    - self.battery - self.packets_sent - self.overflow_lost)
        return float(np.max(np.abs(residual))) if self.m else 0.0

    def battery_at_attempt(self, harvest_column: np.ndarray, cap: float, harvest_before_transmit: bool = True) -> np.ndarray:
        """Battery vector a transmission attempt in the coming slot would see."""
        if not harvest_before_transmit:
            return self.battery.copy()
        return np.minimum(self.battery + harvest_column, cap)


def can_transmit(battery):
    """Battery holds a packet's worth of energy, up to floating-point residue."""
    return battery >= PACKET_ENERGY - FLOOR_TOLERANCE


def _store_harvest(states: NetworkState, harvest_column: np.ndarray, cap: float) -> None:
    raw = states.battery + harvest_column
    clamped = np.minimum(raw, cap)
    states.slot_overflow = raw - clamped
    states.battery = clamped
    states.total_harvested += harvest_column
    states.overflow_lost += states.slot_overflow


def advance_slot(
    states: NetworkState,
    decision: ScheduleDecision,
    harvest_column: Sequence[float],
    cap: float = float("inf"),
    *,
    channels: Optional[int] = None,
    harvest_before_transmit: bool = True,
) -> Tuple[NetworkState, SlotFeedback]:
    """Apply one slot of harvest and transmissions to ``states`` (in place).

    Returns the same state object together with the per-channel feedback.
    ``channels`` is the channel count k; when omitted the feedback covers
    only the assigned channels.
    """
    column = np.asarray(harvest_column, dtype=float)
    if column.shape != (states.m,):
        raise ConfigurationError(
            f"harvest column has shape {column.shape}, expected ({states.m},)", "harvest_column"
        )
    if (column < 0).any():
        raise ConfigurationError("harvest column entries must be nonnegative", "harvest_column")
    k = channels if channels is not None else (max((c for c, _ in decision.assignments), default=-1) + 1)
    decision.validate(states.m, k)

    if harvest_before_transmit:
        _store_harvest(states, column, cap)

    outcomes: List[Optional[ChannelOutcome]] = [None] * k
    for channel, node in decision.assignments:
        if can_transmit(states.battery[node]):
            states.battery[node] -= PACKET_ENERGY
            states.packets_sent[node] += 1
            outcomes[channel] = ChannelOutcome(channel, Outcome.TRANSMITTED, node)
        else:
            outcomes[channel] = ChannelOutcome(channel, Outcome.IDLE, node)

    if not harvest_before_transmit:
        _store_harvest(states, column, cap)

    feedback = SlotFeedback(tuple(
        o if o is not None else ChannelOutcome(ch, Outcome.UNASSIGNED) for ch, o in enumerate(outcomes)
    ))
    return states, feedback


def idle_lemma_holds(
    states: NetworkState,
    node: int,
    harvest_column: np.ndarray,
    harvest_before_transmit: bool = True,
) -> bool:
    """An idle node has sent every whole packet of the energy it has received so far.

    Checked right after the slot in which the node was idle; energy lost to
    a full battery does not count as received.
    """
    received = states.initial_battery[node] + states.total_harvested[node] - states.overflow_lost[node]
    if not harvest_before_transmit:
        received -= harvest_column[node] - states.slot_overflow[node]
    sent = states.packets_sent[node]
    return received - PACKET_ENERGY - CONSERVATION_TOLERANCE < sent <= received + CONSERVATION_TOLERANCE


class PolicyContract(Protocol):
    """What the simulator needs from a policy."""
    name: str
    m: int
    k: int
    omniscient: bool
    idle_check_applies: bool
    checks: int

    def reset(self) -> None: ...

    def decide(self, feedback: Optional[SlotFeedback], batteries: Optional[np.ndarray] = None) -> ScheduleDecision: ...


@dataclass
class RunRecord:
    """Full output of one simulation run."""
    config: NetworkConfig
    policy: str
    seed: Optional[int]
    decisions: List[ScheduleDecision]
    feedback: List[SlotFeedback]
    final_state: NetworkState
    cumulative_sent: np.ndarray
    decision_checks: int = 0
    elephant_skips: int = 0
    idle_checks: int = 0
    process: str = ""
    extras: Dict[str, object] = field(default_factory=dict)

    @property
    def packets_sent(self) -> np.ndarray:
        return self.final_state.packets_sent

    @property
    def total_sent(self) -> int:
        return int(self.final_state.packets_sent.sum())

    def events(self, outcome: Outcome) -> Iterable[Tuple[int, int]]:
        """(slot, node) pairs with the given outcome; slots are 1-based."""
        for slot, fb in enumerate(self.feedback, start=1):
            for node in fb.nodes_with(outcome):
                yield slot, node

    def idle_channel_slots(self) -> int:
        """Channel-slots that carried no packet (idle or unassigned)."""
        return sum(
            1 for fb in self.feedback for o in fb.outcomes if o.outcome is not Outcome.TRANSMITTED
        )

    def tallies(self) -> Dict[str, object]:
        state = self.final_state
        return {
            "policy": self.policy,
            "seed": self.seed,
            "config": self.config.model_dump(),
            "packets_sent": [int(v) for v in state.packets_sent],
            "battery": [float(v) for v in state.battery],
            "total_harvested": [float(v) for v in state.total_harvested],
            "overflow_lost": [float(v) for v in state.overflow_lost],
            "total_sent": self.total_sent,
            "decision_checks": self.decision_checks,
            "elephant_skips": self.elephant_skips,
        }

    def write_slot_log(self, path: str | Path) -> Path:
        """CSV with columns slot, channel, node_id, outcome (node_id empty when unassigned)."""
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        with target.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["slot", "channel", "node_id", "outcome"])
            for slot, fb in enumerate(self.feedback, start=1):
                for o in fb.outcomes:
                    writer.writerow([slot, o.channel, "" if o.node is None else o.node, o.outcome.value])
        return target


def run_simulation(
    config: NetworkConfig,
    trace: HarvestTrace,
    policy: PolicyContract,
    seed: Optional[int] = None,
    *,
    check_idle_lemma: Optional[bool] = None,
    process: str = "",
) -> RunRecord:
    """Run ``policy`` over ``trace`` for N slots.

    Non-omniscient policies see only the previous slot's feedback; omniscient
    ones additionally receive the battery vector their attempt will face.
    The idle lemma is asserted for policies that declare it unless
    ``check_idle_lemma`` is False.
    """
    trace.check_against(config)
    if policy.m != config.m or policy.k != config.k:
        raise ConfigurationError(
            f"policy built for m={policy.m}, k={policy.k} but config has m={config.m}, k={config.k}", "policy"
        )
    policy.reset()
    cap = config.cap_value
    harvest_first = config.harvest_before_transmit
    check_lemma = policy.idle_check_applies if check_idle_lemma is None else check_idle_lemma

    states = NetworkState.initial(trace.initial_battery)
    decisions: List[ScheduleDecision] = []
    log: List[SlotFeedback] = []
    cumulative = np.zeros(config.horizon_n, dtype=np.int64)
    lemma_checks = 0
    previous: Optional[SlotFeedback] = None
    sent_so_far = 0

    for slot in range(1, config.horizon_n + 1):
        column = trace.grid[:, slot - 1]
        if policy.omniscient:
            decision = policy.decide(previous, states.battery_at_attempt(column, cap, harvest_first))
        else:
            decision = policy.decide(previous)
        try:
            decision.validate(config.m, config.k, slot)
        except InvalidDecisionError:
            logger.error(f"{policy.name} returned an invalid decision at slot {slot}: {decision.assignments}")
            raise
        states, feedback = advance_slot(
            states, decision, column, cap, channels=config.k, harvest_before_transmit=harvest_first
        )
        if check_lemma:
            for node in feedback.nodes_with(Outcome.IDLE):
                lemma_checks += 1
                if not idle_lemma_holds(states, node, column, harvest_first):
                    logger.error(f"idle lemma violated by {policy.name}: node {node} at slot {slot}")
                    raise InvariantError(
                        f"node {node} idle at slot {slot} with unsent energy "
                        f"(sent {int(states.packets_sent[node])})", slot, node
                    )
        sent_so_far += sum(1 for o in feedback.outcomes if o.outcome is Outcome.TRANSMITTED)
        cumulative[slot - 1] = sent_so_far
        decisions.append(decision)
        log.append(feedback)
        previous = feedback

    scale = max(1.0, float(np.max(trace.energy_received(), initial=0.0)))
    error = states.conservation_error()
    if error > CONSERVATION_TOLERANCE * scale:
        logger.error(f"energy conservation broken by {error:.3e} in {policy.name} run")
        raise InvariantError(f"energy conservation residual {error:.3e}")

    record = RunRecord(
        config=config,
        policy=policy.name,
        seed=seed,
        decisions=decisions,
        feedback=log,
        final_state=states,
        cumulative_sent=cumulative,
        decision_checks=policy.checks,
        elephant_skips=len(getattr(policy, "elephant_events", ())),
        idle_checks=lemma_checks,
        process=process,
    )
    logger.info(
        f"run {policy.name} seed={seed} m={config.m} k={config.k} N={config.horizon_n}: "
        f"sent={record.total_sent} checks={record.decision_checks}"
    )
    return record
