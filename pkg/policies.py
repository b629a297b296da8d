"""Scheduling policies: UROP, Round-Robin with a quantum, and the omniscient UP.

Each policy keeps a fixed node order drawn from its seed. UROP and RR decide
from slot feedback alone; UP is handed the battery vector of the slot it is
scheduling.
"""

from __future__ import annotations

import copy
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from core import Outcome, ScheduleDecision, SlotFeedback, can_transmit
from exceptions import ConfigurationError
from schemas import PolicySpec

logger = logging.getLogger(__name__)


def random_order(m: int, seed: Optional[int]) -> Tuple[int, ...]:
    return tuple(int(i) for i in np.random.default_rng(seed).permutation(m))


def _checked_order(order: Sequence[int], m: int) -> Tuple[int, ...]:
    result = tuple(int(i) for i in order)
    if sorted(result) != list(range(m)):
        raise ConfigurationError(f"order must be a permutation of 0..{m - 1}", "order")
    return result


# UROP
@dataclass
class UropState:
    """Fixed random order, shared cursor, channel map and per-node streak flags."""
    order: Tuple[int, ...]
    k: int
    cursor: int = 0
    active: List[Optional[int]] = field(default_factory=list)
    continuous_since_selection: Dict[int, bool] = field(default_factory=dict)
    selected_at: Dict[int, int] = field(default_factory=dict)
    slot: int = 0
    checks: int = 0
    elephant_events: List[Tuple[int, int]] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.active:
            self.active = [None] * self.k

    @property
    def m(self) -> int:
        return len(self.order)

    def _next_candidate(self) -> Optional[int]:
        busy = {n for n in self.active if n is not None}
        for _ in range(self.m):
            node = self.order[self.cursor]
            self.cursor = (self.cursor + 1) % self.m
            self.checks += 1
            if node in busy:
                # Reached while still holding a channel: it has transmitted in
                # every slot since it was selected.
                if self.continuous_since_selection.get(node) and self.selected_at.get(node, self.slot) < self.slot:
                    self.elephant_events.append((self.slot, node))
                    self.selected_at[node] = self.slot
                continue
            self.continuous_since_selection[node] = True
            self.selected_at[node] = self.slot
            return node
        return None


def urop_decide(state: UropState, feedback: Optional[SlotFeedback]) -> ScheduleDecision:
    """Keep transmitters, drop idle nodes, refill vacant channels along the cyclic order."""
    state.slot += 1
    if feedback is not None:
        for o in feedback.outcomes:
            if o.node is None:
                continue
            state.checks += 1
            if o.outcome is Outcome.IDLE and state.active[o.channel] == o.node:
                state.active[o.channel] = None
                state.continuous_since_selection[o.node] = False
    for channel in range(state.k):
        if state.active[channel] is None:
            state.active[channel] = state._next_candidate()
    return ScheduleDecision.from_channels(state.active)


# Round-Robin
def rr_decide(order: Sequence[int], quantum: int, t: int, k: int) -> ScheduleDecision:
    """Open-loop RR: block b = (t-1)//quantum holds order[b*k .. b*k+k) cyclically."""
    if t < 1:
        raise ConfigurationError(f"slot index must be >= 1, got {t}", "t")
    m = len(order)
    start = (((t - 1) // quantum) * k) % m
    return ScheduleDecision.from_channels([order[(start + j) % m] for j in range(k)])


# Uniformizing Policy
@dataclass
class UpState:
    order: Tuple[int, ...]
    k: int
    cursor: int = 0
    active: List[Optional[int]] = field(default_factory=list)
    checks: int = 0

    def __post_init__(self) -> None:
        if not self.active:
            self.active = [None] * self.k

    def _next_ready(self, batteries: np.ndarray) -> Optional[int]:
        busy = {n for n in self.active if n is not None}
        m = len(self.order)
        for _ in range(m):
            node = self.order[self.cursor]
            self.cursor = (self.cursor + 1) % m
            if node in busy:
                continue
            self.checks += 1
            if can_transmit(batteries[node]):
                return node
        return None


def up_decide(state: UpState, batteries: np.ndarray) -> ScheduleDecision:
    """Keep scheduled nodes that can still send, replace the rest in order among ready nodes."""
    for channel, node in enumerate(state.active):
        if node is None:
            continue
        state.checks += 1
        if not can_transmit(batteries[node]):
            state.active[channel] = None
    for channel in range(state.k):
        if state.active[channel] is None:
            state.active[channel] = state._next_ready(batteries)
    return ScheduleDecision.from_channels(state.active)


# Policy objects used by the simulator
class Policy(ABC):
    name: str = "policy"
    omniscient: bool = False
    idle_check_applies: bool = False

    def __init__(self, m: int, k: int, seed: Optional[int] = None, order: Optional[Sequence[int]] = None):
        if m < 1 or k < 1 or k > m:
            raise ConfigurationError(f"invalid sizes m={m}, k={k}", "k")
        self.m = m
        self.k = k
        self.seed = seed
        self.order = _checked_order(order, m) if order is not None else random_order(m, seed)
        self.reset()

    @abstractmethod
    def reset(self) -> None: ...

    @abstractmethod
    def decide(self, feedback: Optional[SlotFeedback], batteries: Optional[np.ndarray] = None) -> ScheduleDecision: ...

    @property
    @abstractmethod
    def checks(self) -> int: ...

    def clone(self) -> "Policy":
        return copy.deepcopy(self)

    def __repr__(self) -> str:
        return f"{type(self).__name__}(m={self.m}, k={self.k}, seed={self.seed})"


class UropPolicy(Policy):
    name = "urop"
    idle_check_applies = True

    def reset(self) -> None:
        self.state = UropState(order=self.order, k=self.k)

    def decide(self, feedback: Optional[SlotFeedback], batteries: Optional[np.ndarray] = None) -> ScheduleDecision:
        return urop_decide(self.state, feedback)

    @property
    def checks(self) -> int:
        return self.state.checks

    @property
    def elephant_events(self) -> List[Tuple[int, int]]:
        return self.state.elephant_events


class RoundRobinPolicy(Policy):
    name = "rr"

    def __init__(self, m: int, k: int, quantum: int = 1, seed: Optional[int] = None,
                 order: Optional[Sequence[int]] = None):
        if quantum < 1:
            raise ConfigurationError(f"quantum must be >= 1, got {quantum}", "quantum")
        self.quantum = quantum
        super().__init__(m, k, seed, order)
        if quantum != 1:
            self.name = f"rr{quantum}"

    def reset(self) -> None:
        self._slot = 0
        self._checks = 0

    def decide(self, feedback: Optional[SlotFeedback], batteries: Optional[np.ndarray] = None) -> ScheduleDecision:
        self._slot += 1
        self._checks += self.k
        return rr_decide(self.order, self.quantum, self._slot, self.k)

    @property
    def checks(self) -> int:
        return self._checks


class UniformizingPolicy(Policy):
    name = "up"
    omniscient = True
    idle_check_applies = True

    def reset(self) -> None:
        self.state = UpState(order=self.order, k=self.k)

    def decide(self, feedback: Optional[SlotFeedback], batteries: Optional[np.ndarray] = None) -> ScheduleDecision:
        if batteries is None:
            raise ConfigurationError("UP needs the current battery vector", "batteries")
        return up_decide(self.state, np.asarray(batteries, dtype=float))

    @property
    def checks(self) -> int:
        return self.state.checks


def build_policy(spec: PolicySpec, m: int, k: int, run_seed: Optional[int] = None) -> Policy:
    """Instantiate a policy from its spec; the ordering seed falls back to the run seed."""
    seed = spec.seed if spec.seed is not None else run_seed
    if spec.name == "urop":
        return UropPolicy(m, k, seed=seed, order=spec.order)
    if spec.name == "rr":
        return RoundRobinPolicy(m, k, quantum=spec.quantum, seed=seed, order=spec.order)
    if spec.name == "up":
        return UniformizingPolicy(m, k, seed=seed, order=spec.order)
    raise ConfigurationError(f"unknown policy {spec.name!r}", "name")
