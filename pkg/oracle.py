"""Offline optimum via max-flow on a time-expanded graph, plus exhaustive verifiers.

Graph layout (vertex ids):
    0                      source
    1                      sink
    2 .. N+1               slot t (vertex 1 + t)
    N+2 + i*N + (t-1)      node i at slot t

Arcs: source -> (i,t) with the new whole packets of energy c_i(t) - c_i(t-1);
(i,t) -> (i,t+1) carrying stored energy (floor of the battery cap when
finite); (i,t) -> slot t with capacity 1; slot t -> sink with capacity k.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Tuple

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_flow

from core import HarvestTrace, NetworkState, ScheduleDecision, advance_slot, run_simulation
from exceptions import ConfigurationError, SizeError
from metrics import energy_floors
from policies import RoundRobinPolicy
from schemas import NetworkConfig

logger = logging.getLogger(__name__)

SOURCE = 0
SINK = 1

BRUTE_FORCE_LIMITS = {"m": 4, "N": 8, "k": 2}
RR_ENUMERATION_LIMITS = {"m": 6}


@dataclass(frozen=True)
class FlowInstance:
    graph: csr_matrix
    m: int
    horizon_n: int
    k: int

    @property
    def n_vertices(self) -> int:
        return self.graph.shape[0]

    def node_vertex(self, node: int, t: int) -> int:
        return self.horizon_n + 2 + node * self.horizon_n + (t - 1)


def build_flow_instance(trace: HarvestTrace, config: NetworkConfig) -> FlowInstance:
    trace.check_against(config)
    m, n, k = trace.m, trace.horizon_n, config.k
    floors = energy_floors(trace, config.harvest_before_transmit)
    increments = np.diff(np.hstack([np.zeros((m, 1), dtype=np.int64), floors]), axis=1)

    n_vertices = 2 + n + m * n
    node_base = n + 2
    node_ids = node_base + np.arange(m * n).reshape(m, n)
    slot_ids = 2 + np.arange(n)
    carry = (k * n + 1) if config.unbounded else int(np.floor(config.cap_value))

    has_energy = increments > 0
    rows = [np.full(int(has_energy.sum()), SOURCE), node_ids[:, :-1].ravel(), node_ids.ravel(), slot_ids]
    cols = [node_ids[has_energy], node_ids[:, 1:].ravel(), np.tile(slot_ids, m), np.full(n, SINK)]
    caps = [
        increments[has_energy],
        np.full(m * (n - 1), carry),
        np.ones(m * n, dtype=np.int64),
        np.full(n, k),
    ]
    graph = csr_matrix(
        (np.concatenate(caps).astype(np.int32), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_vertices, n_vertices),
    )
    return FlowInstance(graph=graph, m=m, horizon_n=n, k=k)


def offline_optimum(trace: HarvestTrace, config: NetworkConfig) -> int:
    """Maximum packets any omniscient offline schedule can deliver on ``trace``."""
    instance = build_flow_instance(trace, config)
    result = maximum_flow(instance.graph, SOURCE, SINK, method="dinic")
    value = int(result.flow_value)
    logger.debug(f"offline optimum m={instance.m} k={instance.k} N={instance.horizon_n}: {value}")
    return value


def brute_force_optimum(trace: HarvestTrace, config: NetworkConfig) -> int:
    """Exact optimum by exhaustive search over every per-slot choice of k nodes.

    Memoized on (slot, battery vector); uses the simulator's own slot dynamics.
    """
    trace.check_against(config)
    m, n, k = trace.m, trace.horizon_n, config.k
    if m > BRUTE_FORCE_LIMITS["m"] or n > BRUTE_FORCE_LIMITS["N"] or k > BRUTE_FORCE_LIMITS["k"]:
        raise SizeError(f"brute force limited to m<=4, N<=8, k<=2 (got m={m}, N={n}, k={k})",
                        BRUTE_FORCE_LIMITS)
    combos = [tuple(c) for c in itertools.combinations(range(m), k)]
    cap = config.cap_value

    @lru_cache(maxsize=None)
    def best(t: int, batteries: Tuple[float, ...]) -> int:
        if t > n:
            return 0
        column = trace.grid[:, t - 1]
        result = 0
        for combo in combos:
            state = NetworkState.initial(np.asarray(batteries))
            state, feedback = advance_slot(
                state, ScheduleDecision.from_channels(combo), column, cap,
                channels=k, harvest_before_transmit=config.harvest_before_transmit,
            )
            sent = int(state.packets_sent.sum())
            key = tuple(round(float(b), 9) for b in state.battery)
            result = max(result, sent + best(t + 1, key))
        return result

    return best(1, tuple(float(b) for b in trace.initial_battery))


@dataclass(frozen=True)
class RROrderingRange:
    min_throughput: int
    max_throughput: int
    orderings: int

    @property
    def spread(self) -> int:
        return self.max_throughput - self.min_throughput


def enumerate_rr_orderings(trace: HarvestTrace, config: NetworkConfig) -> RROrderingRange:
    """Throughput extremes of RR (quantum 1) over every node ordering.

    Orderings that yield the same sequence of channel groups are simulated once.
    """
    m, k = config.m, config.k
    if m > RR_ENUMERATION_LIMITS["m"]:
        raise SizeError(f"RR ordering enumeration limited to m<=6 (got m={m})", RR_ENUMERATION_LIMITS)
    if m % k != 0:
        raise ConfigurationError(f"m={m} must be a multiple of k={k}", "k")
    seen = set()
    throughputs = []
    for order in itertools.permutations(range(m)):
        groups = tuple(frozenset(order[j:j + k]) for j in range(0, m, k))
        if groups in seen:
            continue
        seen.add(groups)
        run = run_simulation(config, trace, RoundRobinPolicy(m, k, order=order))
        throughputs.append(run.total_sent)
    logger.info(f"RR orderings m={m} k={k}: {len(throughputs)} distinct, "
                f"throughput {min(throughputs)}..{max(throughputs)}")
    return RROrderingRange(min(throughputs), max(throughputs), len(throughputs))
