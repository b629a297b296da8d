"""Efficiency, density and fairness metrics plus the closed-form analytic bounds."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence

import numpy as np

from core import FLOOR_TOLERANCE, HarvestTrace, Outcome, RunRecord
from exceptions import DomainError, InvariantError, ParameterError
from schemas import CheckpointPoint, EfficiencyReport, NetworkConfig

logger = logging.getLogger(__name__)

INTEGER_TOLERANCE = 1e-9


def energy_floors(trace: HarvestTrace, harvest_before_transmit: bool = True) -> np.ndarray:
    """c_i(t) = floor(B_i(0) + E_i^tot(t)) for t = 1..N (m x N, int).

    With transmit-first slots the energy usable in slot t is the cumulative
    harvest up to t-1.
    """
    cumulative = trace.cumulative()
    if not harvest_before_transmit:
        cumulative = np.hstack([np.zeros((trace.m, 1)), cumulative[:, :-1]])
    usable = trace.initial_battery[:, None] + cumulative
    return np.floor(usable + FLOOR_TOLERANCE).astype(np.int64)


def opt_volumes(trace: HarvestTrace) -> np.ndarray:
    """V_i^opt(N): whole packets node i could send over the horizon."""
    return np.floor(trace.energy_received() + FLOOR_TOLERANCE).astype(np.int64)


def density(trace: HarvestTrace, config: NetworkConfig) -> float:
    return float(opt_volumes(trace).sum()) / (config.k * trace.horizon_n)


def _check_split(trace: HarvestTrace, T: int) -> None:
    if not 0 <= T < trace.horizon_n:
        raise ParameterError(f"T must satisfy 0 <= T < N={trace.horizon_n}", "T", T)


def partial_volumes(trace: HarvestTrace, T: int) -> np.ndarray:
    """V_i^(T): packets still sendable in (T, N] after a fully efficient run up to T."""
    _check_split(trace, T)
    total = opt_volumes(trace)
    if T == 0:
        return total
    return total - energy_floors(trace)[:, T - 1]


def partial_density(trace: HarvestTrace, config: NetworkConfig, T: int) -> float:
    return float(partial_volumes(trace, T).sum()) / (config.k * (trace.horizon_n - T))


@dataclass(frozen=True)
class CapacityResult:
    admissible: bool
    max_efficiency: float
    total_volume: float
    capacity: int

    @property
    def status(self) -> str:
        return "admissible" if self.admissible else "saturated"


def capacity_check(trace: HarvestTrace, config: NetworkConfig, T: int = 0) -> CapacityResult:
    """Admissible when V_tot^(T) fits in k(N-T) channel-slots; else the efficiency ceiling."""
    return capacity_from_volume(int(partial_volumes(trace, T).sum()), config.k * (trace.horizon_n - T))


def capacity_from_volume(volume: float, capacity: int) -> CapacityResult:
    if volume <= capacity:
        return CapacityResult(True, 1.0, volume, capacity)
    return CapacityResult(False, capacity / volume, volume, capacity)


def _is_integer(value: float) -> bool:
    return abs(value - round(value)) < INTEGER_TOLERANCE


def rr_prediction_from_densities(densities: Sequence[float], sigma: float) -> float:
    """Round-Robin efficiency predicted from per-node densities.

    sigma is the number of slots RR grants each node. Nodes with density
    above 1 lose (D_i - 1) * sigma packets, less the fractional extra slot
    when sigma is not an integer.
    """
    d = np.asarray(densities, dtype=float)
    total = float(d.sum())
    if total <= 0:
        return 1.0
    heavy = d[d > 1.0]
    if _is_integer(sigma):
        return 1.0 - float((heavy - 1.0).sum()) / total
    frac = sigma - math.floor(sigma)
    lost = np.clip((heavy - 1.0) * sigma - (1.0 - frac), 0.0, None)
    return 1.0 - float(lost.sum()) / (total * sigma)


def rr_efficiency_prediction(trace: HarvestTrace, config: NetworkConfig, T: int = 0) -> float:
    volumes = partial_volumes(trace, T)
    slots = config.k * (trace.horizon_n - T)
    sigma = slots / config.m
    return rr_prediction_from_densities(volumes * config.m / slots, sigma)


def urop_lower_bound(config: NetworkConfig, D: float) -> float:
    """max(0, 1 - 2m / ((1-D) D N k)), valid for 0 < D < 1."""
    if not 0.0 < D < 1.0:
        raise DomainError(f"network density must lie in (0, 1), got {D}", "D", D)
    return max(0.0, 1.0 - 2.0 * config.m / ((1.0 - D) * D * config.horizon_n * config.k))


def extract_t0(run: RunRecord) -> int:
    """Earliest among the nodes' last idle slots; 0 when no node was ever idle."""
    last_idle: dict[int, int] = {}
    for slot, node in run.events(Outcome.IDLE):
        last_idle[node] = slot
    return min(last_idle.values()) if last_idle else 0


def theorem4_lower_bound(run: RunRecord, trace: HarvestTrace, T0: Optional[int] = None) -> float:
    """1 - k(N - T0) / sum_i V_i^opt(N), clamped to [0, 1]."""
    t0 = extract_t0(run) if T0 is None else T0
    total = int(opt_volumes(trace).sum())
    if total == 0:
        return 1.0
    bound = 1.0 - run.config.k * (trace.horizon_n - t0) / total
    return min(1.0, max(0.0, bound))


def jain_fairness(x: Iterable[float]) -> float:
    values = np.asarray(list(x), dtype=float)
    if values.size == 0 or not values.any():
        raise DomainError("Jain index is undefined for an all-zero vector", "x")
    if (values < 0).any():
        raise DomainError("Jain index needs nonnegative entries", "x")
    return float(values.sum() ** 2 / (values.size * (values ** 2).sum()))


def remark2_throughput(trace: HarvestTrace, config: NetworkConfig) -> int:
    """min(kN, sum_i floor(B_i(0) + E_i^tot(N)))."""
    return int(min(config.k * trace.horizon_n, opt_volumes(trace).sum()))


def _efficiency(sent: int, opt: int, horizon: int) -> float:
    if sent > opt:
        raise InvariantError(f"{sent} packets sent by slot {horizon} but the normalizer is {opt}", slot=horizon)
    return sent / opt if opt > 0 else 1.0


def efficiency_report(
    run: RunRecord,
    trace: HarvestTrace,
    oracle_throughput: Optional[int] = None,
    use_oracle_norm: bool = False,
) -> EfficiencyReport:
    """Efficiency of a finished run and the P-fair Jain index of its nodes.

    The normalizer is the whole-packet volume bound unless ``use_oracle_norm`` is set
    and an oracle value is supplied. Nodes with V_i^opt = 0 get ``None`` in
    ``per_node_x`` and are left out of the index.
    """
    remark2 = remark2_throughput(trace, run.config)
    opt = oracle_throughput if (use_oracle_norm and oracle_throughput is not None) else remark2
    sent = run.total_sent
    efficiency = _efficiency(sent, opt, run.config.horizon_n)

    volumes = opt_volumes(trace)
    per_node: List[Optional[float]] = [
        None if v == 0 else float(s) / float(v) for s, v in zip(run.packets_sent, volumes)
    ]
    included = [x for x in per_node if x is not None]
    jain = jain_fairness(included) if included and any(included) else None
    return EfficiencyReport(
        total_sent=sent,
        opt_throughput=int(opt),
        remark2_throughput=remark2,
        oracle_throughput=oracle_throughput,
        efficiency=efficiency,
        per_node_x=per_node,
        jain=jain,
    )


def efficiency_curve(run: RunRecord, trace: HarvestTrace, checkpoints: Sequence[int]) -> List[CheckpointPoint]:
    """Cumulative efficiency at each checkpoint horizon within one run."""
    floors = energy_floors(trace)
    k = run.config.k
    points = []
    for n in checkpoints:
        if not 1 <= n <= trace.horizon_n:
            raise ParameterError(f"checkpoint {n} outside [1, {trace.horizon_n}]", "checkpoints", n)
        opt = int(min(k * n, floors[:, n - 1].sum()))
        sent = int(run.cumulative_sent[n - 1])
        points.append(CheckpointPoint(horizon=n, efficiency=_efficiency(sent, opt, n)))
    return points
