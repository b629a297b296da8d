"""Pydantic schemas for configuration, reports and HTTP payloads.

Network/harvest/policy configuration models validate the experiment inputs;
report models carry the metrics of a finished run; request/response models
are the bodies used by the HTTP router.
"""

from typing import List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from exceptions import ParameterError

STOCHASTIC_TOLERANCE = 1e-12


# Network and harvest configuration
class NetworkConfig(BaseModel):
    """Sizes of one scheduling problem: m nodes, k channels, N slots."""
    model_config = ConfigDict(frozen=True)

    m: int = Field(..., ge=1, description="Number of energy-harvesting nodes")
    k: int = Field(..., ge=1, description="Number of orthogonal channels")
    horizon_n: int = Field(..., ge=1, description="Number of time slots N")
    battery_cap: Optional[float] = Field(None, gt=0, description="Battery capacity; None means unbounded")
    harvest_before_transmit: bool = Field(
        True, description="Energy harvested in slot t is usable in slot t (False: from t+1)"
    )

    @model_validator(mode="after")
    def _channels_fit_nodes(self) -> "NetworkConfig":
        if self.k > self.m:
            raise ValueError(f"k={self.k} channels exceed m={self.m} nodes")
        return self

    @property
    def unbounded(self) -> bool:
        return self.battery_cap is None

    @property
    def cap_value(self) -> float:
        """Capacity as a float, +inf when unbounded."""
        return float("inf") if self.battery_cap is None else float(self.battery_cap)

    def with_cap(self, battery_cap: Optional[float]) -> "NetworkConfig":
        return self.model_copy(update={"battery_cap": battery_cap})


def symmetric_transition(size: int = 3, stay: float = 0.9) -> List[List[float]]:
    """Transition matrix with `stay` on the diagonal and the rest spread evenly."""
    if size == 1:
        return [[1.0]]
    off = (1.0 - stay) / (size - 1)
    return [[stay if i == j else off for j in range(size)] for i in range(size)]


class MarkovHarvestParams(BaseModel):
    """Finite-state Markov modulation of a node's harvest rate."""
    model_config = ConfigDict(frozen=True)

    levels: List[float] = Field(default_factory=lambda: [0.0, 1.0, 2.0])
    transition: List[List[float]] = Field(default_factory=symmetric_transition)
    scale: float = Field(1.0, ge=0, description="Extra multiplier applied to every node's harvest")
    literal: bool = Field(False, description="Use E = d_i * M_i(t) without the k/m normalization")
    initial_state: Optional[int] = Field(None, ge=0, description="Fixed start state; None draws from stationary")

    @model_validator(mode="after")
    def _row_stochastic(self) -> "MarkovHarvestParams":
        matrix = np.asarray(self.transition, dtype=float)
        size = len(self.levels)
        if matrix.shape != (size, size):
            raise ParameterError(
                f"transition must be {size}x{size} to match levels, got {matrix.shape}", "transition"
            )
        if (matrix < 0).any():
            raise ParameterError("transition entries must be nonnegative", "transition")
        row_sums = matrix.sum(axis=1)
        if not np.allclose(row_sums, 1.0, rtol=0.0, atol=STOCHASTIC_TOLERANCE):
            raise ParameterError("transition rows must sum to 1", "transition", row_sums.tolist())
        if any(level < 0 for level in self.levels):
            raise ParameterError("levels must be nonnegative", "levels")
        if self.initial_state is not None and self.initial_state >= size:
            raise ParameterError("initial_state out of range", "initial_state", self.initial_state)
        return self


class ProfileSpec(BaseModel):
    """Two-level density profile: the first count_high nodes get d_high, the rest d_low."""
    model_config = ConfigDict(frozen=True)

    count_high: int = Field(0, ge=0)
    d_high: float = Field(0.0, ge=0)
    d_low: float = Field(..., ge=0)

    @property
    def label(self) -> str:
        return f"{self.count_high}:{self.d_high:g}:{self.d_low:g}"

    def network_density(self, m: int) -> float:
        high = min(self.count_high, m)
        return (high * self.d_high + (m - high) * self.d_low) / m


class PolicySpec(BaseModel):
    """Policy selection by name: urop{seed}, rr{quantum,seed}, up{seed}."""
    model_config = ConfigDict(frozen=True)

    name: Literal["urop", "rr", "up"]
    quantum: int = Field(1, ge=1)
    seed: Optional[int] = Field(None, description="Ordering seed; None reuses the run seed")
    order: Optional[List[int]] = Field(None, description="Explicit node order; overrides the seed")

    @property
    def label(self) -> str:
        if self.name == "rr" and self.quantum != 1:
            return f"rr{self.quantum}"
        return self.name


# Experiment specs
class OutputSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    dir: Optional[str] = Field(None, description="Output directory; None uses EHSCHED_OUTPUT_DIR")
    name: str = Field("results", min_length=1, description="Stem of the CSV/JSON file names")
    formats: List[Literal["csv", "json"]] = Field(default_factory=lambda: ["csv", "json"], min_length=1)
    slot_log: bool = False
    checkpoint_step: Optional[int] = Field(None, ge=1)


class ExperimentSpec(BaseModel):
    """Everything one `simulate` or `bounds` invocation needs."""
    model_config = ConfigDict(frozen=True)

    network: NetworkConfig
    battery_caps: List[Optional[float]] = Field(default_factory=lambda: [None], min_length=1)
    process: Literal["deterministic", "poisson", "markov"] = "poisson"
    profile: ProfileSpec
    markov: MarkovHarvestParams = Field(default_factory=MarkovHarvestParams)
    policies: List[PolicySpec] = Field(..., min_length=1)
    seeds: List[int] = Field(..., min_length=1)
    output: OutputSpec = Field(default_factory=OutputSpec)
    use_oracle_norm: bool = False
    bound_profiles: List[ProfileSpec] = Field(default_factory=list)
    bound_horizons: List[int] = Field(default_factory=list)

    @model_validator(mode="after")
    def _profile_fits(self) -> "ExperimentSpec":
        for profile in [self.profile, *self.bound_profiles]:
            if profile.count_high > self.network.m:
                raise ParameterError(
                    f"count_high={profile.count_high} exceeds m={self.network.m}", "harvest.count_high"
                )
        if any(cap is not None and cap <= 0 for cap in self.battery_caps):
            raise ParameterError("battery caps must be positive", "network.battery_caps")
        if any(n < 1 for n in self.bound_horizons):
            raise ParameterError("bound horizons must be >= 1", "bounds.horizons")
        return self


# Reports
class EfficiencyReport(BaseModel):
    """Throughput efficiency and P-fair Jain index of one run."""
    total_sent: int
    opt_throughput: int
    remark2_throughput: int
    oracle_throughput: Optional[int] = None
    efficiency: float
    per_node_x: List[Optional[float]]
    jain: Optional[float] = None


class CheckpointPoint(BaseModel):
    horizon: int
    efficiency: float


class RunSummary(BaseModel):
    """JSON summary of one simulated (policy, seed) cell."""
    policy: str
    process: str
    seed: int
    config: NetworkConfig
    density: float
    packets_sent: List[int]
    overflow_lost: float
    decision_checks: int
    elephant_skips: int
    idle_checks: int
    report: EfficiencyReport
    bound_t4: Optional[float] = None
    bound_t5: Optional[float] = None
    rr_prediction: float
    curve: List[CheckpointPoint] = []


class SweepRow(BaseModel):
    """One CSV row of the sweep output; column order is the field order."""
    policy: str
    process: str
    m: int
    k: int
    N: int
    D: float
    seed: int
    efficiency: float
    jain: Optional[float] = None
    bound_t4: Optional[float] = None
    bound_t5: Optional[float] = None
    rr_prediction: float


class BoundsRow(BaseModel):
    """One row of the analytic bounds table."""
    profile: str
    D: float
    N: int
    urop_bound: Optional[float] = None
    urop_status: Literal["ok", "out of domain"] = "ok"
    rr_prediction: float
    capacity: Literal["admissible", "saturated"]
    max_efficiency: float


# HTTP request/response bodies
class BoundsRequest(BaseModel):
    """Profile grid evaluated by POST /bounds."""
    m: int = Field(..., ge=1)
    k: int = Field(..., ge=1)
    horizons: List[int] = Field(..., min_length=1)
    profiles: List[ProfileSpec] = Field(..., min_length=1)


class SimulationRequest(BaseModel):
    """Single run evaluated by POST /simulate."""
    network: NetworkConfig
    process: Literal["deterministic", "poisson", "markov"] = "poisson"
    profile: ProfileSpec
    markov: Optional[MarkovHarvestParams] = None
    policy: PolicySpec
    seed: int = 0
    use_oracle_norm: bool = False
    checkpoint_step: Optional[int] = Field(None, ge=1)


class OracleRequest(BaseModel):
    """Explicit trace evaluated by POST /oracle."""
    k: int = Field(..., ge=1)
    grid: List[List[float]] = Field(..., min_length=1, description="m rows of N per-slot harvest amounts")
    initial_battery: Optional[List[float]] = None
    battery_cap: Optional[float] = Field(None, gt=0)
    brute_force: bool = False


class OracleResponse(BaseModel):
    m: int
    k: int
    horizon_n: int
    offline_optimum: int
    remark2_throughput: int
    brute_force_optimum: Optional[int] = None
