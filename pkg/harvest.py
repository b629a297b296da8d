"""Harvest trace generators: deterministic, Poisson and Markov-modulated.

Every generator is calibrated so node i harvests d_i * k/m per slot on
average. Each node draws from its own random stream derived from
(seed, node id), so adding nodes leaves existing rows unchanged.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Literal, Optional, Sequence

import numpy as np
from scipy import linalg

from core import HarvestTrace
from exceptions import ConfigurationError, ParameterError
from schemas import MarkovHarvestParams, NetworkConfig, ProfileSpec

logger = logging.getLogger(__name__)

HarvestProcess = Literal["deterministic", "poisson", "markov"]


@dataclass(frozen=True)
class DensityProfile:
    """Per-node densities d_i."""
    densities: np.ndarray

    def __post_init__(self) -> None:
        d = np.asarray(self.densities, dtype=float)
        if d.ndim != 1:
            raise ConfigurationError("densities must be a 1-D vector", "densities")
        if not np.isfinite(d).all() or (d < 0).any():
            raise ParameterError("densities must be finite and nonnegative", "densities")
        object.__setattr__(self, "densities", d)

    @classmethod
    def uniform(cls, m: int, density: float) -> "DensityProfile":
        return cls(np.full(m, float(density)))

    @property
    def m(self) -> int:
        return self.densities.shape[0]

    @property
    def network_density(self) -> float:
        """D = mean of d_i."""
        return float(self.densities.mean()) if self.m else 0.0

    def rates(self, config: NetworkConfig) -> np.ndarray:
        """Mean per-slot harvest d_i * k/m."""
        if self.m != config.m:
            raise ConfigurationError(f"profile has {self.m} nodes, config has m={config.m}", "profile")
        return self.densities * config.k / config.m


def make_profile(spec: ProfileSpec, m: int) -> DensityProfile:
    if spec.count_high > m:
        raise ParameterError(f"count_high={spec.count_high} exceeds m={m}", "count_high", spec.count_high)
    d = np.full(m, spec.d_low, dtype=float)
    d[: spec.count_high] = spec.d_high
    return DensityProfile(d)


def node_generators(seed: Optional[int], m: int) -> List[np.random.Generator]:
    """One independent generator per node, keyed by (seed, node id)."""
    return [np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,))) for i in range(m)]


def _initial(config: NetworkConfig, initial_battery: Optional[Sequence[float]]) -> Optional[np.ndarray]:
    if initial_battery is None:
        return None
    b0 = np.asarray(initial_battery, dtype=float)
    if b0.shape != (config.m,):
        raise ConfigurationError(f"initial_battery must have {config.m} entries", "initial_battery")
    return b0


def gen_deterministic(
    config: NetworkConfig, profile: DensityProfile, *, initial_battery: Optional[Sequence[float]] = None
) -> HarvestTrace:
    rates = profile.rates(config)
    grid = np.repeat(rates[:, None], config.horizon_n, axis=1)
    return HarvestTrace(grid, _initial(config, initial_battery))


def gen_poisson(
    config: NetworkConfig,
    profile: DensityProfile,
    seed: Optional[int],
    *,
    initial_battery: Optional[Sequence[float]] = None,
) -> HarvestTrace:
    """i.i.d. Poisson harvests with mean d_i * k/m per slot."""
    rates = profile.rates(config)
    rows = [rng.poisson(lam, config.horizon_n) for rng, lam in zip(node_generators(seed, config.m), rates)]
    grid = np.vstack(rows).astype(float) if rows else np.zeros((0, config.horizon_n))
    return HarvestTrace(grid, _initial(config, initial_battery))


def stationary_distribution(transition: Sequence[Sequence[float]]) -> np.ndarray:
    """Left eigenvector of P for the eigenvalue closest to 1, normalized to sum 1."""
    P = np.asarray(transition, dtype=float)
    vals, vecs = linalg.eig(P.T)
    idx = np.argmin(np.abs(vals - 1.0))
    pi = np.real(vecs[:, idx])
    pi = pi / pi.sum()
    return np.clip(pi, 0.0, None) / np.clip(pi, 0.0, None).sum()


def simulate_chains(
    params: MarkovHarvestParams, m: int, horizon_n: int, seed: Optional[int]
) -> np.ndarray:
    """State indices M_i(t) for every node (m x N).

    Node i uses its own stream: one draw for the start state, then N-1
    uniforms for the transitions, all advanced together across nodes.
    """
    P = np.asarray(params.transition, dtype=float)
    size = P.shape[0]
    cumulative = np.cumsum(P, axis=1)
    cumulative[:, -1] = 1.0
    pi = stationary_distribution(P)

    starts = np.empty(m, dtype=np.int64)
    uniforms = np.empty((m, max(horizon_n - 1, 0)))
    for i, rng in enumerate(node_generators(seed, m)):
        starts[i] = params.initial_state if params.initial_state is not None else rng.choice(size, p=pi)
        uniforms[i] = rng.random(horizon_n - 1)

    states = np.empty((m, horizon_n), dtype=np.int64)
    states[:, 0] = starts
    for t in range(1, horizon_n):
        rows = cumulative[states[:, t - 1]]
        states[:, t] = np.minimum((uniforms[:, t - 1, None] >= rows).sum(axis=1), size - 1)
    return states


def gen_markov(
    config: NetworkConfig,
    profile: DensityProfile,
    params: MarkovHarvestParams,
    seed: Optional[int],
    *,
    initial_battery: Optional[Sequence[float]] = None,
) -> HarvestTrace:
    """Markov-modulated harvests.

    Normalized (default): E = d_i * (k/m) * level / mu * scale, mu being the
    stationary mean level (1 for the default {0,1,2} chain), which keeps the
    mean at d_i * k/m. With ``params.literal``: E = d_i * level * scale.
    """
    levels = np.asarray(params.levels, dtype=float)
    states = simulate_chains(params, config.m, config.horizon_n, seed)
    modulation = levels[states]
    if params.literal:
        grid = profile.densities[:, None] * modulation
    else:
        mu = float(stationary_distribution(params.transition) @ levels)
        grid = profile.rates(config)[:, None] * modulation / (mu if mu > 0 else 1.0)
    return HarvestTrace(grid * params.scale, _initial(config, initial_battery))


def generate_trace(
    process: HarvestProcess,
    config: NetworkConfig,
    profile: DensityProfile,
    seed: Optional[int] = None,
    markov: Optional[MarkovHarvestParams] = None,
    *,
    initial_battery: Optional[Sequence[float]] = None,
) -> HarvestTrace:
    if process == "deterministic":
        trace = gen_deterministic(config, profile, initial_battery=initial_battery)
    elif process == "poisson":
        trace = gen_poisson(config, profile, seed, initial_battery=initial_battery)
    elif process == "markov":
        trace = gen_markov(config, profile, markov or MarkovHarvestParams(), seed, initial_battery=initial_battery)
    else:
        raise ConfigurationError(f"unknown harvest process {process!r}", "process")
    logger.debug(f"generated {process} trace m={config.m} N={config.horizon_n} seed={seed}")
    return trace
