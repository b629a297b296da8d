import logging
from typing import List

from fastapi import APIRouter, status

import schemas
from core import HarvestTrace
from exceptions import ConfigurationError
from experiments import Cell, bounds_rows, run_cell
from metrics import remark2_throughput
from oracle import brute_force_optimum, offline_optimum


router = APIRouter(tags=["Simulation"])
logger = logging.getLogger("simulation")


@router.post(
	"/bounds",
	response_model=List[schemas.BoundsRow],
	status_code=status.HTTP_200_OK,
	summary="Analytic bounds table",
	description="UROP lower bound, RR efficiency prediction and capacity status per (profile, N).",
)
def post_bounds(payload: schemas.BoundsRequest):
	if payload.k > payload.m:
		raise ConfigurationError(f"k={payload.k} channels exceed m={payload.m} nodes", "k")
	for profile in payload.profiles:
		if profile.count_high > payload.m:
			raise ConfigurationError(f"count_high={profile.count_high} exceeds m={payload.m}", "profiles")
	logger.info(f"Bounds request: m={payload.m} k={payload.k} profiles={len(payload.profiles)} horizons={payload.horizons}")
	return bounds_rows(payload.m, payload.k, payload.profiles, payload.horizons)


@router.post(
	"/simulate",
	response_model=schemas.RunSummary,
	summary="Simulate one run",
	description="Generate a harvest trace for the seed, run the policy and report efficiency, fairness and bounds.",
)
def post_simulate(payload: schemas.SimulationRequest):
	spec = schemas.ExperimentSpec(
		network=payload.network.with_cap(None),
		battery_caps=[payload.network.battery_cap],
		process=payload.process,
		profile=payload.profile,
		markov=payload.markov or schemas.MarkovHarvestParams(),
		policies=[payload.policy],
		seeds=[payload.seed],
		output=schemas.OutputSpec(checkpoint_step=payload.checkpoint_step),
		use_oracle_norm=payload.use_oracle_norm,
	)
	logger.info(f"Simulate request: policy={payload.policy.label} process={payload.process} seed={payload.seed}")
	result = run_cell(Cell(spec, payload.policy, payload.seed, payload.network.battery_cap))
	return result.summary


@router.post(
	"/oracle",
	response_model=schemas.OracleResponse,
	summary="Offline optimum of a trace",
)
def post_oracle(payload: schemas.OracleRequest):
	trace = HarvestTrace.from_rows(payload.grid, payload.initial_battery)
	if payload.k > trace.m:
		raise ConfigurationError(f"k={payload.k} channels exceed m={trace.m} nodes", "k")
	config = schemas.NetworkConfig(
		m=trace.m, k=payload.k, horizon_n=trace.horizon_n, battery_cap=payload.battery_cap
	)
	logger.info(f"Oracle request: m={trace.m} k={payload.k} N={trace.horizon_n}")
	return schemas.OracleResponse(
		m=trace.m,
		k=payload.k,
		horizon_n=trace.horizon_n,
		offline_optimum=offline_optimum(trace, config),
		remark2_throughput=remark2_throughput(trace, config),
		brute_force_optimum=brute_force_optimum(trace, config) if payload.brute_force else None,
	)
