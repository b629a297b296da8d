"""Experiment specs, the (policy, seed) sweep and the analytic bounds table.

Spec files are INI documents read with configparser; see specs/SCHEMA.md.
Cells of a sweep are independent and may run in a process pool; results are
collected, sorted by (policy, seed) and written by the calling process only.
"""

from __future__ import annotations

import configparser
import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from pydantic import BaseModel, ValidationError

from core import run_simulation
from exceptions import ConfigurationError, DomainError
from harvest import generate_trace, make_profile
from metrics import (
    capacity_from_volume,
    density,
    efficiency_curve,
    efficiency_report,
    rr_efficiency_prediction,
    rr_prediction_from_densities,
    theorem4_lower_bound,
    urop_lower_bound,
)
from oracle import offline_optimum
from policies import build_policy
from schemas import (
    BoundsRow,
    ExperimentSpec,
    MarkovHarvestParams,
    NetworkConfig,
    OutputSpec,
    PolicySpec,
    ProfileSpec,
    RunSummary,
    SweepRow,
    symmetric_transition,
)
from settings import SimulationSettings

logger = logging.getLogger(__name__)

FLOAT_DIGITS = 6


# ---- spec loading ----
def _split(raw: str) -> List[str]:
    return [part.strip() for part in raw.split(",") if part.strip()]


def _get(parser: configparser.ConfigParser, section: str, key: str, fallback: Optional[str] = None) -> Optional[str]:
    if parser.has_section(section) and parser.has_option(section, key):
        return parser.get(section, key).strip()
    return fallback


def _as_int(raw: str, field_name: str) -> int:
    try:
        return int(raw)
    except (TypeError, ValueError):
        raise ConfigurationError(f"{field_name} must be an integer, got {raw!r}", field_name)


def _as_float(raw: str, field_name: str) -> float:
    try:
        return float(raw)
    except (TypeError, ValueError):
        raise ConfigurationError(f"{field_name} must be a number, got {raw!r}", field_name)


def _as_bool(raw: Optional[str], field_name: str, default: bool = False) -> bool:
    if raw is None:
        return default
    value = raw.lower()
    if value in configparser.ConfigParser.BOOLEAN_STATES:
        return configparser.ConfigParser.BOOLEAN_STATES[value]
    raise ConfigurationError(f"{field_name} must be a boolean, got {raw!r}", field_name)


def _required(parser: configparser.ConfigParser, section: str, key: str) -> str:
    value = _get(parser, section, key)
    if value is None or value == "":
        raise ConfigurationError(f"missing required field {section}.{key}", f"{section}.{key}")
    return value


def parse_cap(raw: str) -> Optional[float]:
    if raw.lower() in ("unbounded", "none", "inf"):
        return None
    return _as_float(raw, "network.battery_caps")


def parse_profile(raw: str) -> ProfileSpec:
    """`count_high:d_high:d_low`, e.g. `25:3:0.3`."""
    parts = raw.split(":")
    if len(parts) != 3:
        raise ConfigurationError(f"profile {raw!r} must be count_high:d_high:d_low", "bounds.profiles")
    return _validated(
        ProfileSpec,
        "bounds.profiles",
        count_high=_as_int(parts[0], "bounds.profiles"),
        d_high=_as_float(parts[1], "bounds.profiles"),
        d_low=_as_float(parts[2], "bounds.profiles"),
    )


def _validated(model: type[BaseModel], section: str, **values):
    try:
        return model(**values)
    except ValidationError as exc:
        err = exc.errors()[0]
        loc = ".".join(str(p) for p in err.get("loc", ()) if p != "__root__")
        field_name = f"{section}.{loc}" if loc else section
        raise ConfigurationError(f"invalid {field_name}: {err.get('msg')}", field_name) from exc


def _parse_seeds(parser: configparser.ConfigParser, default_count: int) -> List[int]:
    listed = _get(parser, "seeds", "list")
    if listed:
        return [_as_int(s, "seeds.list") for s in _split(listed)]
    count = _as_int(_get(parser, "seeds", "count", str(default_count)), "seeds.count")
    base = _as_int(_get(parser, "seeds", "base", "0"), "seeds.base")
    if count < 1:
        raise ConfigurationError("seeds.count must be >= 1", "seeds.count")
    return list(range(base, base + count))


def _parse_policies(parser: configparser.ConfigParser) -> List[PolicySpec]:
    names = _split(_required(parser, "policies", "names"))
    quantum = _as_int(_get(parser, "policies", "rr_quantum", "1"), "policies.rr_quantum")
    order_seed = _get(parser, "policies", "order_seed")
    seed = _as_int(order_seed, "policies.order_seed") if order_seed else None
    specs = []
    for name in names:
        if name not in ("urop", "rr", "up"):
            raise ConfigurationError(f"unknown policy {name!r}", "policies.names")
        specs.append(_validated(PolicySpec, "policies", name=name, quantum=quantum if name == "rr" else 1, seed=seed))
    return specs


def _parse_markov(parser: configparser.ConfigParser) -> MarkovHarvestParams:
    levels_raw = _get(parser, "harvest", "levels")
    levels = [_as_float(x, "harvest.levels") for x in _split(levels_raw)] if levels_raw else [0.0, 1.0, 2.0]
    stay = _as_float(_get(parser, "harvest", "stay_probability", "0.9"), "harvest.stay_probability")
    initial = _get(parser, "harvest", "initial_state")
    return _validated(
        MarkovHarvestParams,
        "harvest",
        levels=levels,
        transition=symmetric_transition(len(levels), stay),
        scale=_as_float(_get(parser, "harvest", "scale", "1"), "harvest.scale"),
        literal=_as_bool(_get(parser, "harvest", "literal"), "harvest.literal"),
        initial_state=_as_int(initial, "harvest.initial_state") if initial else None,
    )


def parse_spec(text: str, *, source: str = "<string>") -> ExperimentSpec:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigurationError(f"cannot parse {source}: {exc}", "spec") from exc

    within = (_get(parser, "network", "within_slot_harvest", "before") or "before").lower()
    if within not in ("before", "after"):
        raise ConfigurationError("within_slot_harvest must be 'before' or 'after'", "network.within_slot_harvest")
    network = _validated(
        NetworkConfig,
        "network",
        m=_as_int(_required(parser, "network", "m"), "network.m"),
        k=_as_int(_required(parser, "network", "k"), "network.k"),
        horizon_n=_as_int(_required(parser, "network", "horizon"), "network.horizon"),
        harvest_before_transmit=within == "before",
    )
    caps = [parse_cap(c) for c in _split(_get(parser, "network", "battery_caps", "unbounded"))]

    process = (_get(parser, "harvest", "process", "poisson") or "poisson").lower()
    if process not in ("deterministic", "poisson", "markov"):
        raise ConfigurationError(f"unknown harvest process {process!r}", "harvest.process")
    profile = _validated(
        ProfileSpec,
        "harvest",
        count_high=_as_int(_get(parser, "harvest", "count_high", "0"), "harvest.count_high"),
        d_high=_as_float(_get(parser, "harvest", "d_high", "0"), "harvest.d_high"),
        d_low=_as_float(_required(parser, "harvest", "d_low"), "harvest.d_low"),
    )

    step = _get(parser, "output", "checkpoint_step")
    formats = _split(_get(parser, "output", "formats", "csv, json"))
    output = _validated(
        OutputSpec,
        "output",
        dir=_get(parser, "output", "dir"),
        name=_get(parser, "output", "name", Path(source).stem if source != "<string>" else "results"),
        formats=formats,
        slot_log=_as_bool(_get(parser, "output", "slot_log"), "output.slot_log"),
        checkpoint_step=_as_int(step, "output.checkpoint_step") if step else None,
    )

    bound_profiles = [parse_profile(p) for p in _split(_get(parser, "bounds", "profiles", "") or "")]
    horizons = [_as_int(n, "bounds.horizons") for n in _split(_get(parser, "bounds", "horizons", "") or "")]

    return _validated(
        ExperimentSpec,
        "spec",
        network=network,
        battery_caps=caps,
        process=process,
        profile=profile,
        markov=_parse_markov(parser),
        policies=_parse_policies(parser),
        seeds=_parse_seeds(parser, SimulationSettings().default_seeds),
        output=output,
        use_oracle_norm=_as_bool(_get(parser, "flags", "use_oracle_norm"), "flags.use_oracle_norm"),
        bound_profiles=bound_profiles,
        bound_horizons=horizons,
    )


def load_spec(path: str | Path) -> ExperimentSpec:
    spec_path = Path(path)
    if not spec_path.is_file():
        raise ConfigurationError(f"spec file not found: {spec_path}", "spec")
    spec = parse_spec(spec_path.read_text(encoding="utf-8"), source=str(spec_path))
    logger.info(f"loaded spec {spec_path.name}: m={spec.network.m} k={spec.network.k} "
                f"N={spec.network.horizon_n} policies={[p.label for p in spec.policies]} seeds={len(spec.seeds)}")
    return spec


# ---- sweep ----
@dataclass(frozen=True)
class Cell:
    spec: ExperimentSpec
    policy: PolicySpec
    seed: int
    cap: Optional[float]
    slot_log_dir: Optional[str] = None

    @property
    def label(self) -> str:
        return self.policy.label if self.cap is None else f"{self.policy.label}[cap={self.cap:g}]"


@dataclass
class CellResult:
    row: SweepRow
    summary: RunSummary


@dataclass
class ExperimentResult:
    rows: List[SweepRow]
    summaries: List[RunSummary]
    paths: Dict[str, Path] = field(default_factory=dict)


def run_cell(cell: Cell) -> CellResult:
    """Generate the seed's trace, simulate one policy on it and evaluate every metric."""
    spec = cell.spec
    config = spec.network.with_cap(cell.cap)
    profile = make_profile(spec.profile, config.m)
    trace = generate_trace(spec.process, config, profile, cell.seed, spec.markov)
    policy = build_policy(cell.policy, config.m, config.k, run_seed=cell.seed)
    run = run_simulation(config, trace, policy, cell.seed, process=spec.process)

    oracle = offline_optimum(trace, config) if spec.use_oracle_norm else None
    report = efficiency_report(run, trace, oracle, spec.use_oracle_norm)
    nominal_d = spec.profile.network_density(config.m)
    bound_t4 = theorem4_lower_bound(run, trace) if cell.policy.name == "urop" else None
    try:
        bound_t5 = urop_lower_bound(config, nominal_d)
    except DomainError:
        bound_t5 = None
    rr_prediction = rr_efficiency_prediction(trace, config, 0)

    curve = []
    step = spec.output.checkpoint_step
    if step:
        curve = efficiency_curve(run, trace, range(step, config.horizon_n + 1, step))
    if cell.slot_log_dir:
        safe = cell.label.replace("[cap=", "_cap").replace("]", "")
        run.write_slot_log(Path(cell.slot_log_dir) / f"{spec.output.name}_{safe}_seed{cell.seed}_slots.csv")

    row = SweepRow(
        policy=cell.label,
        process=spec.process,
        m=config.m,
        k=config.k,
        N=config.horizon_n,
        D=nominal_d,
        seed=cell.seed,
        efficiency=report.efficiency,
        jain=report.jain,
        bound_t4=bound_t4,
        bound_t5=bound_t5,
        rr_prediction=rr_prediction,
    )
    summary = RunSummary(
        policy=cell.label,
        process=spec.process,
        seed=cell.seed,
        config=config,
        density=density(trace, config),
        packets_sent=[int(v) for v in run.packets_sent],
        overflow_lost=float(run.final_state.overflow_lost.sum()),
        decision_checks=run.decision_checks,
        elephant_skips=run.elephant_skips,
        idle_checks=run.idle_checks,
        report=report,
        bound_t4=bound_t4,
        bound_t5=bound_t5,
        rr_prediction=rr_prediction,
        curve=curve,
    )
    return CellResult(row=row, summary=summary)


def build_cells(spec: ExperimentSpec, slot_log_dir: Optional[Path] = None) -> List[Cell]:
    log_dir = str(slot_log_dir) if (slot_log_dir and spec.output.slot_log) else None
    return [
        Cell(spec, policy, seed, cap, log_dir)
        for policy in spec.policies
        for cap in spec.battery_caps
        for seed in spec.seeds
    ]


def resolve_output_dir(spec: ExperimentSpec, out_dir: Optional[str | Path] = None) -> Path:
    """--out-dir, then the spec's [output] dir, then EHSCHED_OUTPUT_DIR."""
    return Path(out_dir or spec.output.dir or SimulationSettings().output_dir)


def run_experiment(
    spec: ExperimentSpec,
    out_dir: Optional[str | Path] = None,
    formats: Optional[Sequence[str]] = None,
    workers: Optional[int] = None,
) -> ExperimentResult:
    """Run every (policy, cap, seed) cell and write the CSV and/or JSON results."""
    target = resolve_output_dir(spec, out_dir)
    target.mkdir(parents=True, exist_ok=True)
    cells = build_cells(spec, target)
    n_workers = workers if workers is not None else SimulationSettings().workers
    logger.info(f"sweep start: {len(cells)} cells, workers={n_workers}, out={target}")

    if n_workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(run_cell, cells))
    else:
        results = [run_cell(cell) for cell in cells]

    results.sort(key=lambda r: (r.row.policy, r.row.seed))
    outcome = ExperimentResult(rows=[r.row for r in results], summaries=[r.summary for r in results])
    chosen = list(formats or spec.output.formats)
    if "csv" in chosen:
        outcome.paths["csv"] = write_rows_csv(outcome.rows, target / f"{spec.output.name}.csv")
    if "json" in chosen:
        outcome.paths["json"] = write_summary_json(spec, outcome.summaries, target / f"{spec.output.name}.json")
    for kind, path in outcome.paths.items():
        logger.info(f"wrote {kind}: {path}")
    logger.info(f"sweep done: {len(results)} rows")
    return outcome


# ---- bounds table ----
def bounds_rows(
    m: int, k: int, profiles: Iterable[ProfileSpec], horizons: Iterable[int]
) -> List[BoundsRow]:
    rows = []
    horizons = list(horizons)
    for profile in profiles:
        densities = make_profile(profile, m).densities
        D = profile.network_density(m)
        for n in horizons:
            config = NetworkConfig(m=m, k=k, horizon_n=n)
            try:
                bound, status = urop_lower_bound(config, D), "ok"
            except DomainError:
                bound, status = None, "out of domain"
            sigma = k * n / m
            capacity = capacity_from_volume(D * k * n, k * n)
            rows.append(BoundsRow(
                profile=profile.label,
                D=D,
                N=n,
                urop_bound=bound,
                urop_status=status,
                rr_prediction=rr_prediction_from_densities(densities, sigma),
                capacity=capacity.status,
                max_efficiency=capacity.max_efficiency,
            ))
    return rows


def run_bounds(
    spec: ExperimentSpec,
    out_dir: Optional[str | Path] = None,
    formats: Optional[Sequence[str]] = None,
) -> ExperimentResult:
    """Analytic bounds for the spec's profile x horizon grid, without simulating."""
    profiles = spec.bound_profiles or [spec.profile]
    horizons = spec.bound_horizons or [spec.network.horizon_n]
    rows = bounds_rows(spec.network.m, spec.network.k, profiles, horizons)
    target = resolve_output_dir(spec, out_dir)
    target.mkdir(parents=True, exist_ok=True)
    outcome = ExperimentResult(rows=rows, summaries=[])
    chosen = list(formats or spec.output.formats)
    if "csv" in chosen:
        outcome.paths["csv"] = write_rows_csv(rows, target / f"{spec.output.name}_bounds.csv")
    if "json" in chosen:
        path = target / f"{spec.output.name}_bounds.json"
        payload = {"generated_at": _timestamp(), "m": spec.network.m, "k": spec.network.k,
                   "rows": [r.model_dump() for r in rows]}
        path.write_text(json.dumps(payload, indent=2), encoding="utf-8")
        outcome.paths["json"] = path
    logger.info(f"bounds table: {len(rows)} rows -> {target}")
    return outcome


# ---- writers ----
def format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return f"{value:.{FLOAT_DIGITS}f}"
    return str(value)


def write_rows_csv(rows: Sequence[BaseModel], path: Path) -> Path:
    """One row per model; columns follow the model's field order."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if rows:
            columns = list(type(rows[0]).model_fields)
            writer.writerow(columns)
            for row in rows:
                writer.writerow([format_value(getattr(row, c)) for c in columns])
    return path


def _timestamp() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def write_summary_json(spec: ExperimentSpec, summaries: Sequence[RunSummary], path: Path) -> Path:
    payload = {
        "generated_at": _timestamp(),
        "spec": spec.model_dump(mode="json"),
        "runs": [s.model_dump(mode="json") for s in summaries],
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2), encoding="utf-8")
    return path


def summarize(rows: Iterable[SweepRow]) -> Dict[Tuple[str, float], Dict[str, float]]:
    """Seed-averaged efficiency and Jain index per (policy, D)."""
    groups: Dict[Tuple[str, float], List[SweepRow]] = {}
    for row in rows:
        groups.setdefault((row.policy, row.D), []).append(row)
    out = {}
    for key, members in groups.items():
        jains = [r.jain for r in members if r.jain is not None]
        out[key] = {
            "runs": len(members),
            "mean_efficiency": sum(r.efficiency for r in members) / len(members),
            "mean_jain": sum(jains) / len(jains) if jains else float("nan"),
        }
    return out
