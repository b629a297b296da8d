import os
from dataclasses import dataclass, field
from pathlib import Path

try:
	from dotenv import load_dotenv  # type: ignore
	# Load from project root .env if present
	load_dotenv(dotenv_path=Path(__file__).parent / ".env")
except Exception:
	# dotenv is optional at runtime
	pass


def _int_env(name: str, default: int) -> int:
	raw = os.getenv(name)
	if raw is None or not raw.strip():
		return default
	try:
		return int(raw)
	except ValueError:
		return default


@dataclass
class SimulationSettings:
	output_dir: str = field(default_factory=lambda: os.getenv("EHSCHED_OUTPUT_DIR", "results"))
	log_dir: str = field(default_factory=lambda: os.getenv("EHSCHED_LOG_DIR", "logs"))
	default_seeds: int = field(default_factory=lambda: _int_env("EHSCHED_DEFAULT_SEEDS", 30))
	workers: int = field(default_factory=lambda: _int_env("EHSCHED_WORKERS", 1))


settings = SimulationSettings()
