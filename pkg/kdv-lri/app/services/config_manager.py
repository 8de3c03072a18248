"""
Configuration Manager - resolves a RunConfig from defaults, a JSON config file and CLI flags
Precedence: flags over file over defaults; KDV_JOBS is the fallback for jobs
"""

import argparse
import json
import re
from typing import Any, Dict, List, Optional, Sequence

import structlog
from pydantic import ValidationError

from app.config import settings
from app.models import Command, ReportFormat, RunConfig
from app.services.error_management import KdVError, UsageError
from app.services.lri_scheme import Scheme, step_count

logger = structlog.get_logger(__name__)

_POWER_OF_TWO = re.compile(r"^2\^(-?\d+)$")
_POWER_RANGE = re.compile(r"^2\^(-?\d+)\.\.2\^(-?\d+)$")


class UsageArgumentParser(argparse.ArgumentParser):
    """ArgumentParser that raises UsageError instead of exiting"""

    def error(self, message: str):
        raise UsageError(message)


def parse_number(token: str) -> float:
    """Float or 2^n"""
    token = token.strip()
    match = _POWER_OF_TWO.match(token)
    if match:
        return 2.0 ** int(match.group(1))
    return float(token)


def parse_float_list(text: str) -> List[float]:
    """Comma list of numbers, or a dyadic range 2^-a..2^-b stepping one power at a time"""
    text = text.strip()
    match = _POWER_RANGE.match(text)
    if match:
        start, stop = int(match.group(1)), int(match.group(2))
        step = 1 if stop >= start else -1
        return [2.0 ** n for n in range(start, stop + step, step)]
    return [parse_number(token) for token in text.split(",") if token.strip()]


def parse_int_list(text: str) -> List[int]:
    return [int(token) for token in text.split(",") if token.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = UsageArgumentParser(prog="kdv-lri", description="Low-regularity integrator toolkit for KdV",
                                 argument_default=argparse.SUPPRESS)
    parser.add_argument("command", choices=[c.value for c in Command])

    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--print-config", action="store_true", help="Print the resolved config and exit")

    parser.add_argument("--gamma", type=float)
    parser.add_argument("--input")
    parser.add_argument("--tau", type=parse_number)
    parser.add_argument("--tmax", type=parse_number)
    parser.add_argument("--modes", type=int)
    parser.add_argument("--scheme", choices=[s.value for s in Scheme])
    parser.add_argument("--snapshot-every", type=int)
    parser.add_argument("--snapshot-dir")

    parser.add_argument("--gammas", type=parse_float_list)
    parser.add_argument("--taus", type=parse_float_list)
    parser.add_argument("--reference-tau", type=parse_number)
    parser.add_argument("--baseline", choices=[s.value for s in Scheme])
    parser.add_argument("--series-dir")

    parser.add_argument("--bound", type=int)
    parser.add_argument("--c-small", type=float)
    parser.add_argument("--samples", type=int)
    parser.add_argument("--seed", type=int)

    parser.add_argument("--oracle-modes", type=parse_int_list)
    parser.add_argument("--oracle-taus", type=parse_float_list)
    parser.add_argument("--fields", type=int)

    parser.add_argument("--output")
    parser.add_argument("--format", choices=[f.value for f in ReportFormat])
    parser.add_argument("--jobs", type=int)
    parser.add_argument("--log-level")
    return parser


class ConfigManager:
    """Resolves and validates the run configuration"""

    def __init__(self):
        self.config: Optional[RunConfig] = None
        self.sources: Dict[str, str] = {}
        self.print_config = False

    def load_configuration(self, argv: Sequence[str]) -> RunConfig:
        """Load and validate the run configuration"""

        flags = vars(build_parser().parse_args(list(argv)))
        config_file = flags.pop("config", None)
        self.print_config = bool(flags.pop("print_config", False))

        values: Dict[str, Any] = {}
        for key, value in self._load_from_file(config_file).items():
            values[key] = value
            self.sources[key] = "file"
        for key, value in flags.items():
            values[key] = value
            self.sources[key] = "flag"

        if "jobs" not in values:
            values["jobs"] = self._load_from_environment()["jobs"]
            self.sources["jobs"] = "env"

        try:
            config = RunConfig(**values)
        except ValidationError as e:
            first = e.errors()[0]
            key = ".".join(str(part) for part in first["loc"]) or None
            raise UsageError(first["msg"], key=key) from e

        self.config = self._validate_configuration(config)

        logger.info("Configuration loaded", command=config.command.value, config_file=config_file,
                    flags=sorted(flags))
        return self.config

    def _load_from_file(self, path: Optional[str]) -> Dict[str, Any]:
        """Load configuration from JSON file; keys starting with '_' are comments"""

        if not path:
            return {}
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise UsageError(f"cannot read config file {path}: {e}", key="config") from e
        if not isinstance(data, dict):
            raise UsageError("config file must hold a JSON object", key="config")
        return {k.replace("-", "_"): v for k, v in data.items() if not k.startswith("_")}

    def _load_from_environment(self) -> Dict[str, Any]:
        return {"jobs": settings.KDV_JOBS}

    def _validate_configuration(self, config: RunConfig) -> RunConfig:
        """Cross-field checks per command"""

        try:
            if config.command == Command.EVOLVE:
                if config.tau is None:
                    raise UsageError("required for evolve", key="tau")
                if config.gamma is None and config.input is None:
                    raise UsageError("evolve needs --gamma or --input", key="gamma")
                self._check_steps(config.tmax, config.tau, "tau")

            elif config.command == Command.CONVERGENCE:
                taus = config.taus
                if any(b >= a for a, b in zip(taus, taus[1:])):
                    raise UsageError("must be strictly decreasing", key="taus")
                if any(not 0.0 < tau <= 0.5 for tau in taus):
                    raise UsageError("every step must lie in (0, 0.5]", key="taus")
                for tau in taus:
                    self._check_steps(config.tmax, tau, "taus")
                if any(not 0.0 < g <= 1.0 for g in config.gammas):
                    raise UsageError("every gamma must lie in (0, 1]", key="gammas")
                if config.reference_tau is not None:
                    if config.reference_tau > taus[-1] / 16:
                        raise UsageError("must be at most min(taus)/16", key="reference_tau")
                    self._check_steps(config.tmax, config.reference_tau, "reference_tau")
                if config.baseline is not None and config.baseline == config.scheme:
                    raise UsageError("must differ from --scheme", key="baseline")

            elif config.command == Command.VERIFY:
                if config.bound > settings.SCAN_MAX_BOUND:
                    raise UsageError(f"exceeds SCAN_MAX_BOUND={settings.SCAN_MAX_BOUND}", key="bound")

            elif config.command == Command.ORACLE:
                if any(K < 1 or K > settings.ORACLE_MAX_TRIPLE_K for K in config.oracle_modes):
                    raise UsageError(f"each K must lie in [1, {settings.ORACLE_MAX_TRIPLE_K}]", key="oracle_modes")
                if any(not 0.0 < tau <= 0.5 for tau in config.oracle_taus):
                    raise UsageError("every step must lie in (0, 0.5]", key="oracle_taus")

        except UsageError:
            raise
        except KdVError as e:
            raise UsageError(str(e)) from e

        return config

    @staticmethod
    def _check_steps(T: float, tau: float, key: str):
        try:
            step_count(T, tau)
        except KdVError as e:
            raise UsageError(f"non-integer step count: {e}", key=key) from e

    def get_configuration_summary(self) -> Dict[str, Any]:
        """Resolved values plus where each explicitly set value came from"""
        if not self.config:
            return {"status": "not_loaded"}
        return {
            "config": json.loads(self.config.model_dump_json()),
            "sources": dict(sorted(self.sources.items())),
        }


def parse_config(argv: Sequence[str]) -> RunConfig:
    """Resolve the RunConfig for argv"""
    return ConfigManager().load_configuration(argv)
