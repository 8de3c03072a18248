"""
KdV Low-Regularity Integrator toolkit
Command line entry point: evolve | convergence | verify | oracle
"""

import json
import logging
import sys
from typing import Any, Dict, Optional, Sequence

import structlog

from app.config import settings
from app.models import Command, RunConfig
from app.services.config_manager import ConfigManager
from app.services.error_management import CheckFailedError, ExitCode, error_handler
from app.services.experiments import RoughDataSpec, convergence_study, rough_initial_data
from app.services.lri_scheme import DiagnosticsRecorder, SchemeConfig, evolve, evolve_with_mean, step_count
from app.services.oracle import check_symbol_identity, run_oracle_suite
from app.services.persistence import (
    read_field,
    write_field,
    write_json,
    write_loglog_series,
    write_report,
    write_verification_report,
)
from app.services.spectral_core import grid_new, l2_norm, regrid, zero_mode
from app.services.theory_checks import check_eta_vanishing, check_phase_factorization, scan_average_lemma, scan_phase_lemma

logger = structlog.get_logger(__name__)

ETA_CHECK_TAUS = (0.5, 0.1, 0.01)


def configure_logging(level: str = None, fmt: str = None):
    """Structured logging to stderr"""

    level = (level or settings.LOG_LEVEL).upper()
    fmt = fmt or settings.LOG_FORMAT
    logging.basicConfig(stream=sys.stderr, level=getattr(logging, level, logging.INFO),
                        format="%(message)s", force=True)

    renderer = structlog.processors.JSONRenderer() if fmt == "json" else structlog.dev.ConsoleRenderer()
    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.stdlib.PositionalArgumentsFormatter(),
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            structlog.processors.UnicodeDecoder(),
            renderer,
        ],
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=False,
    )


def _emit(payload: Dict[str, Any]):
    print(json.dumps(payload, indent=2, default=str))


def run_evolve(config: RunConfig) -> Dict[str, Any]:
    if config.input:
        u0 = read_field(config.input)
        if config.modes is not None and u0.grid.K != config.modes:
            u0 = regrid(u0, grid_new(config.modes))
    else:
        u0 = rough_initial_data(RoughDataSpec(gamma=config.gamma, K=config.bandwidth), grid_new(config.bandwidth))

    cfg = SchemeConfig(tau=config.tau, scheme=config.scheme, grid=u0.grid)
    steps = step_count(config.tmax, config.tau)
    recorder = DiagnosticsRecorder(config.tau, every=max(1, steps // 100))
    kwargs = dict(on_step=recorder, snapshot_every=config.snapshot_every, snapshot_dir=config.snapshot_dir)

    if zero_mode(u0) != 0:
        result = evolve_with_mean(u0, cfg, config.tmax, **kwargs)
    else:
        result = evolve(u0, cfg, config.tmax, **kwargs)

    output = config.output or "field.json"
    write_field(result, output, time=config.tmax, step=steps)

    return {
        "command": "evolve",
        "steps": steps,
        "tau": config.tau,
        "scheme": config.scheme.value,
        "l2_norm_initial": l2_norm(u0),
        "l2_norm_final": l2_norm(result),
        "max_mean_drift": max((d.mean_drift for d in recorder.records), default=0.0),
        "max_reality_defect": max((d.reality_defect for d in recorder.records), default=0.0),
        "real_flag": result.real_flag,
        "output": output,
    }


def run_convergence(config: RunConfig) -> Dict[str, Any]:
    report = convergence_study(
        gammas=config.gammas,
        taus=config.taus,
        K=config.bandwidth,
        T=config.tmax,
        scheme=config.scheme,
        tau_ref=config.reference_tau,
        jobs=config.jobs,
        baseline=config.baseline,
    )

    output = config.output or f"convergence.{config.format.value}"
    write_report(report, output, config.format)
    if config.series_dir:
        write_loglog_series(report, config.series_dir)

    return {
        "command": "convergence",
        "rows": len(report.rows),
        "output": output,
        "fitted_orders": [fit.model_dump(include={"gamma", "order", "note"}) for fit in report.fitted_orders],
    }


def run_verify(config: RunConfig) -> Dict[str, Any]:
    reports = {}
    for name, report in scan_phase_lemma(config.bound, config.c_small, jobs=config.jobs).items():
        reports[f"phase_{name}"] = report
    reports["phase_factorization"] = check_phase_factorization(config.bound)
    reports["eta_vanishing"] = check_eta_vanishing(config.bound, ETA_CHECK_TAUS)
    for name, report in scan_average_lemma(config.samples, config.seed).items():
        reports[f"average_{name}"] = report

    violations = check_symbol_identity(config.bound)
    payload = {name: report.model_dump() for name, report in reports.items()}
    payload["symbol_identity"] = {"lemma": "symbol_identity", "bound": config.bound,
                                  "count": violations, "passed": violations == 0}

    if config.output:
        write_json(payload, config.output)

    failed = [name for name, entry in payload.items() if not entry["passed"]]
    summary = {"command": "verify", "checks": len(payload), "failed": failed, "output": config.output}
    if not config.output:
        summary["reports"] = payload
    if failed:
        _emit(summary)
        raise CheckFailedError(f"verification failed: {', '.join(failed)}")
    return summary


def run_oracle(config: RunConfig) -> Dict[str, Any]:
    records = run_oracle_suite(config.oracle_modes, config.oracle_taus, config.fields, config.seed,
                               symbol_bound=config.bound)
    output = config.output or "oracle_report.json"
    write_verification_report(records, output)

    failed = [f"{r.test}(K={r.K}, tau={r.tau})" for r in records if not r.passed]
    summary = {"command": "oracle", "records": len(records), "failed": failed, "output": output}
    if failed:
        _emit(summary)
        raise CheckFailedError(f"oracle checks failed: {', '.join(failed)}")
    return summary


HANDLERS = {
    Command.EVOLVE: run_evolve,
    Command.CONVERGENCE: run_convergence,
    Command.VERIFY: run_verify,
    Command.ORACLE: run_oracle,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    configure_logging()

    manager = ConfigManager()
    try:
        config = manager.load_configuration(argv)
        configure_logging(config.log_level)

        if manager.print_config:
            _emit(manager.get_configuration_summary())
            return int(ExitCode.OK)

        logger.info("Starting command", command=config.command.value)
        _emit(HANDLERS[config.command](config))
        logger.info("Command finished", command=config.command.value)
        return int(ExitCode.OK)

    except Exception as e:
        # KdVError carries its own exit code; anything else maps to RUNTIME
        event = error_handler.handle_error(e, {"operation": argv[0] if argv else "unknown"})
        print(json.dumps(error_handler.failure_summary([event])), file=sys.stderr)
        return int(event.exit_code)


if __name__ == "__main__":
    sys.exit(main())
