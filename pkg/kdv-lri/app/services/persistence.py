"""
Persistence - atomic writes of fields, reports and plot-ready series
"""

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Iterable, List, Optional, Union

import numpy as np
import structlog
from pydantic import ValidationError

from app.models import ConvergenceReport, ConvergenceRow, FieldSnapshot, ReportFormat, VerificationRecord
from app.services.error_management import PersistenceError
from app.services.spectral_core import SpectralField, grid_new

logger = structlog.get_logger(__name__)

PathLike = Union[str, Path]

CSV_COLUMNS = ["gamma", "tau", "error_l2", "modes", "T", "scheme", "reference_tau"]


def atomic_write(path: PathLike, text: str):
    """Write text to a temp file next to path, then rename over it"""

    path = Path(path)
    directory = path.parent if str(path.parent) else Path(".")
    try:
        directory.mkdir(parents=True, exist_ok=True)
        handle, temp_path = tempfile.mkstemp(dir=directory, prefix=f".{path.name}.", suffix=".tmp")
    except OSError as e:
        raise PersistenceError(str(path), str(e)) from e

    try:
        with os.fdopen(handle, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(temp_path, path)
    except OSError as e:
        if os.path.exists(temp_path):
            os.unlink(temp_path)
        raise PersistenceError(str(path), str(e)) from e

    logger.debug("File written", file=str(path), bytes=len(text))


def field_to_snapshot(field: SpectralField, time: Optional[float] = None,
                      step: Optional[int] = None) -> FieldSnapshot:
    return FieldSnapshot(
        K=field.grid.K,
        real=field.real_flag,
        coeffs=[[float(c.real), float(c.imag)] for c in field.coeffs],
        time=time,
        step=step,
    )


def write_field(field: SpectralField, path: PathLike, time: Optional[float] = None,
                step: Optional[int] = None):
    """Field snapshot as JSON with shortest round-trip float text"""
    snapshot = field_to_snapshot(field, time, step)
    atomic_write(path, json.dumps(snapshot.model_dump(exclude_none=True)))


def read_field(path: PathLike) -> SpectralField:
    """Inverse of write_field"""

    path = Path(path)
    try:
        snapshot = FieldSnapshot.model_validate_json(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise PersistenceError(str(path), str(e)) from e
    except ValidationError as e:
        raise PersistenceError(str(path), f"invalid field file: {e.errors()[0]['msg']}") from e

    grid = grid_new(snapshot.K)
    if len(snapshot.coeffs) != grid.size or any(len(pair) != 2 for pair in snapshot.coeffs):
        raise PersistenceError(str(path), f"expected {grid.size} [re, im] pairs for K={snapshot.K}")
    values = np.array(snapshot.coeffs, dtype=np.float64)
    try:
        return SpectralField(grid=grid, coeffs=values[:, 0] + 1j * values[:, 1], real_flag=snapshot.real)
    except ValidationError as e:
        raise PersistenceError(str(path), f"invalid field file: {e.errors()[0]['msg']}") from e


def _format_float(value: Optional[float]) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "nan"
    return repr(float(value))


def report_to_csv(rows: Iterable[ConvergenceRow]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow([
            _format_float(row.gamma),
            _format_float(row.tau),
            _format_float(row.error_l2),
            row.modes,
            _format_float(row.T),
            row.scheme.value,
            _format_float(row.reference_tau),
        ])
    return buffer.getvalue()


def report_to_json(report: ConvergenceReport) -> str:
    return report.model_dump_json(indent=2)


def write_report(report: ConvergenceReport, path: PathLike, fmt: Union[ReportFormat, str] = ReportFormat.CSV):
    """Convergence report as CSV rows or the full JSON mirror"""

    fmt = ReportFormat(fmt)
    if fmt == ReportFormat.CSV:
        text = report_to_csv(list(report.rows) + list(report.baseline_rows))
    else:
        text = report_to_json(report)
    atomic_write(path, text)
    logger.info("Report written", file=str(path), format=fmt.value, rows=len(report.rows))


def write_loglog_series(report: ConvergenceReport, directory: PathLike) -> List[Path]:
    """One log2_tau,log2_error CSV per gamma and scheme"""

    directory = Path(directory)
    written = []
    groups = {}
    for row in list(report.rows) + list(report.baseline_rows):
        if row.error_l2:
            groups.setdefault((row.scheme.value, row.gamma), []).append(row)

    for (scheme, gamma), rows in sorted(groups.items()):
        lines = ["log2_tau,log2_error"]
        lines += [f"{math.log2(row.tau)!r},{math.log2(row.error_l2)!r}" for row in rows]
        path = directory / f"loglog_{scheme}_gamma_{gamma:g}.csv"
        atomic_write(path, "\n".join(lines) + "\n")
        written.append(path)
    return written


def write_verification_report(records: Iterable[VerificationRecord], path: PathLike):
    payload = [record.model_dump(by_alias=True, exclude_none=True) for record in records]
    atomic_write(path, json.dumps(payload, indent=2))


def write_json(payload, path: PathLike):
    atomic_write(path, json.dumps(payload, indent=2, default=str))


class SnapshotWriter:
    """on_step hook writing numbered field snapshots every n steps"""

    def __init__(self, directory: PathLike, every: int, tau: Optional[float] = None):
        self.directory = Path(directory)
        self.every = max(1, int(every))
        self.tau = tau
        self.written: List[Path] = []

    def __call__(self, n: int, field: SpectralField):
        if n % self.every:
            return
        path = self.directory / f"snapshot_{n:06d}.json"
        write_field(field, path, time=None if self.tau is None else n * self.tau, step=n)
        self.written.append(path)
