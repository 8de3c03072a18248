"""
Persistence tests: field files, reports and snapshot hooks
"""

import json
import os

import pytest

from app.models import ConvergenceReport, ConvergenceRow, RowStatus, VerificationRecord
from app.services.error_management import PersistenceError
from app.services.lri_scheme import Scheme
from app.services.persistence import (
    CSV_COLUMNS,
    SnapshotWriter,
    atomic_write,
    read_field,
    write_field,
    write_loglog_series,
    write_report,
    write_verification_report,
)
from app.services.spectral_core import fields_close, grid_new, random_field


def _report(rows, baseline_rows=()):
    return ConvergenceReport(scheme=Scheme.LRI2, modes=16, T=1.0, reference_tau=2.0 ** -10,
                             rows=list(rows), baseline_rows=list(baseline_rows))


def _row(tau, error, gamma=0.4, scheme=Scheme.LRI2, **kwargs):
    return ConvergenceRow(gamma=gamma, tau=tau, error_l2=error, modes=16, T=1.0, scheme=scheme,
                          reference_tau=2.0 ** -10, **kwargs)


class TestFieldFiles:
    """Field snapshots on disk"""

    @pytest.mark.parametrize("real", [True, False])
    def test_round_trip_is_exact(self, tmp_path, rng, real):
        field = random_field(grid_new(8), rng, real=real)
        path = tmp_path / "field.json"
        write_field(field, path, time=0.5, step=4)

        loaded = read_field(path)
        assert fields_close(loaded, field) == 0.0
        assert loaded.real_flag == real

        payload = json.loads(path.read_text())
        assert payload["K"] == 8
        assert payload["time"] == 0.5 and payload["step"] == 4
        assert len(payload["coeffs"]) == 17

    def test_missing_file(self, tmp_path):
        with pytest.raises(PersistenceError):
            read_field(tmp_path / "absent.json")

    def test_invalid_files(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{\"K\": 2, \"coeffs\": [[0, 0]]}")
        with pytest.raises(PersistenceError, match="expected 5"):
            read_field(path)

        path.write_text("not json")
        with pytest.raises(PersistenceError, match="invalid field file"):
            read_field(path)

    def test_atomic_write_failure(self, tmp_path, mocker):
        target = tmp_path / "out.txt"
        mocker.patch("app.services.persistence.os.replace", side_effect=OSError("disk full"))
        with pytest.raises(PersistenceError, match="disk full"):
            atomic_write(target, "data")
        assert not target.exists()
        assert os.listdir(tmp_path) == []


class TestReports:
    """Convergence report files"""

    def test_csv_header_only(self, tmp_path):
        path = tmp_path / "empty.csv"
        write_report(_report([]), path)
        assert path.read_text() == ",".join(CSV_COLUMNS) + "\n"

    def test_csv_rows(self, tmp_path):
        rows = [
            _row(0.25, 0.01),
            _row(0.125, None, status=RowStatus.DIVERGED, diverged_step=3),
        ]
        path = tmp_path / "report.csv"
        write_report(_report(rows, [_row(0.25, 0.02, scheme=Scheme.LRI1)]), path, "csv")

        lines = path.read_text().splitlines()
        assert len(lines) == 4
        assert lines[1].split(",") == ["0.4", "0.25", "0.01", "16", "1.0", "lri2", "0.0009765625"]
        assert lines[2].split(",")[2] == "nan"
        assert lines[3].split(",")[5] == "lri1"

    def test_json_mirror(self, tmp_path):
        path = tmp_path / "report.json"
        write_report(_report([_row(0.25, 0.01)]), path, "json")
        loaded = ConvergenceReport.model_validate_json(path.read_text())
        assert loaded.rows[0].error_l2 == 0.01
        assert loaded.scheme == Scheme.LRI2

    def test_loglog_series(self, tmp_path):
        rows = [_row(0.25, 0.5), _row(0.125, 0.25), _row(0.0625, None, status=RowStatus.DIVERGED)]
        written = write_loglog_series(_report(rows, [_row(0.25, 1.0, scheme=Scheme.LRI1)]), tmp_path)
        assert sorted(p.name for p in written) == ["loglog_lri1_gamma_0.4.csv", "loglog_lri2_gamma_0.4.csv"]
        lines = (tmp_path / "loglog_lri2_gamma_0.4.csv").read_text().splitlines()
        assert lines == ["log2_tau,log2_error", "-2.0,-1.0", "-3.0,-2.0"]

    def test_verification_report_uses_pass_key(self, tmp_path):
        path = tmp_path / "oracle.json"
        write_verification_report([VerificationRecord(test="F_closed_form", K=4, tau=0.1, residual=1e-15,
                                                      passed=True, fields=2)], path)
        payload = json.loads(path.read_text())
        assert payload == [{"test": "F_closed_form", "K": 4, "tau": 0.1, "residual": 1e-15, "pass": True,
                            "fields": 2}]


class TestSnapshotWriter:
    """Numbered snapshot files"""

    def test_every_n_steps(self, tmp_path, two_cos):
        writer = SnapshotWriter(tmp_path / "snaps", every=2, tau=0.25)
        for n in range(1, 6):
            writer(n, two_cos)
        assert [p.name for p in writer.written] == ["snapshot_000002.json", "snapshot_000004.json"]

        payload = json.loads(writer.written[1].read_text())
        assert payload["step"] == 4
        assert payload["time"] == 1.0
