"""
Error handling tests: classification, exit codes and failure summaries
"""

import pytest

from app.services.error_management import (
    CheckFailedError,
    CostGuardError,
    DivergenceError,
    ErrorHandler,
    ErrorSeverity,
    ExitCode,
    GridMismatchError,
    InvalidParameterError,
    PersistenceError,
    UsageError,
)


class TestClassification:
    """Severity and exit code per failure type"""

    @pytest.mark.parametrize("error, severity, exit_code", [
        (CheckFailedError("oracle"), ErrorSeverity.MEDIUM, ExitCode.CHECK_FAILED),
        (UsageError("bad", key="tau"), ErrorSeverity.MEDIUM, ExitCode.USAGE),
        (InvalidParameterError("K"), ErrorSeverity.MEDIUM, ExitCode.USAGE),
        (CostGuardError("too big"), ErrorSeverity.MEDIUM, ExitCode.USAGE),
        (DivergenceError(7), ErrorSeverity.HIGH, ExitCode.RUNTIME),
        (PersistenceError("out.csv", "denied"), ErrorSeverity.HIGH, ExitCode.RUNTIME),
        (GridMismatchError("K"), ErrorSeverity.HIGH, ExitCode.RUNTIME),
        (ValueError("x"), ErrorSeverity.HIGH, ExitCode.RUNTIME),
        (RuntimeError("x"), ErrorSeverity.CRITICAL, ExitCode.RUNTIME),
    ])
    def test_classify(self, error, severity, exit_code):
        event = ErrorHandler().handle_error(error, {"operation": "verify"})
        assert event.severity == severity
        assert event.exit_code == exit_code
        assert event.operation == "verify"
        assert event.error_type == type(error).__name__

    def test_critical_errors_keep_stack_trace(self):
        handler = ErrorHandler()
        try:
            raise RuntimeError("boom")
        except RuntimeError as e:
            event = handler.handle_error(e)
        assert "boom" in event.stack_trace
        assert handler.handle_error(UsageError("bad")).stack_trace is None


class TestMessages:
    """Exception payloads"""

    def test_usage_error_names_key(self):
        error = UsageError("must be strictly decreasing", key="taus")
        assert str(error) == "taus: must be strictly decreasing"
        assert str(UsageError("unrecognized arguments")) == "unrecognized arguments"

    def test_divergence_step(self):
        error = DivergenceError(12)
        assert error.step == 12
        assert "12" in str(error)

    def test_persistence_path(self):
        error = PersistenceError("out.csv", "permission denied")
        assert error.path == "out.csv"
        assert str(error) == "out.csv: permission denied"


class TestFailureSummary:
    """History and machine-readable summaries"""

    def test_empty_summary(self):
        summary = ErrorHandler().failure_summary()
        assert summary["status"] == "ok"
        assert summary["exit_code"] == 0
        assert summary["failures"] == []

    def test_summary_takes_worst_exit_code(self):
        handler = ErrorHandler()
        handler.handle_error(CheckFailedError("symbol_identity"), {"operation": "verify"})
        handler.handle_error(DivergenceError(3), {"operation": "evolve"})

        summary = handler.failure_summary()
        assert summary["status"] == "failed"
        assert summary["exit_code"] == 3
        assert summary["by_severity"]["medium"] == 1
        assert summary["by_severity"]["high"] == 1
        assert [f["operation"] for f in summary["failures"]] == ["verify", "evolve"]

    def test_history_is_bounded(self):
        handler = ErrorHandler(max_error_history=5)
        for step in range(12):
            handler.handle_error(DivergenceError(step))
        assert len(handler.error_history) == 5
        assert handler.error_history[0].error_message == "non-finite field after step 7"

        handler.clear()
        assert handler.error_history == []
