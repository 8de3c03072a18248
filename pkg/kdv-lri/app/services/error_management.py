"""
Error Management - exception hierarchy and centralized failure handling
Classifies failures into severities and exit codes, keeps a bounded history and renders failure summaries
"""

import time
import traceback
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple, Type

import structlog

logger = structlog.get_logger(__name__)


class KdVError(Exception):
    """Base class for every failure raised by the toolkit"""


class InvalidParameterError(KdVError):
    """A numeric parameter is outside its admissible range"""


class GridMismatchError(KdVError):
    """Operands live on different grids"""


class PreconditionError(KdVError):
    """An operation precondition does not hold (zero mean, step divisibility, ...)"""


class NonFiniteFieldError(KdVError):
    """A field carries NaN or infinite coefficients"""


class DivergenceError(KdVError):
    """Time stepping produced a non-finite field"""

    def __init__(self, step: int, message: Optional[str] = None):
        self.step = step
        super().__init__(message or f"non-finite field after step {step}")


class CostGuardError(KdVError):
    """A brute-force computation was requested above its size limit"""


class InsufficientRowsError(KdVError):
    """Too few usable rows to fit an order"""


class UsageError(KdVError):
    """Invalid command line or config file input"""

    def __init__(self, message: str, key: Optional[str] = None):
        self.key = key
        super().__init__(message if key is None else f"{key}: {message}")


class PersistenceError(KdVError):
    """Reading or writing a file failed"""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


class CheckFailedError(KdVError):
    """A verification check ran to completion and did not pass"""


class ErrorSeverity(str, Enum):
    """Error severity levels"""
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"
    CRITICAL = "critical"


class ExitCode(int, Enum):
    """Process exit codes"""
    OK = 0
    CHECK_FAILED = 1
    USAGE = 2
    RUNTIME = 3


@dataclass
class ErrorEvent:
    """Represents an error event"""
    timestamp: float
    error_type: str
    error_message: str
    operation: str
    severity: ErrorSeverity
    exit_code: ExitCode
    context: Dict[str, Any] = field(default_factory=dict)
    stack_trace: Optional[str] = None


# First matching entry wins, so subclasses go before their bases
_CLASSIFICATION: List[Tuple[Type[BaseException], ErrorSeverity, ExitCode]] = [
    (CheckFailedError, ErrorSeverity.MEDIUM, ExitCode.CHECK_FAILED),
    (UsageError, ErrorSeverity.MEDIUM, ExitCode.USAGE),
    (InvalidParameterError, ErrorSeverity.MEDIUM, ExitCode.USAGE),
    (CostGuardError, ErrorSeverity.MEDIUM, ExitCode.USAGE),
    (DivergenceError, ErrorSeverity.HIGH, ExitCode.RUNTIME),
    (PersistenceError, ErrorSeverity.HIGH, ExitCode.RUNTIME),
    (KdVError, ErrorSeverity.HIGH, ExitCode.RUNTIME),
]


class ErrorHandler:
    """Centralized error handling with categorization"""

    def __init__(self, max_error_history: int = 1000):
        self.error_history: List[ErrorEvent] = []
        self.max_error_history = max_error_history

    def handle_error(self, error: BaseException, context: Optional[Dict[str, Any]] = None) -> ErrorEvent:
        """Handle and categorize an error"""

        context = context or {}
        severity, exit_code = self._classify_error(error)

        error_event = ErrorEvent(
            timestamp=time.time(),
            error_type=type(error).__name__,
            error_message=str(error),
            operation=context.get("operation", "unknown"),
            severity=severity,
            exit_code=exit_code,
            context=context,
            stack_trace=traceback.format_exc() if severity == ErrorSeverity.CRITICAL else None,
        )

        self._record_error(error_event)

        logger.log(self._get_log_level(severity), "Error handled",
                   error_type=error_event.error_type,
                   severity=severity.value,
                   exit_code=int(exit_code),
                   operation=error_event.operation,
                   error=error_event.error_message)

        return error_event

    def _classify_error(self, error: BaseException) -> Tuple[ErrorSeverity, ExitCode]:
        """Classify error by type"""

        for error_type, severity, exit_code in _CLASSIFICATION:
            if isinstance(error, error_type):
                return severity, exit_code

        if isinstance(error, (ValueError, TypeError)):
            return ErrorSeverity.HIGH, ExitCode.RUNTIME

        return ErrorSeverity.CRITICAL, ExitCode.RUNTIME

    def _record_error(self, error_event: ErrorEvent):
        """Record error in history"""

        self.error_history.append(error_event)

        if len(self.error_history) > self.max_error_history:
            self.error_history = self.error_history[-self.max_error_history:]

    def _get_log_level(self, severity: ErrorSeverity) -> int:
        """Map severity to stdlib log level"""

        severity_mapping = {
            ErrorSeverity.LOW: 20,
            ErrorSeverity.MEDIUM: 30,
            ErrorSeverity.HIGH: 40,
            ErrorSeverity.CRITICAL: 50,
        }

        return severity_mapping.get(severity, 40)

    def failure_summary(self, events: Optional[List[ErrorEvent]] = None) -> Dict[str, Any]:
        """Machine-readable summary of recorded failures"""

        events = self.error_history if events is None else events
        exit_code = max((e.exit_code for e in events), default=ExitCode.OK)

        severity_counts = {}
        for severity in ErrorSeverity:
            severity_counts[severity.value] = len([e for e in events if e.severity == severity])

        return {
            "status": "ok" if not events else "failed",
            "exit_code": int(exit_code),
            "by_severity": severity_counts,
            "failures": [
                {
                    "type": e.error_type,
                    "message": e.error_message,
                    "operation": e.operation,
                    "severity": e.severity.value,
                    "exit_code": int(e.exit_code),
                }
                for e in events
            ],
        }

    def clear(self):
        self.error_history = []


# Global error handler instance
error_handler = ErrorHandler()
