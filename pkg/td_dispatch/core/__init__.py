from td_dispatch.core.app import DispatchApp
from td_dispatch.core.base_command import BaseCommand
from td_dispatch.core.db import Base, Database
from td_dispatch.core.exceptions import (
    ConfigurationError,
    ConsistencyError,
    DatabaseConnectionError,
    DatabaseError,
    DisconnectedInstanceError,
    FifoViolationError,
    GraphValidationError,
    IndexOutOfRangeError,
    IndicatorUndefinedError,
    InstanceValidationError,
    InvalidPathError,
    LPFormatError,
    MalformedFunctionError,
    OracleLimitError,
    ReportError,
    TDDispatchError,
)

__all__ = [
    'Base',
    'BaseCommand',
    'Database',
    'DispatchApp',
    'TDDispatchError',
    'ConfigurationError',
    'ConsistencyError',
    'DatabaseError',
    'DatabaseConnectionError',
    'DisconnectedInstanceError',
    'FifoViolationError',
    'GraphValidationError',
    'IndexOutOfRangeError',
    'IndicatorUndefinedError',
    'InstanceValidationError',
    'InvalidPathError',
    'LPFormatError',
    'MalformedFunctionError',
    'OracleLimitError',
    'ReportError',
]
