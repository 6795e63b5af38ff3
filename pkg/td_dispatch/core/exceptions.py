class TDDispatchError(Exception):
    """Base exception for all scheduling-engine errors."""

    pass


class ConfigurationError(TDDispatchError):
    """Exception raised for unknown vehicle types, missing coordinates or bad settings."""

    pass


class MalformedFunctionError(TDDispatchError):
    """Exception raised when a travel-time function cannot be evaluated."""

    pass


class FifoViolationError(MalformedFunctionError):
    """Exception raised when a travel-time function piece has slope below -1."""

    pass


class GraphValidationError(TDDispatchError):
    """Exception raised when a road graph breaks one of its invariants."""

    pass


class InvalidPathError(TDDispatchError):
    """Exception raised when consecutive path vertices are not joined by an arc."""

    pass


class DisconnectedInstanceError(TDDispatchError):
    """Exception raised when two consecutive service vertices have no road path."""

    pass


class IndexOutOfRangeError(TDDispatchError):
    """Exception raised for route positions outside the subtour."""

    pass


class IndicatorUndefinedError(TDDispatchError):
    """Exception raised when check-constraint indicators are requested for an infeasible route."""

    pass


class InstanceValidationError(TDDispatchError):
    """Exception raised when an input file does not match its schema."""

    pass


class ConsistencyError(TDDispatchError):
    """Exception raised when scheduler bookkeeping would become inconsistent."""

    pass


class OracleLimitError(TDDispatchError):
    """Exception raised when an instance is too large for exhaustive enumeration."""

    pass


class LPFormatError(TDDispatchError):
    """Exception raised when an LP document cannot be parsed."""

    pass


class ReportError(TDDispatchError):
    """Exception raised when runs cannot be compared."""

    pass


class DatabaseError(TDDispatchError):
    """Exception raised for run-history database errors."""

    pass


class DatabaseConnectionError(DatabaseError):
    """Custom exception for database connection errors"""

    pass
