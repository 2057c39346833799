"""Exception types shared across the package."""


class LlaPipeError(Exception):
    """Base class for every error raised by this package."""


class MissingTargetColumn(LlaPipeError):
    pass


class EmptyDataset(LlaPipeError):
    pass


class TargetHasMissing(LlaPipeError):
    pass


class DuplicateColumnName(LlaPipeError):
    pass


class SplitTooSmall(LlaPipeError):
    pass


class InapplicableOperator(LlaPipeError):
    """Operator cannot run on this dataset; recoverable (penalty, no crash)."""


class DegenerateOutput(LlaPipeError):
    """An operation would leave the dataset with zero feature columns."""


class SingleClassTrain(LlaPipeError):
    pass


class UnparseableResponse(LlaPipeError):
    """Advisor reply contained no machine-parseable suggestion block."""


class AdvisorUnavailable(LlaPipeError):
    """Remote advisor endpoint unreachable, timed out, or misconfigured."""


class InsufficientData(LlaPipeError):
    pass


class ConfigError(LlaPipeError):
    pass


class CorruptRecord(LlaPipeError):
    """A persisted pool file has a broken line.

    Carries the entries parsed before the failure so callers can keep them.
    """

    def __init__(self, line_number, message, entries=None):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number
        self.entries = list(entries) if entries is not None else []
