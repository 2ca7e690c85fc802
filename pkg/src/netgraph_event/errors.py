"""Exception hierarchy shared across the toolkit.

Each family maps onto one CLI exit code (see ``netgraph_event.cli``).
"""


class ConfigError(ValueError):
    """Invalid or infeasible configuration."""


class DataError(ValueError):
    """Malformed, empty or inconsistent input data."""


class SchemaError(DataError):
    """Records disagree on the number of attributes."""


class EmptyInputError(DataError):
    """No records were supplied."""


class SplitError(DataError):
    """Too few labeled samples to build stratified splits."""


class CheckpointError(DataError):
    """Checkpoint is unreadable or does not match the data it is applied to."""


class TrainingDivergence(RuntimeError):
    """Loss became non-finite during optimization."""
