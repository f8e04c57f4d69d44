"""Exception taxonomy shared by all phaseflow modules.

Each class maps to a distinct CLI exit code so shell pipelines can tell
configuration mistakes from numeric blow-ups from labeling failures.
"""


class PhaseflowError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ConfigError(PhaseflowError):
    """Invalid configuration or command-line usage."""

    exit_code = 2


class IoError(PhaseflowError):
    """Unreadable input or unwritable output artifact."""

    exit_code = 3


class DimensionError(PhaseflowError):
    """Array shapes do not chain; message names the offending layer/field."""

    exit_code = 2


class ContractError(PhaseflowError):
    """A documented precondition was violated by the caller."""

    exit_code = 2


class NumericError(PhaseflowError):
    """Non-finite value encountered mid-computation."""

    exit_code = 4


class GenerationError(PhaseflowError):
    """Scripted demonstration failed to converge within its step cap."""

    exit_code = 4


class ScheduleFormatError(PhaseflowError):
    """Segmentation output could not be parsed as a schedule."""

    exit_code = 5
