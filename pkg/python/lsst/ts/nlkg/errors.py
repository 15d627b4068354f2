"""Exception hierarchy and the exit codes the command line maps them to."""

__all__ = [
    "NlkgError",
    "ConfigError",
    "DomainTooSmallError",
    "GridMismatchError",
    "NumericalFailure",
    "BlowUpError",
    "HorizonExceededError",
    "ConvergenceError",
    "SpectralError",
    "IllConditionedError",
    "NoPlateauError",
    "AcceptanceFailure",
    "ChecksumError",
    "EXIT_OK",
    "EXIT_UNEXPECTED",
    "EXIT_CONFIG",
    "EXIT_NUMERICAL",
    "EXIT_ACCEPTANCE",
    "exit_code_for",
]

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_ACCEPTANCE = 4


class NlkgError(Exception):
    """Base class of every error raised on purpose by nlkg."""


class ConfigError(NlkgError, ValueError):
    """Invalid configuration, parameters or inputs."""


class DomainTooSmallError(ConfigError):
    """The profile tail at the box edge is above the accepted threshold."""


class GridMismatchError(NlkgError, ValueError):
    """Operands were sampled on different grids."""


class NumericalFailure(NlkgError, RuntimeError):
    """A computation did not produce a trustworthy result."""


class BlowUpError(NumericalFailure):
    """The evolved field left the bounded regime (NaN or runaway growth)."""

    def __init__(self, message: str, t: float) -> None:
        super().__init__(message)
        self.t = t


class HorizonExceededError(NumericalFailure):
    """The step budget ran out before the target time was reached."""


class ConvergenceError(NumericalFailure):
    """An iterative solve hit its cap or diverged."""


class SpectralError(NumericalFailure):
    """Eigen-objects failed their residual or normalization checks."""


class IllConditionedError(NumericalFailure):
    """A Gram or modulation matrix is (numerically) singular."""


class NoPlateauError(NumericalFailure):
    """A rescaled projection series did not settle to a constant."""


class AcceptanceFailure(NlkgError):
    """At least one acceptance criterion failed."""

    def __init__(self, failures: list[str]) -> None:
        super().__init__("Acceptance criteria failed: " + ", ".join(failures))
        self.failures = failures


class ChecksumError(NlkgError):
    """An artifact does not match the checksum recorded in its manifest."""


def exit_code_for(exc: BaseException) -> int:
    # pydantic.ValidationError is a ValueError as well
    if isinstance(exc, (AcceptanceFailure, ChecksumError)):
        return EXIT_ACCEPTANCE
    if isinstance(exc, NumericalFailure):
        return EXIT_NUMERICAL
    if isinstance(exc, (ConfigError, GridMismatchError, ValueError)):
        return EXIT_CONFIG
    return EXIT_UNEXPECTED
