"""Exception hierarchy shared across the package.

The CLI maps these onto stable exit codes (see ``mmo.cli``).
"""


class MmoError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(MmoError):
    """Invalid configuration value or flag combination."""


class UnknownPresetError(ConfigError):
    """Metric preset name not recognized."""


class ShapeError(MmoError):
    """Mismatched dimensions between coefficient tables, labels, or features."""


class DataError(MmoError):
    """Problems with input data files or distributions."""


class FormatError(DataError):
    """Malformed text input; carries the offending 1-based line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DegenerateDenominatorError(MmoError):
    """A required metric denominator is <= 0.

    ``scope`` is one of ``"micro"``, ``"label"``, ``"instance"`` and ``index``
    identifies the offending label or instance where applicable.
    """

    def __init__(self, scope, index=None):
        self.scope = scope
        self.index = index
        where = scope if index is None else f"{scope} {index}"
        super().__init__(f"metric denominator <= 0 ({where})")


class EnumerationScaleError(MmoError):
    """Exhaustive classifier enumeration would exceed the configured guard."""


class OracleScaleError(MmoError):
    """Brute-force surrogate evaluation requested beyond its label-count guard."""


class OverflowGuardError(MmoError):
    """Raw normalization or exact weight offsets requested at a label count
    where the 2^l / 4^(l-1) factors are no longer representable sensibly."""


class DivergenceError(MmoError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch, batch):
        self.epoch = epoch
        self.batch = batch
        super().__init__(f"non-finite training loss at epoch {epoch}, batch {batch}")


class NoValidCandidateError(MmoError):
    """Every grid candidate was degenerate on the validation set."""
