"""Exception types shared across the package.

The CLI maps these onto its stable exit codes: config/format/shape problems
are input errors (exit 2), divergence is exit 1, anything else exit 3.
"""


class ShapeError(ValueError):
    """Operands have incompatible dimensions."""


class CorruptSwitchError(ValueError):
    """A pooling switch entry lies outside its window."""


class FormatError(ValueError):
    """A dataset or checkpoint file does not match its binary layout."""


class ConfigError(ValueError):
    """An experiment config file is malformed or references bad paths."""


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss, gradient or parameter."""


class NoViableRateError(RuntimeError):
    """Every candidate learning rate diverged during probing."""
