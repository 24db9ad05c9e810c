"""Exception types shared across the package.

The CLI maps these to distinct exit codes, so raise the most specific one.
"""


class ConfigError(ValueError):
    """Invalid configuration: bad shapes, budgets, or config-file keys."""


class InputError(ValueError):
    """Invalid data handed to an operation (indices, dimensions, files)."""


class SamplingError(InputError):
    """A dataset split cannot supply the requested episode."""


class SizeError(InputError):
    """A computation was refused because it would be combinatorially large."""


class LogicError(RuntimeError):
    """Internal contract violation, e.g. committing the same element twice."""


class NumericError(ArithmeticError):
    """Non-finite loss or gradient; surfaced instead of silently propagating."""
