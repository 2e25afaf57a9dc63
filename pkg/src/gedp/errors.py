"""Exception hierarchy for the gedp package.

All library errors derive from :class:`GedpError` so callers (and the CLI)
can distinguish framework failures from programming errors.
"""


class GedpError(Exception):
    """Base class for all errors raised by this package."""


class InputError(GedpError, ValueError):
    """Invalid argument, schema violation, or malformed input data."""


class LoadError(InputError):
    """A data file failed to parse; the message names the offending row."""


class MalformedFunctionError(GedpError):
    """A neighbor function produced NaN or infinity on the checked grid."""


class InvalidFunctionError(GedpError):
    """A mechanism refused to run because its neighbor function is invalid.

    Raised instead of silently proceeding: the confidentiality guarantee of
    the transformed-space mechanisms holds only for valid neighbor functions.
    """


class BudgetError(GedpError):
    """A registration would exceed the declared total privacy-loss budget."""


class SolverError(GedpError):
    """The reconstruction solver failed to converge; carries diagnostics."""
