"""Exception hierarchy shared across the package.

Everything raised on purpose derives from SpurError so callers can catch
one base class at the CLI boundary and map it to an exit code.
"""


class SpurError(Exception):
    """Base class for all errors raised deliberately by this package."""


class ShapeError(SpurError):
    """Operands have incompatible or unexpected dimensions."""


class InputError(SpurError):
    """Input values are outside an operation's domain (NaN, inf, negatives
    where nonnegative values are required, empty matrices, and so on)."""


class ContractError(SpurError):
    """An internal invariant was violated; indicates a bug, not bad input."""


class ConfigurationError(SpurError):
    """A config file or CLI argument set is malformed or inconsistent."""


class IntegrityError(SpurError):
    """A file being read back (checkpoint, run record) is corrupt or does
    not match its declared format."""


class TrainingAborted(SpurError):
    """Training hit a non-finite loss and stopped early."""
