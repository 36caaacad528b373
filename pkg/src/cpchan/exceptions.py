"""Error types used across the package.

The command line tool maps these onto exit codes: configuration problems
exit with 2, numerical failures with 3.
"""


class ConfigError(ValueError):
    """A configuration file or argument set is invalid or inconsistent."""


class CapabilityError(RuntimeError):
    """A request exceeds what an implementation is willing to compute."""


class NumericalError(RuntimeError):
    """A computation produced results too ill-conditioned to trust."""
