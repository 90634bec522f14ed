"""Exception taxonomy shared across the package.

CLI exit-code mapping: ConfigError/GraphError -> 2, NumericalError -> 3,
GateFailure -> 4.
"""


class GraphError(ValueError):
    """Invalid graph construction or subset operation."""


class ConfigError(ValueError):
    """Invalid configuration file or CLI arguments."""


class NumericalError(RuntimeError):
    """A numerical procedure failed (factorization, residual, positivity)."""


class BetaNotInB(NumericalError):
    """H_beta failed the positive-definiteness check at some level."""

    def __init__(self, level):
        super().__init__(f"beta not in B at level {level}")
        self.level = level


class GateFailure(RuntimeError):
    """A statistical acceptance gate rejected in gated mode."""
