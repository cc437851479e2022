"""Exception types raised by the toolkit."""


class LedgerError(Exception):
    """Base class for all errors raised by bernoulli_ledger."""


class NonZeroMeanRHS(LedgerError, ValueError):
    """Periodic Poisson problem with a right-hand side of non-zero mean."""


class UnresolvedField(LedgerError, ValueError):
    """Too much energy near the grid cutoff for the results to be trusted."""


class CFLViolation(LedgerError, ValueError):
    """Time step too large for the explicit integrator."""


class GridMismatch(LedgerError, ValueError):
    """Operands live on different grids."""


class InvalidStrip(LedgerError, ValueError):
    """Strip levels are not strictly increasing."""


class MissingFullRange(LedgerError, LookupError):
    """Ledger table lacks the full-range entry."""


class ConfigError(LedgerError, ValueError):
    """Malformed or inconsistent experiment configuration."""
