"""Exception types shared across the package."""


class ZdqError(Exception):
    """Base class for all package errors."""


class NonFinite(ZdqError):
    """An input array contains NaN or infinite entries."""


class UnstableSource(ZdqError):
    """The source matrix has maximum squared singular value >= 1."""


class BadCovariance(ZdqError):
    """Noise covariance is not symmetric positive definite (or wrong shape)."""


class ImpossibleSymbol(ZdqError):
    """A received symbol's cell carries less belief mass than the floor.

    In a correctly wired closed loop this signals encoder/decoder desync or a
    belief particle cloud too coarse to cover the visited cell.
    """


class BudgetExceeded(ZdqError):
    """A size cap was hit (exact-OT support budget, cover cap, ...)."""


class EmptyBeliefs(ZdqError):
    """An operation requiring at least one belief got an empty list."""


class NotConverged(ZdqError):
    """Value iteration stopped at max_iter above the residual target."""


class ModelMismatch(ZdqError):
    """Policy file was designed for a different source model."""


class ConfigError(ZdqError):
    """Experiment configuration is missing keys or out of range."""
