"""Exception and warning types raised by spdefind."""


class SpdeFindError(Exception):
    """Base class for all spdefind errors."""


class ConfigError(SpdeFindError, ValueError):
    """Malformed or inconsistent experiment configuration."""

    def __init__(self, message, line=None, key=None):
        self.message = message
        self.line = line
        self.key = key
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key {key!r}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


class NumericalError(SpdeFindError, ArithmeticError):
    """Base class for numerical failures (exit code 3 from the CLI)."""


class LinearSolveFailure(NumericalError):
    pass


class BlowUp(NumericalError):
    """A simulated state exceeded the magnitude bound; the time step is likely unstable."""


class NonFinite(NumericalError):
    pass


class SingularPrecision(NumericalError):
    """The K x K variational precision could not be factorized even with jitter."""


class UnsupportedOrder(SpdeFindError, ValueError):
    pass


class TooLarge(SpdeFindError, ValueError):
    pass


class ZeroTruth(SpdeFindError, ValueError):
    pass


class NegativeVariance(NumericalError):
    pass


class MissingTruth(SpdeFindError, ValueError):
    pass


class FileFormatError(SpdeFindError, OSError):
    pass


class NoConvergenceWarning(UserWarning):
    """VB reached ``max_iters`` before the ELBO change fell below tolerance."""


class RankDeficientWarning(UserWarning):
    """STLSQ hit a rank-deficient least-squares problem and used the minimum-norm solution."""
