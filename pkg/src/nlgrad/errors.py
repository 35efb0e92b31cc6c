class DomainError(ValueError):
    """An argument lies outside the set where the operation is defined."""


class ResolutionError(ValueError):
    """The grid is too coarse for the requested scale (e.g. a witness radius below 3h)."""


class ConfigurationError(ValueError):
    """Inconsistent problem or experiment description."""


class NumericalError(RuntimeError):
    """An iteration did not converge; carries the best iterate and its certificate."""

    def __init__(self, message, best=None, certificate=None):
        super().__init__(message)
        self.best = best
        self.certificate = certificate
