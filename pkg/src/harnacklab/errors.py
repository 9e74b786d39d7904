"""Exception hierarchy shared by all harnacklab modules."""


class HarnackLabError(Exception):
    """Base class for every error raised by harnacklab."""


class GridError(HarnackLabError):
    pass


class FieldFormatError(HarnackLabError):
    """Malformed FLD1 file (bad magic, bad header, size mismatch, non-finite data)."""


class EmptyDomainError(HarnackLabError):
    pass


class EstimationError(HarnackLabError):
    """A hypothesis estimator has no admissible sample at this resolution."""


class SolverError(HarnackLabError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ChainError(HarnackLabError):
    def __init__(self, message, ratio=None):
        super().__init__(message)
        self.ratio = ratio


class AcfError(HarnackLabError):
    pass


class BhiError(HarnackLabError):
    pass


class IncomparableError(BhiError):
    """Exactly one of u(P), v(P) vanishes: the pair cannot be normalized."""


class FreeBoundaryError(HarnackLabError):
    pass


class ConfigError(HarnackLabError):
    pass
