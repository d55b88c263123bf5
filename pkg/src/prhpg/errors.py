"""Exception hierarchy shared by all modules."""


class PRHPGError(Exception):
    """Base class for numerical errors raised by the library."""


class DomainError(PRHPGError, ValueError):
    """A scheduling parameter lies outside the parameter box."""


class DegenerateBasisError(PRHPGError):
    """Weighting functions are not linearly independent (Gram matrix not PD)."""


class ConstructionError(PRHPGError):
    """TP model transformation could not produce valid SNNN weights."""


class DegenerateStageError(PRHPGError):
    """Stage Hessian is not positive definite."""

    def __init__(self, msg, stage=None):
        if stage is not None:
            msg = f"stage {stage}: {msg}"
        super().__init__(msg)
        self.stage = stage


class NumericalConsistencyError(PRHPGError):
    """A matrix that must be PSD/PD came out indefinite beyond tolerance."""


class UnstableError(PRHPGError):
    """A closed loop has spectral radius >= 1 where stability is required."""

    def __init__(self, msg, index=None):
        super().__init__(msg)
        self.index = index


class UnstabilizableError(PRHPGError):
    """Riccati iteration diverged, so the pair is taken to be unstabilizable."""

    def __init__(self, msg, index=None):
        super().__init__(msg)
        self.index = index


class ConfigError(ValueError):
    """Run configuration failed validation. ``key`` points at the offending entry."""

    def __init__(self, msg, key=""):
        super().__init__(f"{key}: {msg}" if key else msg)
        self.msg = msg
        self.key = key
