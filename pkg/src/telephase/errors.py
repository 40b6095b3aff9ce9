"""Exception hierarchy shared by all telephase modules."""


class TelephaseError(Exception):
    pass


class InvalidParameter(TelephaseError, ValueError):
    """A physical parameter is outside its allowed range."""


class DegenerateMeasurement(TelephaseError):
    """Homodyne marginal variance is zero or negative."""


class SensitivityUndefined(TelephaseError):
    """The signal slope vanishes, so sigma = sqrt(var) / |slope| has no finite value."""


class InfeasibleBudget(TelephaseError):
    """Resource photons alone already exceed the probe photon budget."""
