"""Exception and warning types shared across the package."""


class NanofiberError(Exception):
    """Base class for numerical failures raised by this package."""


class NoGuidedMode(NanofiberError):
    """The dispersion relation has no root inside the guidance band."""


class QuadratureFailure(NanofiberError):
    """An adaptive integral did not reach its requested tolerance."""


class DegenerateGeometry(NanofiberError):
    """Source and field points coincide where the expression is singular."""


class ResonanceError(NanofiberError):
    """A probe detuning falls inside the dispersive-regime guard band."""


class RootNotFound(NanofiberError):
    """No sign change was found in a root-search window."""


class StepTooLarge(NanofiberError):
    """The moment integrator kept failing after repeated step halving."""


class MultiModeWarning(UserWarning):
    """The fiber also guides modes above HE11 at this wavelength."""
