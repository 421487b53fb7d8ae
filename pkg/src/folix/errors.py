"""Exception types shared across the package."""


class FolixError(Exception):
    """Base class for all folix errors."""


class NonPositiveMetric(FolixError):
    """Metric fails positive-definiteness at some grid node."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class GridMismatch(FolixError):
    """Operands live on incompatible grids."""


class ZeroCovector(FolixError):
    """Covector with vanishing metric norm; the unit-speed flow is undefined there."""


class ZeroMomentum(FolixError):
    """Transverse momentum p_v = 0 is excluded from the restricted/reduced flows."""


class NotBundleLike(FolixError):
    """Operation requires a bundle-like certificate that is absent or negative."""


class SupportOverflow(FolixError):
    """Combined leafwise support exceeds the representable window."""


class CharacteristicEscape(FolixError):
    """A transport characteristic left the leafwise displacement grid."""


class SupportViolation(FolixError):
    """Transverse cutoff radius violates R < 1/2."""


class QuadratureUnderresolved(FolixError):
    """Refining the frequency quadrature still changes results beyond tolerance."""


class AliasingDetected(FolixError):
    """Doubling the assembly grid changes spectral data beyond tolerance."""


class EigSolverFailure(FolixError):
    """Dense Hermitian eigensolver did not converge."""


class BandUnresolved(FolixError):
    """Requested frequency band is not resolved by the operator grid."""


class UnknownArtifact(FolixError):
    """Plot-data export requested for an artifact kind that does not exist."""


class ConfigError(FolixError):
    """Scenario configuration failed validation."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field
