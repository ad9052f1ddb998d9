"""Exception hierarchy shared by all modules."""


class ArtifactError(Exception):
    """Base class for every error raised by this package."""


class SingularMatrix(ArtifactError):
    pass


class NotSymmetric(ArtifactError):
    pass


class InvalidParams(ArtifactError):
    pass


class DimensionMismatch(ArtifactError):
    pass


class NotErgodic(ArtifactError):
    pass


class CoverageViolation(ArtifactError):
    pass


class SingularA(SingularMatrix):
    pass


class SingularC(SingularMatrix):
    pass


class NotNegativeDefinite(ArtifactError):
    pass


class TrajectoryTooShort(ArtifactError):
    pass


class InvalidMixing(ArtifactError):
    pass


class InvalidEpsilon(ArtifactError):
    pass


class EmptyInput(ArtifactError):
    pass


class ParseError(ArtifactError):
    pass


class ValidationError(ArtifactError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class IoError(ArtifactError):
    pass
