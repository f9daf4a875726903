"""Exception and warning classes shared across the package."""


class Ocean3dError(Exception):
    """Base class for every error raised by ocean3d."""


class PolarRow(Ocean3dError):
    pass


class DegenerateGrid(Ocean3dError):
    pass


class OutOfDomain(Ocean3dError):
    pass


class SpecMismatch(Ocean3dError):
    pass


class NonPositiveLead(Ocean3dError):
    pass


class EmptyMask(Ocean3dError):
    pass


class EmptyManifest(Ocean3dError):
    pass


class IoFailure(Ocean3dError):
    pass


class FormatViolation(Ocean3dError):
    pass


class TruncatedPayload(FormatViolation):
    pass


class BadBoundary(Ocean3dError):
    pass


class CflViolation(Ocean3dError):
    pass


class ConfigIncompatible(Ocean3dError):
    pass


class NonFiniteActivation(Ocean3dError):
    pass


class NonFiniteGradient(Ocean3dError):
    pass


class Divergence(Ocean3dError):
    def __init__(self, epoch, stage, message=None):
        self.epoch = epoch
        self.stage = stage
        super().__init__(message or f"loss became non-finite at epoch {epoch} (stage {stage})")


class BadHorizon(Ocean3dError):
    pass


class MissingForcing(Ocean3dError):
    def __init__(self, day, message=None):
        self.day = day
        super().__init__(message or f"no forcing available for day {day}")


class MissingInputDay(Ocean3dError):
    def __init__(self, day, message=None):
        self.day = day
        super().__init__(message or f"input day {day} not available")


class InsufficientData(Ocean3dError):
    pass


class PairMismatch(Ocean3dError):
    pass


class ZeroAnomalyVariance(Ocean3dError):
    pass


class TooFewSnapshots(Ocean3dError):
    pass


class NoValidStencil(Ocean3dError):
    pass


class ConfigError(Ocean3dError):
    """Invalid run configuration (maps to CLI exit code 2)."""


class DegenerateVariance(UserWarning):
    """A (variable, depth) slice had zero spread; its std was clamped to 1."""
