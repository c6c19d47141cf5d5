"""Exception types raised across the package."""


class EgogestError(Exception):
    """Base class for all package errors."""


class NonPositiveDepth(EgogestError):
    """Plane depth must be strictly positive."""


class DegenerateConfiguration(EgogestError):
    """Point configuration or matrix is rank-deficient beyond tolerance."""


class PointAtInfinity(EgogestError):
    """Projective division by a vanishing homogeneous coordinate."""


class LayoutMismatch(EgogestError):
    """Feature layouts disagree where they must match."""


class DecompositionFailure(EgogestError):
    """Homography is too far from the assumed motion model."""


class ShapeMismatch(EgogestError):
    """Array shapes disagree with the declared model dimensions."""


class LabelOutOfRange(EgogestError):
    """A class label is outside [0, N)."""


class StaleCache(EgogestError):
    """Backward pass received a cache from a non-matching forward."""


class SequenceTooShort(EgogestError):
    """Sequence has fewer frames than one snippet."""


class InsufficientClassMembers(EgogestError):
    """A class has too few snippets to split."""


class IncompatibleRate(EgogestError):
    """Target frame rate does not divide the source rate."""


class UnknownVersion(EgogestError):
    """File declares a format version this build does not understand."""


class VersionMismatch(UnknownVersion):
    """Checkpoint format version is not supported."""


class MalformedRecord(EgogestError):
    """A serialized record failed to parse."""


class LengthMismatch(EgogestError):
    """Paired per-frame arrays have different lengths."""


class TrainingDiverged(EgogestError):
    """Loss became non-finite during training."""
