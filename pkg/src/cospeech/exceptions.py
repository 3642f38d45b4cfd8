"""Exception and warning classes raised across the package."""


class CoSpeechError(Exception):
    """Base class for all package errors."""


class ShapeMismatch(CoSpeechError, ValueError):
    pass


class DegenerateConfiguration(CoSpeechError, ValueError):
    """Point configuration has too low rank for a unique rigid fit."""

    def __init__(self, message, frame_index=None):
        if frame_index is not None:
            message = f"{message} (frame {frame_index})"
        super().__init__(message)
        self.frame_index = frame_index


class TooShort(CoSpeechError, ValueError):
    pass


class TooShortAudio(TooShort):
    pass


class ZeroBone(CoSpeechError, ValueError):
    def __init__(self, frame, bone):
        super().__init__(f"zero-length bone {bone} at frame {frame}")
        self.frame = frame
        self.bone = bone


class DegenerateExtent(CoSpeechError, ValueError):
    pass


class EmptyComponent(CoSpeechError, ValueError):
    pass


class NotOneHot(CoSpeechError, ValueError):
    pass


class DomainError(CoSpeechError, ValueError):
    pass


class SameSpeaker(CoSpeechError, ValueError):
    pass


class EmptyCorpus(CoSpeechError, ValueError):
    pass


class EmptySplit(CoSpeechError, ValueError):
    pass


class NonPsd(CoSpeechError, ValueError):
    pass


class IndexOverlap(CoSpeechError, ValueError):
    pass


class CheckpointMismatch(CoSpeechError, ValueError):
    pass


class ConfigError(CoSpeechError, ValueError):
    pass


class SingularCovarianceWarning(UserWarning):
    """Too few samples for a full-rank covariance; shrinkage is used instead."""


class AmbiguousTwistWarning(UserWarning):
    """A bone points opposite to its rest direction; the rotation axis is a guess."""


class ZeroVectorWarning(UserWarning):
    pass
