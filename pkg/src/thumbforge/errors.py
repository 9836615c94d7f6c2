"""Exception hierarchy shared by every stage.

Anything deriving from ``ThumbforgeError`` is a data error (CLI exit code 2).
"""


class ThumbforgeError(Exception):
    pass


class MalformedHeader(ThumbforgeError):
    pass


class UnsupportedColorspace(ThumbforgeError):
    pass


class TruncatedFrame(ThumbforgeError):
    pass


class MalformedFrameMarker(ThumbforgeError):
    pass


class FrameTooSmall(ThumbforgeError):
    pass


class DimensionMismatch(ThumbforgeError, ValueError):
    pass


class AllFramesFiltered(ThumbforgeError):
    pass


class EmptyInput(ThumbforgeError, ValueError):
    pass


class KTooLarge(ThumbforgeError, ValueError):
    pass


class EmptyCorpus(ThumbforgeError):
    pass


class EmptyTrainingSet(ThumbforgeError):
    pass


class ModelMissing(ThumbforgeError):
    pass


class ModelFormatError(ThumbforgeError):
    pass


class BadMagic(ModelFormatError):
    pass


class VersionMismatch(ModelFormatError):
    pass


class CorruptNode(ModelFormatError):
    pass


class EmptyStream(ThumbforgeError):
    pass


class MatcherUnavailable(ThumbforgeError):
    pass


class ManifestError(ThumbforgeError):
    pass


class NoComparisonFrames(ThumbforgeError):
    pass


class NonConvergence(UserWarning):
    """Solver hit its iteration cap before meeting the loose tolerance."""


class TooFewSamples(UserWarning):
    """Fewer samples than the classic 5-per-bin rule for chi-square tests."""
