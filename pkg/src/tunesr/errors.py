"""Exception types shared across the package.

Each operation documents which of these it may raise; everything derives
from TunesrError so callers can catch the package's failures in one place.
"""


class TunesrError(Exception):
    pass


# imaging
class MissingFile(TunesrError):
    pass


class UnsupportedFormat(TunesrError):
    pass


class IoFailure(TunesrError):
    pass


class DegenerateOutput(TunesrError):
    pass


class PatchTooLarge(TunesrError):
    pass


# degradation
class EvenSize(TunesrError):
    pass


class ShapeNotDivisible(TunesrError):
    pass


class EmptyCorpus(TunesrError):
    pass


# nets / losses / diffusion
class ShapeMismatch(TunesrError):
    pass


class RankMismatch(TunesrError):
    pass


class ReversedInterval(TunesrError):
    pass


# training
class NonFiniteGradient(TunesrError):
    pass


class NonFiniteLoss(TunesrError):
    pass


class EmptyData(TunesrError):
    pass


# evaluation
class LengthMismatch(TunesrError):
    pass


class TooSmall(TunesrError):
    pass


class EmptySet(TunesrError):
    pass


# harness
class ParseError(TunesrError):
    pass


class ValidationError(TunesrError):
    pass


class ChecksumMismatch(TunesrError):
    pass


class VersionUnsupported(TunesrError):
    pass


class UnknownSubcommand(TunesrError):
    pass
