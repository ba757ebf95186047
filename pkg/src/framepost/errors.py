"""Exception hierarchy.

Every error raised deliberately by the package derives from
:class:`FramepostError`, so callers (the CLI in particular) can separate
expected failures from programming errors.
"""


class FramepostError(Exception):
    """Base class for all package errors."""


# core model
class SizeMismatchError(FramepostError, ValueError):
    pass


class InvalidReductionError(FramepostError, ValueError):
    pass


class BoundsError(FramepostError, IndexError):
    pass


# frame archives
class FrameArcError(FramepostError):
    """Base class for .faf format problems."""


class NotAFrameArcError(FrameArcError):
    pass


class UnsupportedVersionError(FrameArcError):
    pass


class TruncationError(FrameArcError):
    def __init__(self, path, expected, actual):
        super().__init__(f"{path}: truncated, expected {expected} bytes, found {actual}")
        self.path = path
        self.expected = expected
        self.actual = actual


class CorruptionError(FrameArcError):
    pass


class FormatConstructionError(FrameArcError, ValueError):
    pass


class ManifestInvalidError(FrameArcError):
    pass


class MixedDatasetError(FrameArcError):
    pass


# scheduling / engine
class InvalidWindowError(FramepostError, ValueError):
    pass


class DuplicateRegistrationError(FramepostError):
    pass


class TraceabilityIncompleteError(FramepostError):
    pass


class InvalidSelectorError(FramepostError, ValueError):
    pass


# plot documents
class PlotDocError(FramepostError):
    """Base class for plot document problems."""


class UnknownArgumentError(PlotDocError, TypeError):
    pass


class MissingArgumentError(PlotDocError, TypeError):
    pass


class ArgumentKindError(PlotDocError, TypeError):
    pass


class UnknownPlotTypeError(PlotDocError):
    pass


class DocumentCorruptionError(PlotDocError):
    pass


class ImmutabilityViolationError(PlotDocError):
    pass


class PresentationError(PlotDocError, ValueError):
    pass


class UnknownColormapError(PlotDocError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class DomainError(FramepostError, ValueError):
    pass


class ShapeError(FramepostError, ValueError):
    pass
