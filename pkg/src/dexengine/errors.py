"""Exception hierarchy shared across the engine."""


class DexError(Exception):
    """Base class for all data errors raised by the engine."""


class TimelineError(DexError, ValueError):
    pass


class GapError(TimelineError):
    pass


class OverlapError(TimelineError):
    pass


class MergeError(TimelineError):
    """Two adjacent segments carry the same label."""


class RangeError(TimelineError):
    pass


class EmptyInput(DexError, ValueError):
    pass


class LengthMismatch(DexError, ValueError):
    pass


class TrackMismatch(DexError, ValueError):
    pass


class UnknownLabel(DexError, ValueError):
    pass


class ParseError(DexError, ValueError):
    def __init__(self, line_no: int, reason: str, path=None):
        self.line_no = line_no
        self.reason = reason
        self.path = path
        where = f"{path}:{line_no}" if path is not None else f"line {line_no}"
        super().__init__(f"{where}: {reason}")


class DuplicateFrame(ParseError):
    pass


class NonMonotoneFrame(ParseError):
    pass


class MetadataError(DexError, ValueError):
    pass


class DegenerateFit(DexError, ArithmeticError):
    pass


class MissingChannel(DexError, ValueError):
    pass


class MissingTissueRegion(DexError, ValueError):
    pass


class DegenerateSegment(DexError, ValueError):
    pass


class NoHandMatchesTool(DexError, LookupError):
    pass


class InsufficientSample(DexError, ValueError):
    pass


class InsufficientExperts(DexError, ValueError):
    pass
