"""Exception hierarchy shared by all gfrkit modules."""


class GfrError(Exception):
    pass


class JpegError(GfrError):
    """Raised while parsing a JPEG stream; ``offset`` is the offending byte position."""

    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)


class ProgressiveUnsupported(JpegError):
    pass


class MultiComponentUnsupported(JpegError):
    pass


class TruncatedStream(JpegError):
    pass


class InvalidMarker(JpegError):
    pass


class HuffmanDecodeError(JpegError):
    pass


class InvalidScale(GfrError, ValueError):
    pass


class IndexOutOfRange(GfrError, IndexError):
    pass


class ImageTooSmall(GfrError, ValueError):
    pass


class EmptySubset(GfrError, ValueError):
    pass


class InvalidPCenter(GfrError, ValueError):
    pass


class NonpositiveSigma(GfrError, ValueError):
    pass


class ShapeMismatch(GfrError, ValueError):
    pass


class MismatchedProvenance(GfrError, ValueError):
    pass


class DimensionMismatch(GfrError, ValueError):
    pass


class DegenerateClass(GfrError, ValueError):
    pass


class SingleClassInput(GfrError, ValueError):
    pass


class LayoutMismatch(GfrError, ValueError):
    pass


class FormatError(GfrError, ValueError):
    """A gfrkit binary file (coefficient dump, feature matrix, model) is malformed."""


class ConfigError(GfrError, ValueError):
    """Inconsistent extraction or run parameters."""
