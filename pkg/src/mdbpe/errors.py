"""Exception hierarchy shared by all mdbpe modules."""


class MdbpeError(Exception):
    """Base class for all errors raised by this package."""


class GridError(MdbpeError):
    """Invalid grid construction or lookup (bad dims, unknown instance ID, ...)."""


class VocabError(MdbpeError):
    """Invalid vocabulary: out-of-range classes, malformed documents, bad shapes."""


class FormatError(MdbpeError):
    """Malformed binary or JSON container."""


class DecodeError(MdbpeError):
    """Base class for sequence decoding failures."""


class DecodeBoundsError(DecodeError):
    """A token shape would extend past the grid boundary."""


class DecodeOverlapError(DecodeError):
    """A token shape would cover an already-covered cell."""


class DecodeUnderrunError(DecodeError):
    """Tokens ran out before the grid was fully covered."""


class DecodeOverrunError(DecodeError):
    """Tokens remain after the grid is fully covered."""
