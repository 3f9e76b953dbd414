"""
Exception hierarchy for the B-link tree index.
"""


class BLinkError(Exception):
    """Base class for every error raised by the index"""


class InvalidKeyError(BLinkError, ValueError):
    """Key is empty, too long for the page size, or otherwise unusable"""


class InvalidPageConfigError(BLinkError, ValueError):
    """Page size outside the supported 2^9 .. 2^20 range"""


class CorruptPageError(BLinkError):
    """A page image or the free list violates its invariants"""


class TreeStructureError(CorruptPageError):
    """Tree-level invariant broken (missing parent fence, bad sibling link)"""


class AlreadyDeletedError(BLinkError):
    """Key delete bit set twice on the same slot"""


class KeyOutOfRangeError(BLinkError):
    """Key beyond the fence of the node it was applied to"""


class LatchProtocolError(BLinkError):
    """Latch upgrade, double acquisition or release of a latch not held"""


class IncompatibleFileError(BLinkError):
    """Backing file has a bad magic, version or page size"""


class StorageExhaustedError(BLinkError):
    """The backing store cannot grow any further"""


class PageOutOfRangeError(BLinkError, IndexError):
    """Page number is zero or beyond the highest allocated page"""


class UseAfterFreeError(BLinkError):
    """A page on the free list was read or written as a tree node"""


class LevelOutOfRangeError(BLinkError, ValueError):
    """Requested tree level does not exist"""


class StressTimeoutError(BLinkError):
    """Stress workers failed to finish before the deadline"""


class InterleavingMismatchError(BLinkError, AssertionError):
    """A scripted interleaving step did not behave as expected"""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace or [])
