"""
Node latching: three independent latch sets per page.
"""

from .latch_manager import LatchKind, LatchTable, is_compatible

__all__ = ['LatchKind', 'LatchTable', 'is_compatible']
