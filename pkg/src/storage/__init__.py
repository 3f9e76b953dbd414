"""
Page storage for the B-link tree: node layout and the paged backing store.
"""

from .page_format import Node, PageConfig, Slot, SlotOutcome, STOPPER
from .page_store import FileHeader, PageStore

__all__ = ['Node', 'PageConfig', 'Slot', 'SlotOutcome', 'STOPPER', 'FileHeader', 'PageStore']
