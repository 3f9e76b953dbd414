"""
The concurrent B-link tree.
"""

from .blink_tree import BLinkTree, DeleteOutcome, LatchedNode, Mode, TreeStats

__all__ = ['BLinkTree', 'DeleteOutcome', 'LatchedNode', 'Mode', 'TreeStats']
