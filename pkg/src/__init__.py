"""
B-link Tree Index - Main Package
"""

__version__ = "1.0.0"
__author__ = "B-link Tree Index Team"
__description__ = "Concurrent persistent B-link tree with three-set node latching"
