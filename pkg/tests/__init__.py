"""
Test package for the B-link tree index.
"""
