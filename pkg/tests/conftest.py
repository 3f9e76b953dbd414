"""
Shared fixtures: small-page trees so a few hundred keys build several levels.
"""

import os
import sys

import pytest

# Add project root to path
project_root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.append(project_root)

from config.runtime import TreeConfig
from src.index.blink_tree import BLinkTree
from src.storage.page_format import PageConfig

SMALL_PAGE_BITS = 9


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full-size runs, enabled with BLINK_SLOW_TESTS=1")


def key(i: int) -> bytes:
    """Seven-byte keys: 'k' plus six digits"""
    return f"k{i:06d}".encode()


@pytest.fixture
def small_cfg():
    return PageConfig(SMALL_PAGE_BITS)


@pytest.fixture
def tree_config():
    return TreeConfig(page_bits=SMALL_PAGE_BITS, debug_checks=True, record_latch_events=True,
                      cache_capacity=256)


@pytest.fixture
def tree(tree_config):
    """In-memory tree with 512-byte pages and protocol assertions on"""
    handle = BLinkTree.open_or_create(None, tree_config)
    yield handle
    handle.close()


@pytest.fixture
def mitigated_tree(tree_config):
    handle = BLinkTree.open_or_create(None, tree_config.with_overrides(access_intent_enabled=False))
    yield handle
    handle.close()


@pytest.fixture
def tree_path(tmp_path):
    return str(tmp_path / "tree.db")
