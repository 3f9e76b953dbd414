#!/usr/bin/env python3
"""
Tests for the page store: file header, allocator, free list and cache
"""

import pytest

from src.concurrency.latch_manager import LatchTable, RL, WL
from src.errors import (
    CorruptPageError,
    IncompatibleFileError,
    LatchProtocolError,
    PageOutOfRangeError,
    StorageExhaustedError,
    UseAfterFreeError,
)
from src.index.blink_tree import BLinkTree
from src.storage.page_format import Node, PageConfig, deserialize, serialize
from src.storage.page_store import ROOT_PAGE, PageStore
from tests.conftest import key


@pytest.fixture
def store(small_cfg):
    return PageStore.open_or_create(None, small_cfg)


@pytest.fixture
def checked_store(small_cfg):
    return PageStore.open_or_create(None, small_cfg, LatchTable(), debug_checks=True)


class TestCreateAndOpen:
    """Header handling"""

    def test_new_store_has_empty_root(self, store, small_cfg):
        """A new store holds the header page and an empty leaf root"""
        assert store.header.top_page == ROOT_PAGE
        assert store.header.free_head == 0
        root = deserialize(store.peek_page(ROOT_PAGE), small_cfg)
        assert root.level == 0
        assert root.is_empty() and root.is_rightmost

    def test_reopen_keeps_header_and_free_list(self, tmp_path, small_cfg):
        """Top page, page size and free chain survive close and reopen"""
        path = str(tmp_path / "pages.db")
        store = PageStore.open_or_create(path, small_cfg)
        for _ in range(3):
            store.alloc_page()
        store.free_page(3)
        store.close()

        reopened = PageStore.open_or_create(path)
        assert reopened.page_size == 512
        assert reopened.header.top_page == 4
        assert reopened.free_pages() == [3]
        assert reopened.is_free(3)
        reopened.close()

    def test_page_bits_mismatch(self, tmp_path, small_cfg):
        """Opening with a different page size is refused"""
        path = str(tmp_path / "pages.db")
        PageStore.open_or_create(path, small_cfg).close()
        with pytest.raises(IncompatibleFileError):
            PageStore.open_or_create(path, PageConfig(12))

    def test_bad_magic(self, tmp_path):
        """A file that is not a tree file is refused"""
        path = tmp_path / "junk.db"
        path.write_bytes(b'not a tree file at all' * 40)
        with pytest.raises(IncompatibleFileError):
            PageStore.open_or_create(str(path))

    def test_snapshot_covers_every_page(self, store):
        """The store image spans header through top page"""
        store.alloc_page()
        assert len(store.snapshot()) == 3 * store.page_size


class TestAllocator:
    """Allocation, free list and range checks"""

    def test_alloc_extends_then_reuses(self, store):
        """Fresh pages come from the end until the free list has something"""
        assert store.alloc_page() == 2
        assert store.alloc_page() == 3
        store.free_page(2)
        assert store.is_free(2)
        assert store.free_count() == 1
        assert store.alloc_page() == 2
        assert not store.is_free(2)
        assert store.alloc_page() == 4

    def test_free_list_is_lifo(self, store):
        """The most recently freed page heads the chain"""
        for _ in range(3):
            store.alloc_page()
        store.free_page(2)
        store.free_page(4)
        assert store.free_pages() == [4, 2]
        assert store.alloc_page() == 4

    def test_allocated_page_is_zeroed(self, store, small_cfg):
        """A reused page does not carry its free-list link"""
        page = store.alloc_page()
        store.write_page(page, serialize(Node.empty_leaf(small_cfg), small_cfg), fresh=True)
        store.free_page(page)
        assert store.alloc_page() == page
        assert store.peek_page(page) == bytes(store.page_size)

    def test_root_cannot_be_freed(self, store):
        """Page 1 is never released"""
        with pytest.raises(CorruptPageError):
            store.free_page(ROOT_PAGE)

    def test_double_free(self, store):
        """Freeing a page twice is corruption"""
        page = store.alloc_page()
        store.free_page(page)
        with pytest.raises(CorruptPageError):
            store.free_page(page)

    @pytest.mark.parametrize("page", [0, 2, 99])
    def test_out_of_range(self, store, page):
        """Pages outside [1, top] are rejected"""
        with pytest.raises(PageOutOfRangeError):
            store.peek_page(page)

    def test_max_pages(self, small_cfg):
        """A bounded store raises once it is full"""
        bounded = PageStore.open_or_create(None, small_cfg, max_pages=3)
        assert bounded.alloc_page() == 2
        with pytest.raises(StorageExhaustedError):
            bounded.alloc_page()

    def test_write_wrong_size(self, store):
        """Images must be exactly one page"""
        with pytest.raises(CorruptPageError):
            store.write_page(ROOT_PAGE, b'short', fresh=True)


class TestDebugChecks:
    """Latch and liveness assertions"""

    def test_read_needs_a_latch(self, checked_store):
        """Reads require RL or WL on the page"""
        with pytest.raises(LatchProtocolError):
            checked_store.read_page(ROOT_PAGE)
        with checked_store.latches.latched(ROOT_PAGE, RL):
            assert len(checked_store.read_page(ROOT_PAGE)) == checked_store.page_size

    def test_write_needs_write_lock(self, checked_store):
        """Writes to reachable pages require WL; fresh pages do not"""
        image = checked_store.peek_page(ROOT_PAGE)
        with checked_store.latches.latched(ROOT_PAGE, RL):
            with pytest.raises(LatchProtocolError):
                checked_store.write_page(ROOT_PAGE, image)
        with checked_store.latches.latched(ROOT_PAGE, WL):
            checked_store.write_page(ROOT_PAGE, image)
        page = checked_store.alloc_page()
        checked_store.write_page(page, image, fresh=True)

    def test_use_after_free(self, checked_store):
        """Touching a freed page is detected"""
        page = checked_store.alloc_page()
        checked_store.free_page(page)
        with checked_store.latches.latched(page, WL):
            with pytest.raises(UseAfterFreeError):
                checked_store.read_page(page)

    def test_free_with_live_latch(self, checked_store):
        """A page still latched cannot go on the free list"""
        page = checked_store.alloc_page()
        with checked_store.latches.latched(page, RL):
            with pytest.raises(LatchProtocolError):
                checked_store.free_page(page)
        checked_store.free_page(page)


class TestCache:
    """Bounded LRU page cache"""

    def test_lru_eviction(self, small_cfg):
        """The least recently used page leaves first"""
        store = PageStore.open_or_create(None, small_cfg, cache_capacity=2)
        store.alloc_page()
        store.alloc_page()
        store.peek_page(ROOT_PAGE)
        store.peek_page(3)
        assert store.cache_stats() == {'cached_pages': 2, 'hits': 1, 'misses': 1, 'evictions': 1}

    def test_cache_disabled(self, small_cfg):
        """Capacity zero reads through every time"""
        store = PageStore.open_or_create(None, small_cfg, cache_capacity=0)
        store.peek_page(ROOT_PAGE)
        store.peek_page(ROOT_PAGE)
        assert store.cache_stats()['cached_pages'] == 0
        assert store.cache_stats()['hits'] == 0

    def test_cache_is_transparent(self, tree_config):
        """The same history gives the same page bytes with and without the cache"""
        handles = [BLinkTree.open_or_create(None, tree_config.with_overrides(cache_capacity=capacity))
                   for capacity in (0, 8)]
        for handle in handles:
            for i in range(300):
                handle.put(key(i * 7 % 300), i)
            for i in range(0, 300, 3):
                handle.remove(key(i))
        uncached, cached = handles
        assert uncached.store.header.top_page == cached.store.header.top_page
        for page in range(1, cached.store.header.top_page + 1):
            assert uncached.store.peek_page(page) == cached.store.peek_page(page)
        assert cached.store.cache_stats()['evictions'] > 0
