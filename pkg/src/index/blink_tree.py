"""
Concurrent B-link tree over a page store, latched per node in three sets.

Search couples a parent's set-2 latch with AccessIntent on the next node,
moves right past fences, and follows a deleted node's link back to the
node that absorbed it. Splits and consolidations post their fence changes
to the parent level under ParentModification after the node's WriteLock
has been given up.
"""

import logging
import os
import threading
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, List, Optional, Tuple

from config.runtime import TreeConfig
from src.concurrency.latch_manager import AI, ND, PM, RL, WL, LatchKind, LatchTable
from src.errors import LevelOutOfRangeError, TreeStructureError
from src.storage.page_format import (
    STOPPER,
    Node,
    PageConfig,
    SlotOutcome,
    cleanup_node,
    deserialize,
    find_slot,
    insert_slot,
    mark_key_deleted,
    serialize,
    split_node,
    update_value,
    validate_key,
)
from src.storage.page_store import PageStore

logger = logging.getLogger(__name__)

LOWEST_KEY = b'\x00'


class Mode(Enum):
    READ = "read"
    WRITE = "write"


class DeleteOutcome(Enum):
    DELETED = "deleted"
    NOT_FOUND = "not_found"


@dataclass
class LatchedNode:
    page: int
    node: Node
    held: LatchKind


class TreeStats:
    """Thread-safe structural counters and per-level sibling hop counts"""

    def __init__(self):
        self._lock = threading.Lock()
        self._counts = Counter()
        self._hops = Counter()

    def bump(self, name: str, amount: int = 1) -> None:
        with self._lock:
            self._counts[name] += amount

    def hop(self, direction: str, level: int) -> None:
        with self._lock:
            self._hops[(direction, level)] += 1

    def get(self, name: str) -> int:
        with self._lock:
            return self._counts[name]

    def hops(self, direction: str, level: Optional[int] = None) -> int:
        with self._lock:
            if level is not None:
                return self._hops[(direction, level)]
            return sum(n for (d, _), n in self._hops.items() if d == direction)

    def snapshot(self) -> Dict[str, int]:
        with self._lock:
            data = dict(self._counts)
            for (direction, level), n in sorted(self._hops.items()):
                data[f"{direction}_hops_level_{level}"] = n
            return data

    def reset(self) -> None:
        with self._lock:
            self._counts.clear()
            self._hops.clear()


class DecodedNodes:
    """Decoded page images, reused while the page bytes they came from are unchanged"""

    def __init__(self, cfg: PageConfig, capacity: int):
        self.cfg = cfg
        self.capacity = capacity
        self._lock = threading.Lock()
        self._entries: Dict[int, Tuple[bytes, Node]] = {}
        self.hits = 0
        self.misses = 0

    def decode(self, page: int, data: bytes) -> Node:
        if not self.capacity:
            return deserialize(data, self.cfg)
        with self._lock:
            entry = self._entries.get(page)
            if entry is not None and (entry[0] is data or entry[0] == data):
                self.hits += 1
                return entry[1]
            self.misses += 1
        node = deserialize(data, self.cfg)
        with self._lock:
            if page not in self._entries and len(self._entries) >= self.capacity:
                # oldest insertion goes first
                del self._entries[next(iter(self._entries))]
            self._entries[page] = (data, node)
        return node

    def discard(self, page: int) -> None:
        with self._lock:
            self._entries.pop(page, None)

    def stats(self) -> Dict[str, int]:
        with self._lock:
            return {'decoded_pages': len(self._entries), 'hits': self.hits, 'misses': self.misses}


class BLinkTree:
    """Handle on one tree: fixed root page, latch table, page store, policy"""

    def __init__(self, store: PageStore, latches: LatchTable, config: Optional[TreeConfig] = None):
        self.store = store
        self.latches = latches
        self.config = config or TreeConfig()
        self.cfg: PageConfig = store.cfg
        self.root_page = store.header.root_page
        self.access_intent_enabled = self.config.access_intent_enabled
        self.stats = TreeStats()
        self.observer: Optional[Callable[[str, int], None]] = None
        self.nodes = DecodedNodes(self.cfg, self.config.cache_capacity)
        self.height = self.peek_node(self.root_page).level + 1

    # ------------------------------------------------------------------
    # opening and closing

    @classmethod
    def open_or_create(cls, path: Optional[str] = None, config: Optional[TreeConfig] = None,
                       page_bits: Optional[int] = None) -> 'BLinkTree':
        """Open `path` (or an in-memory store when None), creating it when absent"""
        config = config or TreeConfig()
        # the audit only reads ParentModification intervals
        latches = LatchTable(config.latch_capacity, config.record_latch_events, event_kinds=(PM,))
        creating = path is None or not os.path.exists(path) or os.path.getsize(path) == 0
        if page_bits is not None:
            requested = PageConfig(page_bits)
        elif creating:
            requested = PageConfig(config.page_bits)
        else:
            requested = None
        store = PageStore.open_or_create(
            path, requested, latches,
            cache_capacity=config.cache_capacity,
            debug_checks=config.debug_checks,
            max_pages=config.max_pages
        )
        return cls(store, latches, config)

    @classmethod
    def create(cls, path: Optional[str] = None, config: Optional[TreeConfig] = None,
               page_bits: Optional[int] = None) -> 'BLinkTree':
        if path is not None and os.path.exists(path) and os.path.getsize(path) > 0:
            raise FileExistsError(f"{path} already exists")
        config = config or TreeConfig()
        return cls.open_or_create(path, config, page_bits if page_bits is not None else config.page_bits)

    @classmethod
    def open(cls, path: str, config: Optional[TreeConfig] = None,
             page_bits: Optional[int] = None) -> 'BLinkTree':
        if not os.path.exists(path) or os.path.getsize(path) == 0:
            raise FileNotFoundError(f"no tree file at {path}")
        return cls.open_or_create(path, config, page_bits)

    def close(self) -> None:
        self.store.close()

    def __enter__(self) -> 'BLinkTree':
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        self.close()

    # ------------------------------------------------------------------
    # public API

    def get(self, key: bytes) -> Optional[int]:
        key = validate_key(key, self.cfg)
        ln = self.search_to_level(key, 0, Mode.READ)
        try:
            node = ln.node
            slot = find_slot(node, key)
            if slot < node.count:
                found = node.slots[slot]
                if found.key == key and not found.deleted:
                    return found.value
            return None
        finally:
            self._release(ln)

    def put(self, key: bytes, value: int) -> SlotOutcome:
        key = validate_key(key, self.cfg)
        return self.insert(key, value, 0)

    def remove(self, key: bytes) -> bool:
        key = validate_key(key, self.cfg)
        return self.delete(key, 0) is DeleteOutcome.DELETED

    def scan(self, low: Optional[bytes] = None, high: Optional[bytes] = None,
             inclusive_high: bool = True) -> List[Tuple[bytes, int]]:
        """Active (key, value) pairs from low up to high, walking level-0 links"""
        results: List[Tuple[bytes, int]] = []
        if low is not None and high is not None and low > high:
            return results
        key = bytes(low) if low else LOWEST_KEY
        ln = self.search_to_level(key, 0, Mode.READ)
        try:
            while True:
                node = ln.node
                for slot in node.slots[find_slot(node, key):]:
                    if slot.key == STOPPER:
                        break
                    if high is not None and (slot.key > high or (slot.key == high and not inclusive_high)):
                        return results
                    if not slot.deleted:
                        results.append((slot.key, slot.value))
                if node.is_rightmost or (high is not None and node.fence_key >= high):
                    return results
                key = node.fence_key + LOWEST_KEY
                ln = self._settle(self._move_right(ln), key, 0, Mode.READ)
        finally:
            self._release(ln)

    # ------------------------------------------------------------------
    # tree operations

    def search_to_level(self, key: bytes, level: int, mode: Mode = Mode.READ) -> LatchedNode:
        """Latch the node at `level` whose key range covers `key`"""
        if level < 0:
            raise LevelOutOfRangeError(f"level {level} is negative")
        ln = self._latch_root(level, mode)
        return self._settle(ln, key, level, mode)

    def insert(self, key: bytes, value: int, level: int = 0) -> SlotOutcome:
        """Add or update key at `level`; split and restart from the root when full"""
        while True:
            ln = self.search_to_level(key, level, Mode.WRITE)
            try:
                outcome = insert_slot(ln.node, key, value)
                if outcome is SlotOutcome.NO_ROOM and cleanup_node(ln.node):
                    self.stats.bump('cleanups')
                    outcome = insert_slot(ln.node, key, value)
            except BaseException:
                self._release(ln)
                raise
            if outcome is not SlotOutcome.NO_ROOM:
                self._write(ln.page, ln.node)
                self._release(ln)
                return outcome
            self.split(ln)
            self.stats.bump('restarts')

    def split(self, ln: LatchedNode) -> None:
        """Move the upper half into a new right sibling and post both fences"""
        page, node = ln.page, ln.node
        level = node.level
        self.latches.acquire(page, PM)
        self.stats.bump('splits')
        if page == self.root_page:
            self._split_root(ln)
            return

        try:
            right_page = self.store.alloc_page()
        except BaseException:
            self.latches.release(page, PM)
            self._release(ln)
            raise
        left, right = split_node(node)
        left.link = right_page
        self._write(right_page, right, fresh=True)
        self._write(page, left)
        # nobody can reach the new node before the WriteLock goes
        self.latches.acquire(right_page, PM)
        self._release(ln)
        self._checkpoint('split:unlatched', page)
        logger.debug(f"Split page {page} at level {level}: right sibling {right_page}, "
                     f"fence {left.fence_key.hex()}")
        try:
            self.insert(left.fence_key, page, level + 1)
            self._repoint_fence(right.fence_key, right_page, level + 1)
        finally:
            self.latches.release(right_page, PM)
            self.latches.release(page, PM)

    def delete(self, key: bytes, level: int = 0) -> DeleteOutcome:
        """Set the key delete bit; an emptied node absorbs its right sibling"""
        ln = self.search_to_level(key, level, Mode.WRITE)
        node = ln.node
        slot = find_slot(node, key)
        if slot == node.count or node.slots[slot].key != key or node.slots[slot].deleted:
            self._release(ln)
            return DeleteOutcome.NOT_FOUND
        mark_key_deleted(node, slot)
        if node.is_empty() and node.link:
            self.consolidate(ln)
        else:
            self._write(ln.page, node)
            self._release(ln)
        return DeleteOutcome.DELETED

    def consolidate(self, ln: LatchedNode) -> None:
        """Empty left node takes over its right sibling, which is then drained and freed"""
        left_page, left = ln.page, ln.node
        level = left.level
        right_page = left.link
        self.latches.acquire(right_page, WL)
        right = self._load(right_page, WL)
        if right.deleted:
            self.latches.release(right_page, WL)
            self._write(left_page, left)
            self._release(ln)
            raise TreeStructureError(f"right sibling {right_page} of live page {left_page} is deleted")

        old_left_fence = left.fence_key
        right_fence = right.fence_key
        self._write(left_page, right.copy())
        right.deleted = True
        right.link = left_page
        self._write(right_page, right)

        self.latches.acquire(left_page, PM)
        self.latches.acquire(right_page, PM)
        if self.access_intent_enabled:
            # keeps the left page allocated while the deleted right page links to it
            self.latches.acquire(left_page, AI)
        self.latches.release(left_page, WL)
        self.latches.release(right_page, WL)
        self._checkpoint('consolidate:unlatched', right_page)
        self.stats.bump('consolidations')
        logger.debug(f"Consolidated page {right_page} into {left_page} at level {level}")

        try:
            try:
                self.delete_fence_from_parent(old_left_fence, level + 1)
                self._repoint_fence(right_fence, left_page, level + 1)
            finally:
                self.latches.release(right_page, PM)
                self.latches.release(left_page, PM)
            self._checkpoint('consolidate:parents_updated', right_page)

            if not self.access_intent_enabled:
                self.stats.bump('leaked_pages')
                return
            self.latches.acquire(right_page, ND)
            self.latches.acquire(right_page, WL)
            self.latches.release(right_page, WL)
            self.latches.release(right_page, ND)
            self.store.free_page(right_page)
            self.stats.bump('frees')
            self._checkpoint('consolidate:freed', right_page)
        finally:
            if self.access_intent_enabled:
                self.latches.release(left_page, AI)

    def delete_fence_from_parent(self, fence_key: bytes, level: int) -> None:
        """Delete bit on a child's old fence entry; a parent's own fence stays resident"""
        ln = self.search_to_level(fence_key, level, Mode.WRITE)
        node = ln.node
        slot = find_slot(node, fence_key)
        if slot == node.count or node.slots[slot].key != fence_key or node.slots[slot].deleted:
            self._release(ln)
            raise TreeStructureError(f"fence {fence_key.hex()} missing from level {level} page {ln.page}")
        mark_key_deleted(node, slot)
        self._write(ln.page, node)
        self._release(ln)

    # ------------------------------------------------------------------
    # quiesced introspection

    def peek_node(self, page: int) -> Node:
        """Unlatched read; only meaningful with no concurrent mutators"""
        return deserialize(self.store.peek_page(page), self.cfg)

    def leftmost(self, level: int) -> int:
        """Page of the first node at `level`"""
        ln = self.search_to_level(LOWEST_KEY, level, Mode.READ)
        self._release(ln)
        return ln.page

    def level_nodes(self, level: int) -> List[Tuple[int, Node]]:
        """Every node of a level, left to right, read under ReadLock coupling"""
        nodes = []
        key = LOWEST_KEY
        ln = self.search_to_level(key, level, Mode.READ)
        try:
            while True:
                nodes.append((ln.page, ln.node))
                if ln.node.is_rightmost:
                    return nodes
                key = ln.node.fence_key + LOWEST_KEY
                ln = self._settle(self._move_right(ln), key, level, Mode.READ)
        finally:
            self._release(ln)

    # ------------------------------------------------------------------
    # internals

    def _latch_root(self, level: int, mode: Mode) -> LatchedNode:
        kind = WL if mode is Mode.WRITE and self.height - 1 == level else RL
        while True:
            self.latches.acquire(self.root_page, kind)
            root = self._load(self.root_page, kind)
            if root.level < level:
                self.latches.release(self.root_page, kind)
                raise LevelOutOfRangeError(f"level {level} above root level {root.level}")
            if root.level == level and mode is Mode.WRITE and kind is RL:
                # height grew under us: retake the root for writing
                self.latches.release(self.root_page, kind)
                kind = WL
                continue
            return LatchedNode(self.root_page, root, kind)

    def _settle(self, ln: LatchedNode, key: bytes, level: int, mode: Mode) -> LatchedNode:
        while True:
            node = ln.node
            if node.deleted:
                self.stats.hop('left', node.level)
                ln = self._couple(ln, node.link, ln.held)
                continue
            if node.level < level:
                self._release(ln)
                raise TreeStructureError(f"page {ln.page} at level {node.level} reached looking for level {level}")
            slot = find_slot(node, key)
            if slot == node.count:
                ln = self._move_right(ln)
                continue
            if node.level == level:
                return ln

            while slot < node.count and node.slots[slot].deleted:
                slot += 1
            if slot == node.count:
                ln = self._move_right(ln)
                continue
            kind = WL if mode is Mode.WRITE and node.level - 1 == level else RL
            ln = self._couple(ln, node.slots[slot].value, kind)

    def _move_right(self, ln: LatchedNode) -> LatchedNode:
        if not ln.node.link:
            self._release(ln)
            raise TreeStructureError(f"page {ln.page} has no right sibling to move to")
        self.stats.hop('right', ln.node.level)
        return self._couple(ln, ln.node.link, ln.held)

    def _couple(self, ln: LatchedNode, page: int, kind: LatchKind) -> LatchedNode:
        if self.access_intent_enabled:
            self.latches.acquire(page, AI)
            self._release(ln)
            self._checkpoint('descend:coupled', page)
            self.latches.acquire(page, kind)
            self.latches.release(page, AI)
        else:
            self._release(ln)
            self._checkpoint('descend:coupled', page)
            self.latches.acquire(page, kind)
        node = self._load(page, kind)
        self._checkpoint('node:latched', page)
        return LatchedNode(page, node, kind)

    def _split_root(self, ln: LatchedNode) -> None:
        node = ln.node
        try:
            left_page = self.store.alloc_page()
            right_page = self.store.alloc_page()
        except BaseException:
            self.latches.release(ln.page, PM)
            self._release(ln)
            raise
        left, right = split_node(node)
        left.link = right_page
        root = Node.branch(self.cfg, node.level + 1,
                           [(left.fence_key, left_page), (right.fence_key, right_page)])
        self._write(left_page, left, fresh=True)
        self._write(right_page, right, fresh=True)
        self._write(ln.page, root)
        self.height = root.level + 1
        self.stats.bump('root_splits')
        logger.debug(f"Root split: height {self.height}, children {left_page} and {right_page}")
        self._release(ln)
        self.latches.release(ln.page, PM)

    def _repoint_fence(self, fence_key: bytes, child: int, level: int) -> None:
        ln = self.search_to_level(fence_key, level, Mode.WRITE)
        node = ln.node
        slot = find_slot(node, fence_key)
        if slot == node.count or node.slots[slot].key != fence_key or node.slots[slot].deleted:
            self._release(ln)
            raise TreeStructureError(f"fence {fence_key.hex()} missing from level {level} page {ln.page}")
        update_value(node, slot, child)
        self._write(ln.page, node)
        self._release(ln)

    def _load(self, page: int, kind: LatchKind) -> Node:
        """Shared image under ReadLock; a private copy for holders that may modify it"""
        node = self.nodes.decode(page, self.store.read_page(page))
        return node if kind is RL else node.copy()

    def _write(self, page: int, node: Node, fresh: bool = False) -> None:
        self.nodes.discard(page)
        self.store.write_page(page, serialize(node, self.cfg), fresh=fresh)

    def _release(self, ln: LatchedNode) -> None:
        self.latches.release(ln.page, ln.held)

    def _checkpoint(self, name: str, page: int) -> None:
        if self.observer is not None:
            self.observer(name, page)
