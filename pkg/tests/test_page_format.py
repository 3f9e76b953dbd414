#!/usr/bin/env python3
"""
Tests for the node layout and single-node manipulations
"""

import pytest

from src.errors import (
    AlreadyDeletedError,
    CorruptPageError,
    InvalidKeyError,
    InvalidPageConfigError,
    KeyOutOfRangeError,
)
from src.storage.page_format import (
    HEADER,
    SLOT,
    STOPPER,
    Node,
    PageConfig,
    SlotOutcome,
    cleanup_node,
    compare_keys,
    deserialize,
    find_slot,
    insert_slot,
    mark_key_deleted,
    serialize,
    split_node,
    update_value,
    validate_key,
)
from tests.conftest import key


def leaf(cfg, keys, link=0):
    """Live leaf whose last key is the fence"""
    return Node.branch(cfg, 0, [(k, i) for i, k in enumerate(keys)], link=link)


class TestPageConfig:
    """Page size bounds and derived key limits"""

    @pytest.mark.parametrize("bits", [8, 21, 0])
    def test_rejects_out_of_range_bits(self, bits):
        """page_bits outside [9, 20] is refused"""
        with pytest.raises(InvalidPageConfigError):
            PageConfig(bits)

    def test_max_key_length_small_pages(self):
        """512-byte pages cap keys so a fence-only node always takes another key"""
        cfg = PageConfig(9)
        assert cfg.page_size == 512
        assert cfg.max_key_length == 227
        assert HEADER.size + 2 * (SLOT.size + 1 + cfg.max_key_length) <= cfg.page_size

    def test_max_key_length_capped(self):
        """From 1 KiB pages upward the one-byte length prefix is the limit"""
        assert PageConfig(10).max_key_length == 255
        assert PageConfig(20).max_key_length == 255


class TestKeys:
    """Key ordering and validation"""

    def test_stopper_sorts_last(self):
        """The zero-length fence compares above every user key"""
        assert compare_keys(STOPPER, b'\xff' * 255) == 1
        assert compare_keys(b'a', STOPPER) == -1
        assert compare_keys(STOPPER, STOPPER) == 0

    def test_prefix_sorts_first(self):
        """Unsigned lexicographic order with the shorter prefix first"""
        assert compare_keys(b'ab', b'abc') == -1
        assert compare_keys(b'\x80', b'\x7f') == 1

    def test_validate_key(self, small_cfg):
        """Empty, non-bytes and over-long keys are rejected"""
        assert validate_key(bytearray(b'k'), small_cfg) == b'k'
        with pytest.raises(InvalidKeyError):
            validate_key(b'')
        with pytest.raises(InvalidKeyError):
            validate_key('text')
        with pytest.raises(InvalidKeyError):
            validate_key(b'x' * 228, small_cfg)
        assert validate_key(b'x' * 227, small_cfg) == b'x' * 227


class TestSlots:
    """find_slot, insert_slot and delete bits"""

    def test_empty_leaf(self, small_cfg):
        """A fresh leaf holds only its deleted stopper fence"""
        node = Node.empty_leaf(small_cfg)
        assert node.count == 1
        assert node.active == 0
        assert node.is_empty()
        assert node.is_rightmost
        assert node.slots[0].deleted
        assert node.free_offset == small_cfg.page_size - 1

    def test_find_slot(self, small_cfg):
        """Smallest slot at or above the key; count when beyond the fence"""
        node = leaf(small_cfg, [b'b', b'd', b'f'])
        assert find_slot(node, b'a') == 0
        assert find_slot(node, b'd') == 1
        assert find_slot(node, b'e') == 2
        assert find_slot(node, b'g') == 3
        assert find_slot(node, STOPPER) == 3

    def test_find_slot_rightmost(self, small_cfg):
        """Everything above the real keys belongs to the stopper slot"""
        node = Node.empty_leaf(small_cfg)
        insert_slot(node, b'm', 1)
        assert find_slot(node, b'z' * 10) == 1
        assert find_slot(node, STOPPER) == 1

    def test_insert_and_update(self, small_cfg):
        """Insert adds a live slot; the same key again replaces the value"""
        node = Node.empty_leaf(small_cfg)
        assert insert_slot(node, b'b', 2) is SlotOutcome.INSERTED
        assert insert_slot(node, b'a', 1) is SlotOutcome.INSERTED
        assert insert_slot(node, b'b', 20) is SlotOutcome.UPDATED
        assert [s.key for s in node.slots] == [b'a', b'b', STOPPER]
        assert node.slots[1].value == 20
        assert node.active == 2

    def test_reinsert_deleted_key_revives_slot(self, small_cfg):
        """Updating a deleted key clears its bit"""
        node = Node.empty_leaf(small_cfg)
        insert_slot(node, b'a', 1)
        mark_key_deleted(node, 0)
        assert node.active == 0
        assert insert_slot(node, b'a', 5) is SlotOutcome.UPDATED
        assert not node.slots[0].deleted
        assert node.active == 1

    def test_insert_beyond_fence(self, small_cfg):
        """A key above a non-rightmost fence belongs to the right sibling"""
        node = leaf(small_cfg, [b'b', b'd'])
        with pytest.raises(KeyOutOfRangeError):
            insert_slot(node, b'e', 1)

    def test_no_room_leaves_node_untouched(self, small_cfg):
        """Nineteen seven-byte keys fill a 512-byte leaf"""
        node = Node.empty_leaf(small_cfg)
        for i in range(19):
            assert insert_slot(node, key(i), i) is SlotOutcome.INSERTED
        before = node.copy()
        assert insert_slot(node, key(19), 19) is SlotOutcome.NO_ROOM
        assert node == before

    def test_double_delete(self, small_cfg):
        """Setting a delete bit twice is an error"""
        node = leaf(small_cfg, [b'a', b'b'])
        mark_key_deleted(node, 0)
        with pytest.raises(AlreadyDeletedError):
            mark_key_deleted(node, 0)

    def test_update_value_keeps_key_bytes(self, small_cfg):
        """Re-pointing an entry changes only its value"""
        node = leaf(small_cfg, [b'a', b'b'])
        offset = node.slots[1].key_offset
        update_value(node, 1, 99)
        assert node.slots[1].value == 99
        assert node.slots[1].key_offset == offset


class TestCleanupAndSplit:
    """Compaction and halving"""

    def test_cleanup_drops_deleted_keys_but_not_fence(self, small_cfg):
        """Deleted non-fence slots go; a deleted fence stays resident"""
        node = leaf(small_cfg, [b'a', b'b', b'c', b'd'])
        mark_key_deleted(node, 1)
        mark_key_deleted(node, 3)
        gap = node.free_gap
        freed = cleanup_node(node)
        assert freed == SLOT.size + 2
        assert node.free_gap == gap + freed
        assert [s.key for s in node.slots] == [b'a', b'c', b'd']
        assert node.slots[-1].deleted
        assert node.active == 2

    def test_cleanup_with_nothing_deleted(self, small_cfg):
        """No deleted slot means no space reclaimed"""
        node = leaf(small_cfg, [b'a', b'b'])
        assert cleanup_node(node) == 0

    def test_split_halves_by_count(self, small_cfg):
        """Left keeps the lower half with the median as fence; right inherits the link"""
        node = leaf(small_cfg, [key(i) for i in range(6)], link=9)
        left, right = split_node(node)
        assert [s.key for s in left.slots] == [key(0), key(1), key(2)]
        assert left.fence_key == key(2)
        assert [s.key for s in right.slots] == [key(3), key(4), key(5)]
        assert right.link == 9
        assert left.active == 3 and right.active == 3

    def test_split_rightmost_keeps_stopper_on_right(self, small_cfg):
        """The stopper fence moves with the upper half"""
        node = Node.empty_leaf(small_cfg)
        for i in range(5):
            insert_slot(node, key(i), i)
        left, right = split_node(node)
        assert left.fence_key == key(2)
        assert right.is_rightmost
        assert not left.is_rightmost

    def test_split_needs_two_slots(self, small_cfg):
        """A fence-only node cannot be halved"""
        with pytest.raises(CorruptPageError):
            split_node(Node.empty_leaf(small_cfg))


class TestSerialization:
    """Page images"""

    def test_round_trip(self, small_cfg):
        """serialize then deserialize reproduces the node exactly"""
        node = Node.branch(small_cfg, 2, [(b'apple', 4), (b'pear', 7), (STOPPER, 9)], link=0)
        mark_key_deleted(node, 0)
        data = serialize(node, small_cfg)
        assert len(data) == small_cfg.page_size
        assert deserialize(data, small_cfg) == node

    def test_deleted_node_flag(self, small_cfg):
        """The node delete bit and its left link survive a round trip"""
        node = leaf(small_cfg, [b'a'])
        node.deleted = True
        node.link = 3
        parsed = deserialize(serialize(node, small_cfg), small_cfg)
        assert parsed.deleted and parsed.link == 3

    def test_rejects_wrong_size(self, small_cfg):
        """An image of the wrong length is corrupt"""
        with pytest.raises(CorruptPageError):
            deserialize(bytes(100), small_cfg)

    def test_rejects_all_zero_page(self, small_cfg):
        """A zeroed page has no fence slot"""
        with pytest.raises(CorruptPageError):
            deserialize(bytes(small_cfg.page_size), small_cfg)

    def test_rejects_unsorted_keys(self, small_cfg):
        """Keys out of order inside a page are detected"""
        node = leaf(small_cfg, [b'b', b'a', b'c'])
        with pytest.raises(CorruptPageError):
            deserialize(serialize(node, small_cfg), small_cfg)

    def test_rejects_bad_active_count(self, small_cfg):
        """The header's active count must match the live slots"""
        node = leaf(small_cfg, [b'a', b'b'])
        data = bytearray(serialize(node, small_cfg))
        HEADER.pack_into(data, 0, 0, 0, 2, 1, node.free_offset, 0)
        with pytest.raises(CorruptPageError):
            deserialize(bytes(data), small_cfg)
