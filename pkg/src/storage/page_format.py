"""
In-page layout of a B-link tree node and the single-node manipulations.

Page layout (all integers little-endian):

    offset 0   header   <B level><B flags><2 pad><u32 count><u32 active>
                        <u32 free_offset><u64 link>            (24 bytes)
    offset 24  slots    count x <u32 key_offset><B flags><3 pad><u64 value>
                        (16 bytes each, growing upward)
    ...        gap
    free_offset .. end  key heap, <u8 length><length bytes> per key,
                        growing downward from the page end

The highest slot is the node's upper fence. The rightmost node of a level
carries STOPPER, the zero-length key, as its fence.
"""

import struct
from bisect import bisect_left
from dataclasses import dataclass, field
from enum import Enum
from operator import attrgetter
from typing import List, Tuple

from config.settings import MIN_PAGE_BITS, MAX_PAGE_BITS, MAX_KEY_LENGTH
from src.errors import (
    AlreadyDeletedError,
    CorruptPageError,
    InvalidKeyError,
    InvalidPageConfigError,
    KeyOutOfRangeError,
)

HEADER = struct.Struct('<BBxxIIIQ')
SLOT = struct.Struct('<IBxxxQ')

NODE_DELETED = 0x01
KEY_DELETED = 0x01

STOPPER = b''
MAX_VALUE = (1 << 64) - 1

_slot_key = attrgetter('key')


@dataclass(frozen=True)
class PageConfig:
    """Node size expressed in bits"""
    page_bits: int

    def __post_init__(self):
        if not MIN_PAGE_BITS <= self.page_bits <= MAX_PAGE_BITS:
            raise InvalidPageConfigError(
                f"page_bits must be in [{MIN_PAGE_BITS}, {MAX_PAGE_BITS}], got {self.page_bits}"
            )

    @property
    def page_size(self) -> int:
        return 1 << self.page_bits

    @property
    def max_key_length(self) -> int:
        # a node holding only its fence must always take one more key
        room = (self.page_size - HEADER.size) // 2 - SLOT.size - 1
        return min(MAX_KEY_LENGTH, room)


class SlotOutcome(Enum):
    INSERTED = "inserted"
    UPDATED = "updated"
    NO_ROOM = "no_room"


@dataclass(slots=True)
class Slot:
    key: bytes
    value: int
    deleted: bool = False
    key_offset: int = 0

    def clone(self) -> 'Slot':
        return Slot(self.key, self.value, self.deleted, self.key_offset)


@dataclass
class Node:
    """Deserialized image of one tree page"""
    page_size: int
    level: int = 0
    deleted: bool = False
    link: int = 0
    active: int = 0
    free_offset: int = 0
    slots: List[Slot] = field(default_factory=list)

    @classmethod
    def empty_leaf(cls, cfg: PageConfig) -> 'Node':
        """A fresh rightmost leaf holding only the (deleted) STOPPER fence"""
        node = cls(page_size=cfg.page_size, slots=[Slot(STOPPER, 0, deleted=True)])
        repack(node)
        return node

    @classmethod
    def branch(cls, cfg: PageConfig, level: int, entries: List[Tuple[bytes, int]], link: int = 0) -> 'Node':
        """Build a branch from (fence key, child page) pairs in key order"""
        node = cls(page_size=cfg.page_size, level=level, link=link,
                   slots=[Slot(key, child) for key, child in entries])
        repack(node)
        return node

    @property
    def count(self) -> int:
        return len(self.slots)

    @property
    def fence_key(self) -> bytes:
        return self.slots[-1].key

    @property
    def is_rightmost(self) -> bool:
        return self.slots[-1].key == STOPPER

    @property
    def slot_top(self) -> int:
        return HEADER.size + len(self.slots) * SLOT.size

    @property
    def free_gap(self) -> int:
        return self.free_offset - self.slot_top

    def is_empty(self) -> bool:
        """No slot with a clear delete bit; a resident deleted fence is not content"""
        return self.active == 0

    def copy(self) -> 'Node':
        return Node(self.page_size, self.level, self.deleted, self.link, self.active,
                    self.free_offset, [s.clone() for s in self.slots])


def compare_keys(a: bytes, b: bytes) -> int:
    """Unsigned lexicographic order, shorter prefix first; STOPPER sorts last"""
    if a == b:
        return 0
    if a == STOPPER:
        return 1
    if b == STOPPER:
        return -1
    return -1 if a < b else 1


def validate_key(key: bytes, cfg: PageConfig = None) -> bytes:
    """Reject keys that cannot be stored as user keys"""
    if not isinstance(key, (bytes, bytearray)):
        raise InvalidKeyError(f"key must be bytes, got {type(key).__name__}")
    limit = cfg.max_key_length if cfg is not None else MAX_KEY_LENGTH
    if not 1 <= len(key) <= limit:
        raise InvalidKeyError(f"key length must be in [1, {limit}], got {len(key)}")
    return bytes(key)


def find_slot(node: Node, key: bytes) -> int:
    """Smallest slot whose key is >= key; node.count when key lies beyond the fence"""
    count = len(node.slots)
    if node.slots[-1].key == STOPPER:
        if key == STOPPER:
            return count - 1
        # bisect over the real keys; landing on count-1 means the stopper covers it
        return bisect_left(node.slots, key, 0, count - 1, key=_slot_key)
    if key == STOPPER:
        return count
    return bisect_left(node.slots, key, 0, count, key=_slot_key)


def insert_slot(node: Node, key: bytes, value: int) -> SlotOutcome:
    """Add or update key; leaves the node untouched when there is no room"""
    if not 1 <= len(key) <= MAX_KEY_LENGTH:
        raise InvalidKeyError(f"key length must be in [1, {MAX_KEY_LENGTH}], got {len(key)}")
    if not 0 <= value <= MAX_VALUE:
        raise ValueError(f"value out of range: {value}")
    slot = find_slot(node, key)
    if slot == node.count:
        raise KeyOutOfRangeError(f"key {key.hex()} beyond fence {node.fence_key.hex()}")

    existing = node.slots[slot]
    if existing.key == key:
        existing.value = value
        if existing.deleted:
            existing.deleted = False
            node.active += 1
        return SlotOutcome.UPDATED

    if node.free_gap < SLOT.size + 1 + len(key):
        return SlotOutcome.NO_ROOM

    node.free_offset -= 1 + len(key)
    node.slots.insert(slot, Slot(bytes(key), value, False, node.free_offset))
    node.active += 1
    return SlotOutcome.INSERTED


def mark_key_deleted(node: Node, slot: int) -> None:
    """Set the key delete bit; the key bytes stay resident"""
    if not 0 <= slot < node.count:
        raise IndexError(f"slot {slot} out of range for count {node.count}")
    target = node.slots[slot]
    if target.deleted:
        raise AlreadyDeletedError(f"slot {slot} ({target.key.hex()}) already deleted")
    target.deleted = True
    node.active -= 1


def update_value(node: Node, slot: int, value: int) -> None:
    """Re-point a slot without touching its key bytes"""
    if not 0 <= value <= MAX_VALUE:
        raise ValueError(f"value out of range: {value}")
    node.slots[slot].value = value


def repack(node: Node) -> None:
    """Lay the key heap out contiguously from the page end in slot order"""
    offset = node.page_size
    for slot in node.slots:
        offset -= 1 + len(slot.key)
        slot.key_offset = offset
    node.free_offset = offset
    node.active = sum(1 for s in node.slots if not s.deleted)
    if node.free_offset < node.slot_top:
        raise CorruptPageError(f"{node.count} slots do not fit in a {node.page_size}-byte page")


def cleanup_node(node: Node) -> int:
    """Drop deleted non-fence slots and compact the key heap; returns bytes freed"""
    fence = node.slots[-1]
    survivors = [s for s in node.slots[:-1] if not s.deleted]
    if len(survivors) == node.count - 1:
        return 0
    before = node.free_gap
    node.slots = survivors + [fence]
    repack(node)
    return node.free_gap - before


def split_node(node: Node) -> Tuple[Node, Node]:
    """Halve a node: left keeps the lower slots and the median as its fence"""
    if node.count < 2:
        raise CorruptPageError(f"cannot split a node with {node.count} slot(s)")
    mid = node.count // 2
    left = Node(page_size=node.page_size, level=node.level,
                slots=[s.clone() for s in node.slots[:mid]])
    right = Node(page_size=node.page_size, level=node.level, link=node.link,
                 slots=[s.clone() for s in node.slots[mid:]])
    repack(left)
    repack(right)
    return left, right


def serialize(node: Node, cfg: PageConfig) -> bytes:
    """Render a node as exactly one page of bytes"""
    if node.page_size != cfg.page_size:
        raise CorruptPageError(f"node sized {node.page_size} for a {cfg.page_size}-byte page")
    buf = bytearray(cfg.page_size)
    HEADER.pack_into(buf, 0, node.level, NODE_DELETED if node.deleted else 0,
                     node.count, node.active, node.free_offset, node.link)
    pos = HEADER.size
    for slot in node.slots:
        SLOT.pack_into(buf, pos, slot.key_offset, KEY_DELETED if slot.deleted else 0, slot.value)
        pos += SLOT.size
        length = len(slot.key)
        buf[slot.key_offset] = length
        buf[slot.key_offset + 1:slot.key_offset + 1 + length] = slot.key
    return bytes(buf)


def deserialize(data: bytes, cfg: PageConfig) -> Node:
    """Parse and validate one page image"""
    page_size = cfg.page_size
    if len(data) != page_size:
        raise CorruptPageError(f"page image is {len(data)} bytes, expected {page_size}")
    level, flags, count, active, free_offset, link = HEADER.unpack_from(data, 0)
    if flags & ~NODE_DELETED:
        raise CorruptPageError(f"unknown node flags 0x{flags:02x}")
    if count < 1:
        raise CorruptPageError("node has no fence slot")
    slot_top = HEADER.size + count * SLOT.size
    if not slot_top <= free_offset <= page_size:
        raise CorruptPageError(f"free_offset {free_offset} outside [{slot_top}, {page_size}] for count {count}")
    if active > count:
        raise CorruptPageError(f"active {active} exceeds count {count}")

    slots = []
    live = 0
    previous = None
    for index, (offset, slot_flags, value) in enumerate(SLOT.iter_unpack(data[HEADER.size:slot_top])):
        if not free_offset <= offset < page_size:
            raise CorruptPageError(f"slot {index} key offset {offset} outside the key heap")
        length = data[offset]
        if offset + 1 + length > page_size:
            raise CorruptPageError(f"slot {index} key runs past the page end")
        if slot_flags & ~KEY_DELETED:
            raise CorruptPageError(f"slot {index} has unknown flags 0x{slot_flags:02x}")
        key = bytes(data[offset + 1:offset + 1 + length])
        if not key and index != count - 1:
            raise CorruptPageError(f"slot {index} holds the stopper below the fence")
        if previous is not None and key and not previous < key:
            raise CorruptPageError(f"slot {index} key {key.hex()} out of order")
        deleted = bool(slot_flags & KEY_DELETED)
        live += not deleted
        slots.append(Slot(key, value, deleted, offset))
        previous = key
    if live != active:
        raise CorruptPageError(f"active {active} but {live} slots are live")

    return Node(page_size=page_size, level=level, deleted=bool(flags & NODE_DELETED),
                link=link, active=active, free_offset=free_offset, slots=slots)
