"""
Page store: backing file, bounded page cache, allocator and free list.
"""

import logging
import os
import struct
import threading
from collections import OrderedDict
from dataclasses import dataclass
from typing import Dict, List, Optional, Set

from config.settings import CACHE_CAPACITY, PAGE_BITS
from src.concurrency.latch_manager import LatchTable, RL, WL
from src.errors import (
    CorruptPageError,
    IncompatibleFileError,
    InvalidPageConfigError,
    LatchProtocolError,
    PageOutOfRangeError,
    StorageExhaustedError,
    UseAfterFreeError,
)
from src.storage.page_format import Node, PageConfig, serialize

logger = logging.getLogger(__name__)

MAGIC = b'BLNK'
VERSION = 1
FILE_HEADER = struct.Struct('<4sBBxxQQQ')
FREE_LINK = struct.Struct('<Q')
ROOT_PAGE = 1


@dataclass
class FileHeader:
    page_bits: int
    root_page: int = ROOT_PAGE
    top_page: int = ROOT_PAGE
    free_head: int = 0

    def pack(self, page_size: int) -> bytes:
        data = FILE_HEADER.pack(MAGIC, VERSION, self.page_bits, self.root_page, self.top_page, self.free_head)
        return data.ljust(page_size, b'\0')

    @classmethod
    def unpack(cls, data: bytes) -> 'FileHeader':
        if len(data) < FILE_HEADER.size:
            raise IncompatibleFileError(f"file too short for a header ({len(data)} bytes)")
        magic, version, page_bits, root_page, top_page, free_head = FILE_HEADER.unpack_from(data, 0)
        if magic != MAGIC:
            raise IncompatibleFileError(f"bad magic {magic!r}")
        if version != VERSION:
            raise IncompatibleFileError(f"unsupported format version {version}")
        return cls(page_bits, root_page, top_page, free_head)


class _FileBacking:
    """Positional reads and writes on a real file"""

    def __init__(self, path: str, create: bool):
        self.path = path
        self._file = open(path, 'w+b' if create else 'r+b')
        self._lock = threading.Lock()

    def read(self, offset: int, size: int) -> bytes:
        with self._lock:
            self._file.seek(offset)
            data = self._file.read(size)
        return data.ljust(size, b'\0')

    def write(self, offset: int, data: bytes) -> None:
        with self._lock:
            self._file.seek(offset)
            self._file.write(data)
            self._file.flush()

    def size(self) -> int:
        with self._lock:
            self._file.seek(0, os.SEEK_END)
            return self._file.tell()

    def sync(self) -> None:
        with self._lock:
            self._file.flush()
            os.fsync(self._file.fileno())

    def close(self) -> None:
        with self._lock:
            self._file.close()


class _MemoryBacking:
    """In-memory byte vector standing in for the file"""

    path = None

    def __init__(self):
        self._data = bytearray()
        self._lock = threading.Lock()

    def read(self, offset: int, size: int) -> bytes:
        with self._lock:
            return bytes(self._data[offset:offset + size]).ljust(size, b'\0')

    def write(self, offset: int, data: bytes) -> None:
        with self._lock:
            end = offset + len(data)
            if end > len(self._data):
                self._data.extend(b'\0' * (end - len(self._data)))
            self._data[offset:end] = data

    def size(self) -> int:
        with self._lock:
            return len(self._data)

    def sync(self) -> None:
        pass

    def close(self) -> None:
        pass

    def snapshot(self) -> bytes:
        with self._lock:
            return bytes(self._data)


class PageStore:
    """Maps page numbers to page images; write-through to the backing store"""

    def __init__(self, backing, header: FileHeader, latches: Optional[LatchTable] = None,
                 cache_capacity: int = CACHE_CAPACITY, debug_checks: bool = False,
                 max_pages: Optional[int] = None):
        self.cfg = PageConfig(header.page_bits)
        self.header = header
        self.latches = latches
        self.cache_capacity = cache_capacity
        self.debug_checks = debug_checks
        self.max_pages = max_pages
        self._backing = backing
        self._cache: OrderedDict = OrderedDict()
        self._cache_lock = threading.Lock()
        self._alloc_lock = threading.Lock()
        self._free: Set[int] = set()
        self.hits = 0
        self.misses = 0
        self.evictions = 0

    @property
    def path(self) -> Optional[str]:
        return self._backing.path

    @property
    def page_size(self) -> int:
        return self.cfg.page_size

    @classmethod
    def open_or_create(cls, path: Optional[str], cfg: Optional[PageConfig] = None,
                       latches: Optional[LatchTable] = None, **options) -> 'PageStore':
        """Open an existing file, or create one holding an empty leaf root"""
        if path is None:
            return cls._create(_MemoryBacking(), cfg, latches, **options)
        if not os.path.exists(path) or os.path.getsize(path) == 0:
            return cls._create(_FileBacking(path, create=True), cfg, latches, **options)

        backing = _FileBacking(path, create=False)
        try:
            header = FileHeader.unpack(backing.read(0, FILE_HEADER.size))
            if cfg is not None and cfg.page_bits != header.page_bits:
                raise IncompatibleFileError(
                    f"{path} uses page_bits {header.page_bits}, {cfg.page_bits} requested"
                )
            try:
                PageConfig(header.page_bits)
            except InvalidPageConfigError as e:
                raise IncompatibleFileError(f"{path}: {e}") from e
        except Exception:
            backing.close()
            raise
        store = cls(backing, header, latches, **options)
        store._free = set(store.free_pages())
        logger.info(f"Opened {path}: page_bits={header.page_bits}, top_page={header.top_page}, "
                    f"free={len(store._free)}")
        return store

    @classmethod
    def _create(cls, backing, cfg: Optional[PageConfig], latches, **options) -> 'PageStore':
        cfg = cfg or PageConfig(PAGE_BITS)
        store = cls(backing, FileHeader(cfg.page_bits), latches, **options)
        store._write_header()
        store._backing.write(ROOT_PAGE * cfg.page_size, serialize(Node.empty_leaf(cfg), cfg))
        logger.info(f"Created {backing.path or 'in-memory store'}: page_bits={cfg.page_bits}")
        return store

    def alloc_page(self) -> int:
        """Pop the free list head, or extend the file by one page; image zeroed"""
        with self._alloc_lock:
            if self.header.free_head:
                page = self.header.free_head
                (next_free,) = FREE_LINK.unpack_from(self._read_raw(page), 0)
                self.header.free_head = next_free
                self._free.discard(page)
                logger.debug(f"Reusing free page {page}")
            else:
                page = self.header.top_page + 1
                if self.max_pages is not None and page >= self.max_pages:
                    raise StorageExhaustedError(f"store limited to {self.max_pages} pages")
                self.header.top_page = page
            if self.debug_checks and self.latches is not None and not self.latches.is_idle(page):
                raise LatchProtocolError(f"allocated page {page} still has live latch state")
            try:
                self._write_raw(page, bytes(self.page_size))
                self._write_header()
            except OSError as e:
                raise StorageExhaustedError(f"cannot grow store to page {page}: {e}") from e
            return page

    def free_page(self, page: int) -> None:
        """Push a drained page onto the free list"""
        with self._alloc_lock:
            self._check_range(page)
            if page == self.header.root_page:
                raise CorruptPageError("the root page cannot be freed")
            if page in self._free:
                raise CorruptPageError(f"double free of page {page}")
            if self.debug_checks and self.latches is not None and not self.latches.is_idle(page):
                raise LatchProtocolError(f"freeing page {page} with live latches {self.latches.holders(page)}")
            image = bytearray(self.page_size)
            FREE_LINK.pack_into(image, 0, self.header.free_head)
            self._write_raw(page, bytes(image))
            self.header.free_head = page
            self._free.add(page)
            self._write_header()
            logger.debug(f"Freed page {page}")

    def read_page(self, page: int) -> bytes:
        """Latched read of a tree page"""
        self._check_range(page)
        if self.debug_checks:
            self._check_live(page)
            self._check_latched(page, (RL, WL))
        return self._read_raw(page)

    def peek_page(self, page: int) -> bytes:
        """Unlatched read for quiesced tooling"""
        self._check_range(page)
        return self._read_raw(page)

    def write_page(self, page: int, data: bytes, fresh: bool = False) -> None:
        """Write-through; `fresh` marks a just-allocated page nobody can reach yet"""
        self._check_range(page)
        if len(data) != self.page_size:
            raise CorruptPageError(f"page image is {len(data)} bytes, expected {self.page_size}")
        if self.debug_checks:
            self._check_live(page)
            if not fresh:
                self._check_latched(page, (WL,))
        self._write_raw(page, data)

    def free_pages(self) -> List[int]:
        """Walk the free chain; corruption on cycles, duplicates or bad links"""
        seen: List[int] = []
        visited: Set[int] = set()
        page = self.header.free_head
        while page:
            if page in visited:
                raise CorruptPageError(f"free list cycle at page {page}")
            if not ROOT_PAGE < page <= self.header.top_page:
                raise CorruptPageError(f"free list link to page {page} out of range")
            visited.add(page)
            seen.append(page)
            (page,) = FREE_LINK.unpack_from(self._read_raw(page), 0)
        return seen

    def is_free(self, page: int) -> bool:
        with self._alloc_lock:
            return page in self._free

    def free_count(self) -> int:
        with self._alloc_lock:
            return len(self._free)

    def cache_stats(self) -> Dict[str, int]:
        with self._cache_lock:
            return {
                'cached_pages': len(self._cache),
                'hits': self.hits,
                'misses': self.misses,
                'evictions': self.evictions
            }

    def snapshot(self) -> bytes:
        """Whole store image (in-memory or file)"""
        return self._backing.read(0, (self.header.top_page + 1) * self.page_size)

    def flush(self) -> None:
        self._backing.sync()

    def close(self) -> None:
        self.flush()
        self._backing.close()
        with self._cache_lock:
            self._cache.clear()
        logger.info(f"Closed {self.path or 'in-memory store'}")

    def _check_range(self, page: int) -> None:
        if not 0 < page <= self.header.top_page:
            raise PageOutOfRangeError(f"page {page} outside [1, {self.header.top_page}]")

    def _check_live(self, page: int) -> None:
        if self.is_free(page):
            raise UseAfterFreeError(f"page {page} is on the free list")

    def _check_latched(self, page: int, kinds) -> None:
        if self.latches is None:
            return
        if not any(self.latches.holds(page, kind) for kind in kinds):
            raise LatchProtocolError(f"page {page} accessed without {'/'.join(k.name for k in kinds)}")

    def _read_raw(self, page: int) -> bytes:
        if self.cache_capacity:
            with self._cache_lock:
                data = self._cache.get(page)
                if data is not None:
                    self.hits += 1
                    self._cache.move_to_end(page)
                    return data
                self.misses += 1
        data = self._backing.read(page * self.page_size, self.page_size)
        if self.cache_capacity:
            self._cache_put(page, data)
        return data

    def _write_raw(self, page: int, data: bytes) -> None:
        if self.cache_capacity:
            # backing and cache change together
            with self._cache_lock:
                self._backing.write(page * self.page_size, data)
                self._cache[page] = data
                self._cache.move_to_end(page)
                self._evict()
        else:
            self._backing.write(page * self.page_size, data)

    def _cache_put(self, page: int, data: bytes) -> None:
        with self._cache_lock:
            if page not in self._cache:
                self._cache[page] = data
                self._evict()

    def _evict(self) -> None:
        while len(self._cache) > self.cache_capacity:
            self._cache.popitem(last=False)
            self.evictions += 1

    def _write_header(self) -> None:
        self._backing.write(0, self.header.pack(self.page_size))
