"""
Per-page latches in three independent sets.

    set 1  AccessIntent (shared)   NodeDelete (exclusive)
    set 2  ReadLock (shared)       WriteLock (exclusive)
    set 3  ParentModification (exclusive)

A request only conflicts with latches of its own set. Set 2 is writer
preferring: once a WriteLock waits, later ReadLocks queue behind it. Set 1
drains: a waiting NodeDelete does not hold back AccessIntent, it waits for
the granted ones to go away.
"""

import itertools
import logging
import threading
from collections import Counter, deque
from contextlib import contextmanager
from dataclasses import dataclass
from enum import Enum
from typing import Dict, FrozenSet, Iterable, List, NamedTuple, Optional, Tuple

from config.settings import LATCH_CAPACITY, LATCH_EVENT_CAPACITY
from src.errors import LatchProtocolError

logger = logging.getLogger(__name__)


class LatchKind(Enum):
    ACCESS_INTENT = "AI"
    NODE_DELETE = "ND"
    READ_LOCK = "RL"
    WRITE_LOCK = "WL"
    PARENT_MODIFICATION = "PM"

    @property
    def latch_set(self) -> int:
        return LATCH_SETS[self]

    @property
    def sharable(self) -> bool:
        return self in SHARABLE


AI = LatchKind.ACCESS_INTENT
ND = LatchKind.NODE_DELETE
RL = LatchKind.READ_LOCK
WL = LatchKind.WRITE_LOCK
PM = LatchKind.PARENT_MODIFICATION

LATCH_SETS = {AI: 1, ND: 1, RL: 2, WL: 2, PM: 3}
SHARABLE = frozenset({AI, RL})
WRITER_PREFERENCE_SETS = frozenset({2})

# rows: latch held, columns: latch requested
_MATRIX = {
    AI: "YNYYY",
    ND: "NNYYY",  # AI and ND columns are N/A: never requested once ND is held
    RL: "YYYNY",
    WL: "YYNNY",
    PM: "YYYYN",
}
_ORDER = (AI, ND, RL, WL, PM)

COMPATIBILITY: Dict[Tuple[LatchKind, LatchKind], bool] = {
    (held, requested): row[col] == "Y"
    for held, row in _MATRIX.items()
    for col, requested in enumerate(_ORDER)
}

# cells the protocol never exercises
UNREACHABLE = frozenset({(ND, AI), (ND, ND)})


def is_compatible(held: LatchKind, requested: LatchKind) -> bool:
    """Can `requested` be granted while another actor holds `held`"""
    return COMPATIBILITY[(held, requested)]


class LatchGrant(NamedTuple):
    page: int
    kind: LatchKind
    actor: int


@dataclass(frozen=True)
class LatchEvent:
    seq: int
    actor: int
    page: int
    kind: LatchKind
    action: str  # wait, grant, release


class _LatchSet:
    __slots__ = ('holders', 'exclusive_waiting')

    def __init__(self):
        self.holders: Dict[int, LatchKind] = {}
        self.exclusive_waiting = 0


class _PageLatches:
    __slots__ = ('cond', 'sets', 'refs')

    def __init__(self):
        self.cond = threading.Condition(threading.Lock())
        self.sets = {1: _LatchSet(), 2: _LatchSet(), 3: _LatchSet()}
        self.refs = 0


class LatchTable:
    """Blocking latch state for every page with a live holder or waiter"""

    def __init__(self, capacity: int = LATCH_CAPACITY, record_events: bool = False,
                 event_kinds: Optional[Iterable[LatchKind]] = None,
                 event_capacity: int = LATCH_EVENT_CAPACITY):
        """
        The event log keeps the newest `event_capacity` events, and only
        for `event_kinds` when given.
        """
        self.capacity = capacity
        self.record_events = record_events
        self.event_kinds: FrozenSet[LatchKind] = frozenset(_ORDER if event_kinds is None else event_kinds)
        self._entries: Dict[int, _PageLatches] = {}
        self._table = threading.Condition(threading.Lock())
        self._stats_lock = threading.Lock()
        self._acquisitions = Counter()
        self._waits = Counter()
        self._events: deque = deque(maxlen=event_capacity)
        self._seq = itertools.count()

    def acquire(self, page: int, kind: LatchKind) -> LatchGrant:
        """Block until `kind` is grantable on `page`, then record the caller as holder"""
        actor = threading.get_ident()
        entry = self._pin(page)
        latch_set = entry.sets[kind.latch_set]
        try:
            with entry.cond:
                if actor in latch_set.holders:
                    raise LatchProtocolError(
                        f"actor already holds {latch_set.holders[actor].name} on page {page}, "
                        f"cannot take {kind.name} in the same set"
                    )
                if not self._grantable(latch_set, kind):
                    self._count(self._waits, kind)
                    self._record(actor, page, kind, 'wait')
                    if not kind.sharable:
                        latch_set.exclusive_waiting += 1
                    try:
                        while not self._grantable(latch_set, kind):
                            entry.cond.wait()
                    finally:
                        if not kind.sharable:
                            latch_set.exclusive_waiting -= 1
                latch_set.holders[actor] = kind
                self._count(self._acquisitions, kind)
                self._record(actor, page, kind, 'grant')
        except BaseException:
            self._unpin(page, entry)
            raise
        return LatchGrant(page, kind, actor)

    def release(self, page: int, kind: LatchKind) -> None:
        """Drop the caller's latch and wake waiters"""
        actor = threading.get_ident()
        with self._table:
            entry = self._entries.get(page)
        if entry is None:
            raise LatchProtocolError(f"release of {kind.name} on page {page}: no latch held")
        with entry.cond:
            latch_set = entry.sets[kind.latch_set]
            if latch_set.holders.get(actor) is not kind:
                raise LatchProtocolError(f"release of {kind.name} on page {page}: not held by caller")
            del latch_set.holders[actor]
            self._record(actor, page, kind, 'release')
            entry.cond.notify_all()
        self._unpin(page, entry)

    @contextmanager
    def latched(self, page: int, kind: LatchKind):
        """Hold a latch for the duration of a with-block"""
        grant = self.acquire(page, kind)
        try:
            yield grant
        finally:
            self.release(page, kind)

    def holds(self, page: int, kind: LatchKind, actor: Optional[int] = None) -> bool:
        """Does the actor (default: caller) hold `kind` on `page`"""
        actor = threading.get_ident() if actor is None else actor
        with self._table:
            entry = self._entries.get(page)
        if entry is None:
            return False
        with entry.cond:
            return entry.sets[kind.latch_set].holders.get(actor) is kind

    def holders(self, page: int) -> List[Tuple[int, LatchKind]]:
        with self._table:
            entry = self._entries.get(page)
        if entry is None:
            return []
        with entry.cond:
            return [(actor, kind) for s in entry.sets.values() for actor, kind in s.holders.items()]

    def is_idle(self, page: int) -> bool:
        """No holder and no waiter in any of the three sets"""
        with self._table:
            return page not in self._entries

    def live_entries(self) -> int:
        with self._table:
            return len(self._entries)

    def counters(self) -> Dict[str, Dict[str, int]]:
        """Acquisition and wait counts per latch kind"""
        with self._stats_lock:
            return {
                'acquisitions': {k.value: self._acquisitions[k] for k in _ORDER},
                'waits': {k.value: self._waits[k] for k in _ORDER},
            }

    def waits(self, kind: LatchKind) -> int:
        with self._stats_lock:
            return self._waits[kind]

    def events(self) -> List[LatchEvent]:
        with self._stats_lock:
            return sorted(self._events, key=lambda e: e.seq)

    def reset_counters(self) -> None:
        with self._stats_lock:
            self._acquisitions.clear()
            self._waits.clear()
            self._events.clear()

    @staticmethod
    def _grantable(latch_set: _LatchSet, kind: LatchKind) -> bool:
        if not all(is_compatible(held, kind) for held in latch_set.holders.values()):
            return False
        if kind.sharable and latch_set.exclusive_waiting and kind.latch_set in WRITER_PREFERENCE_SETS:
            return False
        return True

    def _pin(self, page: int) -> _PageLatches:
        with self._table:
            entry = self._entries.get(page)
            while entry is None and len(self._entries) >= self.capacity:
                logger.debug(f"Latch table full ({self.capacity} pages), waiting for page {page}")
                self._table.wait()
                entry = self._entries.get(page)
            if entry is None:
                entry = self._entries[page] = _PageLatches()
            entry.refs += 1
            return entry

    def _unpin(self, page: int, entry: _PageLatches) -> None:
        with self._table:
            entry.refs -= 1
            if entry.refs == 0 and self._entries.get(page) is entry:
                del self._entries[page]
                self._table.notify_all()

    def _count(self, counter: Counter, kind: LatchKind) -> None:
        with self._stats_lock:
            counter[kind] += 1

    def _record(self, actor: int, page: int, kind: LatchKind, action: str) -> None:
        if self.record_events and kind in self.event_kinds:
            with self._stats_lock:
                self._events.append(LatchEvent(next(self._seq), actor, page, kind, action))
