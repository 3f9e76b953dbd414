#!/usr/bin/env python3
"""
Tests for the three-set latch table, driven step by step
"""

import itertools

import pytest

from src.concurrency.latch_manager import (
    AI,
    COMPATIBILITY,
    ND,
    PM,
    RL,
    UNREACHABLE,
    WL,
    LatchKind,
    LatchTable,
    is_compatible,
)
from src.errors import LatchProtocolError
from src.verification.interleaving import ScriptStep, compatibility_script, scripted_interleaving

BLOCK = 0.1
ALL_KINDS = list(LatchKind)


def run(script, latches=None):
    table = latches or LatchTable(record_events=True)
    return scripted_interleaving(script, latches=table, block_timeout=BLOCK)


class TestCompatibilityMatrix:
    """The matrix itself"""

    def test_covers_every_pair(self):
        """All 25 held/requested pairs have an entry"""
        assert len(COMPATIBILITY) == 25

    def test_sets_are_independent(self):
        """Latches of different sets never conflict"""
        for held, requested in itertools.product(ALL_KINDS, repeat=2):
            if held.latch_set != requested.latch_set:
                assert is_compatible(held, requested)

    def test_within_set(self):
        """Only the sharable pairs are compatible inside a set"""
        assert is_compatible(AI, AI)
        assert is_compatible(RL, RL)
        assert not is_compatible(AI, ND)
        assert not is_compatible(RL, WL)
        assert not is_compatible(WL, RL)
        assert not is_compatible(WL, WL)
        assert not is_compatible(PM, PM)

    def test_unreachable_cells_are_conflicts(self):
        """Cells the protocol never exercises still answer 'no'"""
        for held, requested in UNREACHABLE:
            assert not is_compatible(held, requested)


class TestCompatibilityScripts:
    """Every matrix cell observed on a live table"""

    @pytest.mark.parametrize("held,requested", list(itertools.product(ALL_KINDS, repeat=2)),
                             ids=lambda k: k.value)
    def test_pair(self, held, requested):
        """B is granted immediately exactly when the cell says so, and always after A releases"""
        table = LatchTable(record_events=True)
        trace = run(compatibility_script(held, requested), table)
        assert [e.outcome for e in trace] == [
            'granted',
            'granted' if is_compatible(held, requested) else 'blocked',
            'released',
            'granted',
            'released',
        ]
        assert table.is_idle(1)


class TestFairness:
    """Writer preference in set 2 and draining in set 1"""

    def test_waiting_writer_holds_back_new_readers(self):
        """Once a WriteLock waits, a later ReadLock queues behind it"""
        run([
            ScriptStep('A', 'acquire', 1, RL, expect='granted'),
            ScriptStep('B', 'acquire', 1, WL, expect='blocked'),
            ScriptStep('C', 'acquire', 1, RL, expect='blocked'),
            ScriptStep('A', 'release', 1, RL, expect='released'),
            ScriptStep('B', 'await', expect='granted'),
            ScriptStep('C', 'expect_blocked'),
            ScriptStep('B', 'release', 1, WL, expect='released'),
            ScriptStep('C', 'await', expect='granted'),
            ScriptStep('C', 'release', 1, RL, expect='released'),
        ])

    def test_node_delete_drains_access_intent(self):
        """A waiting NodeDelete does not stop new AccessIntent grants"""
        run([
            ScriptStep('A', 'acquire', 1, AI, expect='granted'),
            ScriptStep('B', 'acquire', 1, ND, expect='blocked'),
            ScriptStep('C', 'acquire', 1, AI, expect='granted'),
            ScriptStep('A', 'release', 1, AI, expect='released'),
            ScriptStep('B', 'expect_blocked'),
            ScriptStep('C', 'release', 1, AI, expect='released'),
            ScriptStep('B', 'await', expect='granted'),
            ScriptStep('B', 'release', 1, ND, expect='released'),
        ])

    def test_one_actor_holds_one_latch_per_set(self):
        """An actor may hold a latch from each set on the same page"""
        table = LatchTable()
        run([
            ScriptStep('A', 'acquire', 1, AI, expect='granted'),
            ScriptStep('A', 'acquire', 1, WL, expect='granted'),
            ScriptStep('A', 'acquire', 1, PM, expect='granted'),
            ScriptStep('B', 'acquire', 1, RL, expect='blocked'),
            ScriptStep('A', 'release', 1, WL, expect='released'),
            ScriptStep('B', 'await', expect='granted'),
            ScriptStep('B', 'release', 1, RL, expect='released'),
            ScriptStep('A', 'release', 1, PM, expect='released'),
            ScriptStep('A', 'release', 1, AI, expect='released'),
        ], table)
        assert table.live_entries() == 0


class TestProtocolErrors:
    """Misuse raises instead of deadlocking"""

    def test_same_set_twice(self):
        """Asking for a second latch of a set already held is refused"""
        table = LatchTable()
        table.acquire(3, AI)
        with pytest.raises(LatchProtocolError):
            table.acquire(3, ND)
        with pytest.raises(LatchProtocolError):
            table.acquire(3, AI)
        table.release(3, AI)
        assert table.is_idle(3)

    def test_release_not_held(self):
        """Releasing a latch the caller does not hold is refused"""
        table = LatchTable()
        with pytest.raises(LatchProtocolError):
            table.release(4, RL)
        table.acquire(4, RL)
        with pytest.raises(LatchProtocolError):
            table.release(4, WL)
        table.release(4, RL)


class TestBookkeeping:
    """Counters, events and entry lifetime"""

    def test_latched_context_manager(self):
        """The latch is held inside the block and gone after it"""
        table = LatchTable()
        with table.latched(2, WL):
            assert table.holds(2, WL)
            assert not table.is_idle(2)
        assert table.is_idle(2)
        assert not table.holds(2, WL)

    def test_counters(self):
        """Acquisitions and waits are counted per kind"""
        table = LatchTable()
        run([
            ScriptStep('A', 'acquire', 1, WL, expect='granted'),
            ScriptStep('B', 'acquire', 1, WL, expect='blocked'),
            ScriptStep('A', 'release', 1, WL, expect='released'),
            ScriptStep('B', 'await', expect='granted'),
            ScriptStep('B', 'release', 1, WL, expect='released'),
        ], table)
        counters = table.counters()
        assert counters['acquisitions']['WL'] == 2
        assert counters['waits']['WL'] == 1
        assert table.waits(WL) == 1
        table.reset_counters()
        assert table.waits(WL) == 0

    def test_event_log(self):
        """Recorded events come back in order with their actions"""
        table = LatchTable(record_events=True)
        run(compatibility_script(PM, PM), table)
        assert [e.action for e in table.events()] == ['grant', 'wait', 'release', 'grant', 'release']
        assert all(e.kind is PM and e.page == 1 for e in table.events())

    def test_events_off_by_default(self):
        """Without recording the log stays empty"""
        table = LatchTable()
        with table.latched(1, RL):
            pass
        assert table.events() == []

    def test_event_kinds_filter(self):
        """Only the requested kinds reach the log"""
        table = LatchTable(record_events=True, event_kinds=(PM,))
        with table.latched(1, RL):
            pass
        with table.latched(1, PM):
            pass
        assert [(e.kind, e.action) for e in table.events()] == [(PM, 'grant'), (PM, 'release')]

    def test_event_log_is_bounded(self):
        """The log keeps only the newest events once full"""
        table = LatchTable(record_events=True, event_capacity=2)
        for page in range(1, 6):
            with table.latched(page, WL):
                pass
        events = table.events()
        assert len(events) == 2
        assert [(e.page, e.action) for e in events] == [(5, 'grant'), (5, 'release')]

    def test_capacity_bounds_live_entries(self):
        """A full table makes latches on new pages wait for an entry to free up"""
        table = LatchTable(capacity=1)
        run([
            ScriptStep('A', 'acquire', 1, RL, expect='granted'),
            ScriptStep('B', 'acquire', 2, RL, expect='blocked'),
            ScriptStep('A', 'release', 1, RL, expect='released'),
            ScriptStep('B', 'await', expect='granted'),
            ScriptStep('B', 'release', 2, RL, expect='released'),
        ], table)
        assert table.live_entries() == 0
