"""
Step-by-step driver for latch and tree-operation interleavings.

Each named actor runs on its own single-thread executor, so it is one
latch holder for the whole script. Steps are issued in order by the
driver; blocking is detected by a short timeout, and tree operations can
be parked at the tree's named checkpoints and resumed later.
"""

import logging
import threading
import time
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

from config.settings import SCRIPT_BLOCK_TIMEOUT, SCRIPT_GRANT_TIMEOUT
from src.concurrency.latch_manager import LatchKind, LatchTable, is_compatible
from src.errors import InterleavingMismatchError
from src.index.blink_tree import BLinkTree

logger = logging.getLogger(__name__)

ACTIONS = ('acquire', 'release', 'call', 'park', 'await', 'expect_blocked', 'resume')
_POLL = 0.002


@dataclass
class ScriptStep:
    """
    One driver instruction.

    acquire/release take page and kind; call takes fn (called with the
    tree); park takes checkpoint and optionally page; expect names the
    outcome the step must observe (granted, blocked, parked, completed).
    """
    actor: str
    action: str
    page: Optional[int] = None
    kind: Optional[LatchKind] = None
    fn: Optional[Callable[[Optional[BLinkTree]], Any]] = None
    checkpoint: Optional[str] = None
    expect: Optional[str] = None

    def __post_init__(self):
        if self.action not in ACTIONS:
            raise ValueError(f"unknown script action {self.action!r}")


@dataclass
class TraceEvent:
    step: int
    actor: str
    action: str
    outcome: str
    detail: str = ''


@dataclass
class _Actor:
    name: str
    executor: ThreadPoolExecutor
    ident: int = 0
    pending: Optional[Future] = None
    pending_action: str = ''
    armed: Optional[Tuple[str, Optional[int]]] = None
    parked_at: Optional[Tuple[str, int]] = None
    parked: threading.Event = field(default_factory=threading.Event)
    resume: threading.Event = field(default_factory=threading.Event)
    results: List[Any] = field(default_factory=list)


class InterleavingDriver:
    def __init__(self, tree: Optional[BLinkTree] = None, latches: Optional[LatchTable] = None,
                 block_timeout: float = SCRIPT_BLOCK_TIMEOUT, grant_timeout: float = SCRIPT_GRANT_TIMEOUT):
        self.tree = tree
        self.latches = latches or (tree.latches if tree is not None else LatchTable(record_events=True))
        self.block_timeout = block_timeout
        self.grant_timeout = grant_timeout
        self.trace: List[TraceEvent] = []
        self._actors: Dict[str, _Actor] = {}
        self._by_thread: Dict[int, _Actor] = {}
        if tree is not None:
            tree.observer = self._observe

    def run(self, script: List[ScriptStep]) -> List[TraceEvent]:
        try:
            for index, step in enumerate(script):
                outcome, detail = self._perform(step)
                event = TraceEvent(index, step.actor, step.action, outcome, detail)
                self.trace.append(event)
                logger.debug(f"step {index}: {step.actor} {step.action} -> {outcome} {detail}")
                if step.expect is not None and outcome != step.expect:
                    raise InterleavingMismatchError(
                        f"step {index}: {step.actor} {step.action} expected {step.expect}, got {outcome} {detail}",
                        trace=self.trace
                    )
        finally:
            self.close()
        return self.trace

    def results(self, actor: str) -> List[Any]:
        return self._actors[actor].results

    def close(self) -> None:
        if self.tree is not None and self.tree.observer == self._observe:
            self.tree.observer = None
        for actor in self._actors.values():
            actor.armed = None
            actor.parked.clear()
            actor.resume.set()
            actor.executor.shutdown(wait=False)

    def _actor(self, name: str) -> _Actor:
        actor = self._actors.get(name)
        if actor is None:
            actor = _Actor(name, ThreadPoolExecutor(max_workers=1, thread_name_prefix=f"actor-{name}"))
            actor.ident = actor.executor.submit(threading.get_ident).result(timeout=self.grant_timeout)
            self._actors[name] = actor
            self._by_thread[actor.ident] = actor
        return actor

    def _perform(self, step: ScriptStep) -> Tuple[str, str]:
        actor = self._actor(step.actor)
        if step.action == 'acquire':
            self._submit(actor, 'acquire', self.latches.acquire, step.page, step.kind)
            return self._settle(actor, self.block_timeout)
        if step.action == 'release':
            self._submit(actor, 'release', self.latches.release, step.page, step.kind)
            return self._settle(actor, self.grant_timeout)
        if step.action == 'call':
            self._submit(actor, 'call', step.fn, self.tree)
            return self._settle(actor, self.block_timeout)
        if step.action == 'park':
            actor.armed = (step.checkpoint, step.page)
            return 'armed', f"{step.checkpoint}@{step.page}"
        if step.action == 'await':
            return self._settle(actor, self.grant_timeout)
        if step.action == 'expect_blocked':
            outcome, detail = self._settle(actor, self.block_timeout)
            if outcome != 'blocked':
                raise InterleavingMismatchError(
                    f"{actor.name} expected to be blocked, observed {outcome} {detail}", trace=self.trace
                )
            return outcome, detail
        # resume
        if actor.parked_at is None:
            raise InterleavingMismatchError(f"{actor.name} resumed without being parked", trace=self.trace)
        where = actor.parked_at
        actor.parked_at = None
        actor.parked.clear()
        actor.resume.set()
        return 'resumed', f"{where[0]}@{where[1]}"

    def _submit(self, actor: _Actor, action: str, fn: Callable, *args) -> None:
        if actor.pending is not None and not actor.pending.done():
            raise InterleavingMismatchError(f"{actor.name} is still busy with {actor.pending_action}",
                                            trace=self.trace)
        actor.pending_action = action
        actor.pending = actor.executor.submit(fn, *args)

    def _settle(self, actor: _Actor, timeout: float) -> Tuple[str, str]:
        """Wait until the actor's pending work finishes or parks, or the timeout passes"""
        future = actor.pending
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            if actor.parked.is_set():
                return 'parked', f"{actor.parked_at[0]}@{actor.parked_at[1]}"
            if future is not None and future.done():
                break
            time.sleep(_POLL)
        else:
            return 'blocked', actor.pending_action

        error = future.exception()
        if error is not None:
            return 'failed', repr(error)
        result = future.result()
        actor.results.append(result)
        if actor.pending_action == 'acquire':
            return 'granted', ''
        if actor.pending_action == 'release':
            return 'released', ''
        return 'completed', repr(result)

    def _observe(self, name: str, page: int) -> None:
        actor = self._by_thread.get(threading.get_ident())
        if actor is None or actor.armed is None:
            return
        checkpoint, want = actor.armed
        if checkpoint != name or (want is not None and want != page):
            return
        actor.armed = None
        actor.resume.clear()
        actor.parked_at = (name, page)
        actor.parked.set()
        actor.resume.wait()


def scripted_interleaving(script: List[ScriptStep], tree: Optional[BLinkTree] = None,
                          latches: Optional[LatchTable] = None, **timeouts) -> List[TraceEvent]:
    """Run a script and return its trace; raises InterleavingMismatchError on the first unmet expectation"""
    return InterleavingDriver(tree, latches, **timeouts).run(script)


def compatibility_script(held: LatchKind, requested: LatchKind, page: int = 1) -> List[ScriptStep]:
    """Actor A holds `held`; actor B asks for `requested` and is granted only when the matrix allows"""
    return [
        ScriptStep('A', 'acquire', page, held, expect='granted'),
        ScriptStep('B', 'acquire', page, requested,
                   expect='granted' if is_compatible(held, requested) else 'blocked'),
        ScriptStep('A', 'release', page, held, expect='released'),
        ScriptStep('B', 'await', expect='granted'),
        ScriptStep('B', 'release', page, requested, expect='released'),
    ]
