"""
Multi-threaded stress runner: seeded per-worker operation streams over
disjoint mutation key ranges, then a quiesced audit and an oracle check.
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor, wait
from dataclasses import dataclass
from typing import Dict, List, Optional, Union

import numpy as np

from config.settings import STRESS_KEYS_PER_WORKER, STRESS_TIMEOUT
from src.concurrency.latch_manager import AI
from src.errors import StressTimeoutError
from src.index.blink_tree import BLinkTree
from src.verification.auditor import AuditReport, audit
from src.verification.oracle import OracleLog, OracleRecord, oracle_replay

logger = logging.getLogger(__name__)

KEY_LOW = b'w'
KEY_HIGH = b'x'
SCAN_SPAN = 16
PUT, REMOVE, GET, SCAN = range(4)


def stress_key(worker: int, index: int) -> bytes:
    return f"w{worker:03d}:{index:07d}".encode()


@dataclass(frozen=True)
class OpMix:
    put: int
    remove: int
    get: int
    scan: int

    @classmethod
    def parse(cls, text: str) -> 'OpMix':
        """'40/20/35/5' -> put/remove/get/scan percentages"""
        parts = text.split('/')
        if len(parts) != 4:
            raise ValueError(f"op mix needs four percentages, got {text!r}")
        try:
            values = [int(p) for p in parts]
        except ValueError as e:
            raise ValueError(f"op mix {text!r} is not numeric") from e
        if any(v < 0 for v in values) or sum(values) != 100:
            raise ValueError(f"op mix {text!r} must be non-negative and sum to 100")
        return cls(*values)

    def probabilities(self) -> np.ndarray:
        return np.array([self.put, self.remove, self.get, self.scan], dtype=float) / 100.0

    def __str__(self) -> str:
        return f"{self.put}/{self.remove}/{self.get}/{self.scan}"


@dataclass
class StressResult:
    log: OracleLog
    report: AuditReport
    mismatches: List[str]
    elapsed: float
    operations: int
    ai_waits: int
    access_intent_enabled: bool = True

    @property
    def throughput(self) -> float:
        return self.operations / self.elapsed if self.elapsed > 0 else 0.0

    @property
    def passed(self) -> bool:
        leaked_ok = not self.access_intent_enabled or self.report.leaked_pages == 0
        return self.report.is_valid and not self.mismatches and leaked_ok

    def summary(self) -> Dict[str, Union[int, float, str]]:
        return {
            'passed': str(self.passed).lower(),
            'operations': self.operations,
            'elapsed': round(self.elapsed, 3),
            'throughput': round(self.throughput, 1),
            'mismatches': len(self.mismatches),
            'ai_waits': self.ai_waits,
            'violations': len(self.report.violations),
            'leaked_pages': self.report.leaked_pages,
            'free_pages': self.report.free_pages,
        }


@dataclass
class _Plan:
    worker: int
    ops: np.ndarray
    own: np.ndarray
    other_worker: np.ndarray
    other_index: np.ndarray
    values: np.ndarray


def _plan(seed: np.random.SeedSequence, worker: int, workers: int, count: int,
          mix: OpMix, keys_per_worker: int) -> _Plan:
    rng = np.random.default_rng(seed)
    return _Plan(
        worker=worker,
        ops=rng.choice(4, size=count, p=mix.probabilities()),
        own=rng.integers(0, keys_per_worker, size=count),
        other_worker=rng.integers(0, workers, size=count),
        other_index=rng.integers(0, keys_per_worker, size=count),
        values=rng.integers(0, 1 << 62, size=count, dtype=np.int64),
    )


def _run_worker(tree: BLinkTree, plan: _Plan) -> List[OracleRecord]:
    records = []
    worker = plan.worker
    for i, op in enumerate(plan.ops):
        if op == PUT:
            key = stress_key(worker, int(plan.own[i]))
            value = int(plan.values[i])
            tree.put(key, value)
            records.append(OracleRecord(worker, 'put', key, value))
        elif op == REMOVE:
            key = stress_key(worker, int(plan.own[i]))
            records.append(OracleRecord(worker, 'remove', key, result=int(tree.remove(key))))
        elif op == GET:
            key = stress_key(int(plan.other_worker[i]), int(plan.other_index[i]))
            records.append(OracleRecord(worker, 'get', key, result=tree.get(key)))
        else:
            low_index = int(plan.other_index[i])
            tree.scan(stress_key(int(plan.other_worker[i]), low_index),
                      stress_key(int(plan.other_worker[i]), low_index + SCAN_SPAN),
                      inclusive_high=False)
    return records


def stress(tree: BLinkTree, workers: int, ops_per_worker: int, mix: Union[OpMix, str] = '40/20/35/5',
           seed: int = 0, timeout: Optional[float] = STRESS_TIMEOUT,
           keys_per_worker: int = STRESS_KEYS_PER_WORKER) -> StressResult:
    """
    Drive `workers` threads through seeded operation streams, then verify.

    Each worker mutates only its own key range; gets and scans roam every
    worker's range. The run fails with StressTimeoutError when it does not
    finish within `timeout` seconds.
    """
    if workers < 1:
        raise ValueError("workers must be at least 1")
    if isinstance(mix, str):
        mix = OpMix.parse(mix)

    seeds = np.random.SeedSequence(seed).spawn(workers)
    plans = [_plan(seeds[w], w, workers, ops_per_worker, mix, keys_per_worker) for w in range(workers)]
    initial = dict(tree.scan(KEY_LOW, KEY_HIGH, inclusive_high=False))
    ai_before = tree.latches.waits(AI)

    logger.info(f"Stress start: {workers} workers x {ops_per_worker} ops, mix {mix}, seed {seed}")
    started = time.perf_counter()
    executor = ThreadPoolExecutor(max_workers=workers, thread_name_prefix='stress')
    futures = [executor.submit(_run_worker, tree, plan) for plan in plans]
    _, not_done = wait(futures, timeout=timeout)
    elapsed = time.perf_counter() - started
    if not_done:
        executor.shutdown(wait=False, cancel_futures=True)
        raise StressTimeoutError(f"{len(not_done)} of {workers} workers unfinished after {timeout}s")
    executor.shutdown()

    log = OracleLog.merge(f.result() for f in futures)
    report = audit(tree, quiesced=True)
    expected, mismatches = oracle_replay(log, initial)
    actual = dict(tree.scan(KEY_LOW, KEY_HIGH, inclusive_high=False))
    if actual != expected:
        missing = sorted(set(expected) - set(actual))
        extra = sorted(set(actual) - set(expected))
        changed = sorted(k for k in set(actual) & set(expected) if actual[k] != expected[k])
        mismatches.append(f"final contents differ: {len(missing)} missing, {len(extra)} unexpected, "
                          f"{len(changed)} with wrong values")

    result = StressResult(log, report, mismatches, elapsed, workers * ops_per_worker,
                          tree.latches.waits(AI) - ai_before, tree.access_intent_enabled)
    logger.info(f"Stress finished in {elapsed:.2f}s ({result.throughput:.0f} ops/s): "
                f"{'pass' if result.passed else 'FAIL'}")
    if result.mismatches:
        logger.warning(f"Stress found {len(result.mismatches)} oracle mismatches")
    return result
