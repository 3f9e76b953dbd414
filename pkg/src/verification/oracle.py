"""
Operation log of a stress run and its single-threaded reference replay.
"""

import io
import logging
import threading
from dataclasses import dataclass
from typing import Dict, Iterable, Iterator, List, Mapping, Optional, Set, Tuple

import pandas as pd

logger = logging.getLogger(__name__)

OPS = ('put', 'remove', 'get')
COLUMNS = ['worker', 'op', 'key', 'value', 'result']
NONE_TEXT = '-'


@dataclass(frozen=True)
class OracleRecord:
    worker: int
    op: str
    key: bytes
    value: Optional[int] = None
    result: Optional[int] = None  # get: value found; remove: 1 or 0; put: None

    def __post_init__(self):
        if self.op not in OPS:
            raise ValueError(f"unknown oracle op {self.op!r}")


def _text(value: Optional[int]) -> str:
    return NONE_TEXT if value is None else str(value)


def _number(text: str) -> Optional[int]:
    return None if text == NONE_TEXT else int(text)


class OracleLog:
    """Append-only record list; each worker's records keep their issue order"""

    def __init__(self, records: Optional[Iterable[OracleRecord]] = None):
        self._records: List[OracleRecord] = list(records or [])
        self._lock = threading.Lock()

    def append(self, record: OracleRecord) -> None:
        with self._lock:
            self._records.append(record)

    def extend(self, records: Iterable[OracleRecord]) -> None:
        with self._lock:
            self._records.extend(records)

    @classmethod
    def merge(cls, logs: Iterable[Iterable[OracleRecord]]) -> 'OracleLog':
        merged = cls()
        for records in logs:
            merged.extend(records)
        return merged

    def for_worker(self, worker: int) -> List[OracleRecord]:
        return [r for r in self if r.worker == worker]

    def workers(self) -> List[int]:
        return sorted({r.worker for r in self})

    def __len__(self) -> int:
        with self._lock:
            return len(self._records)

    def __iter__(self) -> Iterator[OracleRecord]:
        with self._lock:
            return iter(list(self._records))

    def to_frame(self) -> pd.DataFrame:
        rows = [(r.worker, r.op, r.key.hex(), r.value, r.result) for r in self]
        frame = pd.DataFrame(rows, columns=COLUMNS, dtype=object)
        return frame.astype({'worker': 'int64'})

    def to_text(self) -> str:
        """One tab-separated record per line: worker, op, key hex, value, result"""
        rows = [(r.worker, r.op, r.key.hex(), _text(r.value), _text(r.result)) for r in self]
        if not rows:
            return ''
        frame = pd.DataFrame(rows, columns=COLUMNS)
        return frame.to_csv(sep='\t', index=False, header=False, lineterminator='\n')

    @classmethod
    def from_text(cls, text: str) -> 'OracleLog':
        if not text.strip():
            return cls()
        frame = pd.read_csv(io.StringIO(text), sep='\t', header=None, names=COLUMNS,
                            dtype=str, keep_default_na=False)
        return cls(
            OracleRecord(int(row.worker), row.op, bytes.fromhex(row.key),
                         _number(row.value), _number(row.result))
            for row in frame.itertuples(index=False)
        )


def _owners(log: OracleLog) -> Tuple[Dict[bytes, int], Dict[bytes, Set[int]]]:
    owners: Dict[bytes, int] = {}
    written: Dict[bytes, Set[int]] = {}
    for record in log:
        if record.op == 'get':
            continue
        owner = owners.setdefault(record.key, record.worker)
        if owner != record.worker:
            raise ValueError(
                f"key {record.key.hex()} mutated by workers {owner} and {record.worker}"
            )
        if record.op == 'put':
            written.setdefault(record.key, set()).add(record.value)
    return owners, written


def oracle_replay(log: OracleLog, initial: Optional[Mapping[bytes, int]] = None
                  ) -> Tuple[Dict[bytes, int], List[str]]:
    """
    Replay a single-writer-per-key log into a sorted reference map.

    Gets of a worker's own keys must match its replayed state exactly. Gets
    of keys owned by another worker must return absent or some value that
    key held at some point.

    Returns:
        (expected contents in key order, list of mismatch descriptions)
    """
    owners, written = _owners(log)
    state: Dict[bytes, int] = dict(initial or {})
    for key, value in state.items():
        written.setdefault(key, set()).add(value)

    mismatches: List[str] = []
    for worker in log.workers():
        for record in log.for_worker(worker):
            key = record.key
            if record.op == 'put':
                state[key] = record.value
            elif record.op == 'remove':
                present = key in state
                state.pop(key, None)
                if record.result is not None and bool(record.result) != present:
                    mismatches.append(f"worker {worker} remove {key.hex()}: tree said "
                                      f"{bool(record.result)}, oracle {present}")
            elif owners.get(key, worker) == worker:
                if record.result != state.get(key):
                    mismatches.append(f"worker {worker} get {key.hex()}: tree {record.result}, "
                                      f"oracle {state.get(key)}")
            elif record.result is not None and record.result not in written.get(key, ()):
                mismatches.append(f"worker {worker} get {key.hex()}: value {record.result} "
                                  f"never written")

    if mismatches:
        logger.warning(f"Oracle replay found {len(mismatches)} mismatches")
    return dict(sorted(state.items())), mismatches
