"""
Structural audit of a B-link tree: level chains, parent entries, free list,
page conservation and latch-event anomalies.
"""

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Set, Tuple

import pandas as pd

from src.concurrency.latch_manager import AI, PM
from src.errors import BLinkError, CorruptPageError
from src.index.blink_tree import BLinkTree
from src.storage.page_format import Node, compare_keys
from src.storage.page_store import ROOT_PAGE

logger = logging.getLogger(__name__)


@dataclass
class AuditReport:
    height: int = 0
    top_page: int = 0
    level_counts: Dict[int, int] = field(default_factory=dict)
    live_pages: int = 0
    free_pages: int = 0
    leaked_pages: int = 0
    ai_waits: int = 0
    violations: List[str] = field(default_factory=list)
    latch_anomalies: List[str] = field(default_factory=list)

    @property
    def is_valid(self) -> bool:
        return not self.violations and not self.latch_anomalies

    def to_lines(self) -> List[str]:
        """Machine-readable key=value lines"""
        lines = [
            f"valid={str(self.is_valid).lower()}",
            f"height={self.height}",
            f"top_page={self.top_page}",
            f"live_pages={self.live_pages}",
            f"free_pages={self.free_pages}",
            f"leaked_pages={self.leaked_pages}",
            f"ai_waits={self.ai_waits}",
            f"violations={len(self.violations)}",
            f"latch_anomalies={len(self.latch_anomalies)}",
        ]
        lines.extend(f"level_{level}_nodes={count}" for level, count in sorted(self.level_counts.items(), reverse=True))
        return lines

    def to_text(self) -> str:
        """Human-readable summary followed by each problem found"""
        out = [
            f"audit: {'PASS' if self.is_valid else 'FAIL'}",
            f"height: {self.height}, top page: {self.top_page}",
            f"pages: {self.live_pages} live, {self.free_pages} free, {self.leaked_pages} leaked",
        ]
        for level, count in sorted(self.level_counts.items(), reverse=True):
            out.append(f"  level {level}: {count} node(s)")
        out.append(f"violations: {len(self.violations)}")
        out.extend(f"  - {v}" for v in self.violations)
        if self.latch_anomalies:
            out.append(f"latch anomalies: {len(self.latch_anomalies)}")
            out.extend(f"  - {a}" for a in self.latch_anomalies)
        return '\n'.join(out)

    def to_frame(self) -> pd.DataFrame:
        """One row per level, root first"""
        rows = [{'level': level, 'nodes': count} for level, count in sorted(self.level_counts.items(), reverse=True)]
        return pd.DataFrame(rows, columns=['level', 'nodes'])


def audit(tree: BLinkTree, quiesced: bool = True) -> AuditReport:
    """
    Check the tree's structural invariants without changing it.

    Args:
        tree: handle on the tree to inspect
        quiesced: no mutator is running; enables the cross-level, free-list
            and page-conservation checks that need a stable image

    Returns:
        AuditReport; an empty violation list means every check passed
    """
    report = AuditReport(top_page=tree.store.header.top_page)
    levels: Dict[int, List[Tuple[int, Node]]] = {}
    broken: Set[int] = set()

    try:
        root = tree.peek_node(ROOT_PAGE) if quiesced else None
    except CorruptPageError as e:
        report.violations.append(f"root page unreadable: {e}")
        return _finish(tree, report)
    height = root.level + 1 if root is not None else tree.height
    report.height = height
    if root is not None:
        if root.deleted or not root.is_rightmost or root.link:
            report.violations.append("root page is deleted or has a sibling")
        if tree.height != height:
            report.violations.append(f"handle height {tree.height} disagrees with root level {root.level}")

    for level in range(height - 1, -1, -1):
        try:
            nodes = _walk_level(tree, level, quiesced)
        except BLinkError as e:
            report.violations.append(f"level {level}: walk failed: {e}")
            broken.add(level)
            continue
        levels[level] = nodes
        report.level_counts[level] = len(nodes)
        if _check_level(level, nodes, report.violations):
            broken.add(level)

    if quiesced:
        for level in range(height - 1, 0, -1):
            if level in broken or level - 1 in broken:
                continue
            _check_children(level, levels[level], levels[level - 1], report.violations)
        _check_pages(tree, levels, report)
        if tree.latches.live_entries():
            report.violations.append(f"{tree.latches.live_entries()} page(s) still have latch state")
    else:
        report.live_pages = sum(report.level_counts.values())

    return _finish(tree, report)


def _finish(tree: BLinkTree, report: AuditReport) -> AuditReport:
    _check_latch_events(tree, report)
    if report.is_valid:
        logger.info(f"Audit passed: height {report.height}, {report.live_pages} live pages, "
                    f"{report.free_pages} free")
    else:
        for violation in report.violations:
            logger.warning(f"Audit violation: {violation}")
        for anomaly in report.latch_anomalies:
            logger.warning(f"Latch anomaly: {anomaly}")
    return report


def _walk_level(tree: BLinkTree, level: int, quiesced: bool) -> List[Tuple[int, Node]]:
    if not quiesced:
        return tree.level_nodes(level)

    nodes = []
    seen: Set[int] = set()
    page = tree.leftmost(level)
    while page:
        if page in seen:
            raise CorruptPageError(f"link cycle through page {page}")
        seen.add(page)
        node = tree.peek_node(page)
        nodes.append((page, node))
        page = node.link
    return nodes


def _check_level(level: int, nodes: List[Tuple[int, Node]], violations: List[str]) -> bool:
    """Chain checks for one level; True when the chain itself is broken"""
    found = len(violations)
    previous: Optional[bytes] = None
    for index, (page, node) in enumerate(nodes):
        where = f"level {level} page {page}"
        if node.deleted:
            violations.append(f"{where}: deleted node on the live chain")
        if node.level != level:
            violations.append(f"{where}: node claims level {node.level}")
        last = index == len(nodes) - 1
        if node.is_rightmost != last:
            violations.append(f"{where}: stopper fence {'missing from' if last else 'before'} the end of the level")
        if previous is not None and compare_keys(previous, node.fence_key) >= 0:
            violations.append(f"{where}: fence {node.fence_key.hex()} not above previous fence {previous.hex()}")
        if node.is_rightmost:
            stopper_deleted = node.slots[-1].deleted
            if level == 0 and not stopper_deleted:
                violations.append(f"{where}: leaf stopper slot is live")
            if level > 0 and stopper_deleted:
                violations.append(f"{where}: branch stopper entry is deleted")
        previous = node.fence_key
    return len(violations) > found


def _check_children(level: int, parents: List[Tuple[int, Node]], children: List[Tuple[int, Node]],
                    violations: List[str]) -> None:
    """Live parent entries, in order, name every child once with its fence as key"""
    entries = [(slot.key, slot.value) for _, node in parents for slot in node.slots if not slot.deleted]
    expected = [(node.fence_key, page) for page, node in children]
    for index, (entry, child) in enumerate(zip(entries, expected)):
        if entry != child:
            violations.append(
                f"level {level} entry {index} ({entry[0].hex() or 'stopper'} -> {entry[1]}) "
                f"does not match child page {child[1]} with fence {child[0].hex() or 'stopper'}"
            )
            return
    if len(entries) != len(expected):
        violations.append(f"level {level} has {len(entries)} live entries for {len(expected)} child nodes")


def _check_pages(tree: BLinkTree, levels: Dict[int, List[Tuple[int, Node]]], report: AuditReport) -> None:
    reachable = {page for nodes in levels.values() for page, _ in nodes}
    report.live_pages = len(reachable)
    try:
        free = tree.store.free_pages()
    except CorruptPageError as e:
        report.violations.append(f"free list: {e}")
        return
    report.free_pages = len(free)
    for page in sorted(reachable.intersection(free)):
        report.violations.append(f"page {page} is both reachable and on the free list")

    accounted = reachable.union(free)
    leaked = 0
    for page in range(ROOT_PAGE, report.top_page + 1):
        if page in accounted:
            continue
        try:
            node = tree.peek_node(page)
        except CorruptPageError:
            node = None
        if node is not None and node.deleted:
            leaked += 1
        else:
            report.violations.append(f"page conservation: page {page} is not reachable, free or a deleted node")
    report.leaked_pages = leaked


def _check_latch_events(tree: BLinkTree, report: AuditReport) -> None:
    report.ai_waits = tree.latches.waits(AI)
    if tree.access_intent_enabled and report.ai_waits:
        report.latch_anomalies.append(f"AccessIntent waited {report.ai_waits} time(s)")

    holding: Dict[int, int] = {}
    overlaps = defaultdict(int)
    for event in tree.latches.events():
        if event.kind is not PM:
            continue
        if event.action == 'grant':
            if event.page in holding:
                overlaps[event.page] += 1
            holding[event.page] = event.actor
        elif event.action == 'release':
            holding.pop(event.page, None)
    for page, count in sorted(overlaps.items()):
        report.latch_anomalies.append(f"ParentModification intervals overlap {count} time(s) on page {page}")
