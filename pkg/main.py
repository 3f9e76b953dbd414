#!/usr/bin/env python3
"""
B-link Tree Index - command-line front end
"""

import argparse
import csv
import logging
import os
import sys
from logging.handlers import RotatingFileHandler
from typing import List, Optional

# Add project root to path
project_root = os.path.dirname(os.path.abspath(__file__))
sys.path.append(project_root)

import pandas as pd

from config.runtime import TreeConfig, config as runtime_config
from config.settings import (
    DEFAULT_TREE_FILE,
    EXIT_CORRUPT,
    EXIT_NOT_FOUND,
    EXIT_OK,
    EXIT_USAGE,
)
from src.errors import BLinkError, PageOutOfRangeError
from src.index.blink_tree import BLinkTree
from src.storage.page_format import PageConfig
from src.verification import audit, stress

logger = logging.getLogger(__name__)

TEXT_FLAG = 1 << 63
TEXT_BYTES = 7


def setup_logging(verbose: bool = False):
    """Setup logging configuration"""
    settings = runtime_config.logging
    os.makedirs(os.path.dirname(settings.file_path) or '.', exist_ok=True)

    logging.basicConfig(
        level=logging.DEBUG if verbose else getattr(logging, settings.level.upper(), logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            RotatingFileHandler(settings.file_path, maxBytes=settings.max_file_size,
                                backupCount=settings.backup_count),
            logging.StreamHandler(sys.stderr)
        ]
    )


def encode_value(text: str) -> int:
    """Decimal integers below 2^63 as themselves; short text packed with the high bit set"""
    if text.isascii() and text.isdigit() and (text == '0' or not text.startswith('0')):
        number = int(text)
        if number < TEXT_FLAG:
            return number
    raw = text.encode('utf-8')
    if len(raw) > TEXT_BYTES:
        raise ValueError(f"value {text!r} is neither an integer below 2^63 nor text of at most {TEXT_BYTES} bytes")
    return TEXT_FLAG | (len(raw) << 56) | int.from_bytes(raw, 'little')


def decode_value(value: int) -> str:
    if not value & TEXT_FLAG:
        return str(value)
    length = (value >> 56) & 0x7F
    raw = (value & ((1 << 56) - 1)).to_bytes(TEXT_BYTES, 'little')[:length]
    return raw.decode('utf-8', errors='replace')


def parse_key(text: str, as_hex: bool) -> bytes:
    if as_hex:
        try:
            return bytes.fromhex(text)
        except ValueError as e:
            raise ValueError(f"key {text!r} is not valid hex") from e
    return text.encode('utf-8')


def format_key(key: bytes, as_hex: bool) -> str:
    return key.hex() if as_hex else key.decode('utf-8', errors='backslashreplace')


def tree_config(args) -> TreeConfig:
    return runtime_config.tree.with_overrides(
        access_intent_enabled=False if args.no_access_intent else None,
        cache_capacity=args.cache_capacity
    )


def open_tree(args, create: bool = False) -> BLinkTree:
    """Open the tree file named by --file; --page-bits only applies when creating"""
    if args.page_bits is not None:
        PageConfig(args.page_bits)
    if create and not (os.path.exists(args.file) and os.path.getsize(args.file) > 0):
        return BLinkTree.create(args.file, tree_config(args), args.page_bits)
    return BLinkTree.open(args.file, tree_config(args))


def run_create(args) -> int:
    """Create an empty tree file"""
    with BLinkTree.create(args.file, tree_config(args), args.page_bits) as tree:
        print(f"created {args.file} page_bits={tree.cfg.page_bits} max_key_length={tree.cfg.max_key_length}")
    return EXIT_OK


def run_put(args) -> int:
    with open_tree(args) as tree:
        tree.put(parse_key(args.key, args.hex), encode_value(args.value))
    return EXIT_OK


def run_get(args) -> int:
    with open_tree(args) as tree:
        value = tree.get(parse_key(args.key, args.hex))
    if value is None:
        return EXIT_NOT_FOUND
    print(decode_value(value))
    return EXIT_OK


def run_del(args) -> int:
    with open_tree(args) as tree:
        removed = tree.remove(parse_key(args.key, args.hex))
    return EXIT_OK if removed else EXIT_NOT_FOUND


def run_scan(args) -> int:
    """Emit key TAB value for every key in [low, high)"""
    low = parse_key(args.low, args.hex) if args.low is not None else None
    high = parse_key(args.high, args.hex) if args.high is not None else None
    with open_tree(args) as tree:
        for key, value in tree.scan(low, high, inclusive_high=False):
            print(f"{format_key(key, args.hex)}\t{decode_value(value)}")
    return EXIT_OK


def read_records(path: str) -> pd.DataFrame:
    """One record per line: key, optionally TAB value"""
    source = sys.stdin if path == '-' else path
    if source is not sys.stdin and os.path.getsize(path) == 0:
        return pd.DataFrame(columns=['key', 'value'])
    return pd.read_csv(source, sep='\t', header=None, names=['key', 'value'], dtype=str,
                       keep_default_na=False, quoting=csv.QUOTE_NONE)


def run_load(args) -> int:
    """Bulk put from a key-per-line file"""
    records = read_records(args.input)
    loaded = 0
    with open_tree(args, create=True) as tree:
        for row in records.itertuples(index=False):
            value = row.value if isinstance(row.value, str) and row.value != '' else '0'
            tree.put(parse_key(row.key, args.hex), encode_value(value))
            loaded += 1
    logger.info(f"Loaded {loaded} records into {args.file}")
    print(f"loaded {loaded} records")
    return EXIT_OK


def run_dump_node(args) -> int:
    """Print one node's header and every slot"""
    with open_tree(args) as tree:
        if not 0 < args.page <= tree.store.header.top_page:
            raise PageOutOfRangeError(f"page {args.page} outside [1, {tree.store.header.top_page}]")
        if tree.store.is_free(args.page):
            print(f"page={args.page} free=true")
            return EXIT_OK
        node = tree.peek_node(args.page)
    print(f"page={args.page} level={node.level} deleted={str(node.deleted).lower()} "
          f"count={node.count} active={node.active} link={node.link} free_offset={node.free_offset}")
    for index, slot in enumerate(node.slots):
        key = slot.key.hex() if slot.key else '(stopper)'
        print(f"slot {index}: key={key} deleted={str(slot.deleted).lower()} value={slot.value}")
    return EXIT_OK


def run_audit(args) -> int:
    with open_tree(args) as tree:
        report = audit(tree, quiesced=True)
    print(report.to_text())
    return EXIT_OK if report.is_valid else EXIT_CORRUPT


def run_stress(args) -> int:
    """Concurrent stress run followed by audit and oracle comparison"""
    with open_tree(args, create=True) as tree:
        result = stress(tree, args.workers, args.ops, args.mix, args.seed,
                        timeout=args.timeout, keys_per_worker=args.keys_per_worker)
    for name, value in result.summary().items():
        print(f"{name}={value}")
    print(result.report.to_text())
    for mismatch in result.mismatches[:20]:
        print(f"mismatch: {mismatch}", file=sys.stderr)
    return EXIT_OK if result.passed else EXIT_CORRUPT


def run_stats(args) -> int:
    """Header fields and per-level node counts, then the counters of this process's own walk"""
    with open_tree(args) as tree:
        header = tree.store.header
        lines = [
            f"page_bits={header.page_bits}",
            f"page_size={tree.cfg.page_size}",
            f"root_page={header.root_page}",
            f"top_page={header.top_page}",
            f"free_head={header.free_head}",
            f"height={tree.height}",
        ]
        for level in range(tree.height - 1, -1, -1):
            lines.append(f"level_{level}_nodes={len(tree.level_nodes(level))}")
        lines.append(f"free_pages={tree.store.free_count()}")
        # everything below counts only this invocation's walk
        lines.append("counters_scope=this_command")
        counters = tree.latches.counters()
        for kind, count in counters['acquisitions'].items():
            lines.append(f"latch_acquisitions_{kind}={count}")
        for kind, count in counters['waits'].items():
            lines.append(f"latch_waits_{kind}={count}")
        for name, count in tree.store.cache_stats().items():
            lines.append(f"cache_{name}={count}")
        for name, count in tree.nodes.stats().items():
            lines.append(f"node_cache_{name}={count}")
    print('\n'.join(lines))
    return EXIT_OK


COMMANDS = {
    'create': run_create,
    'put': run_put,
    'get': run_get,
    'del': run_del,
    'scan': run_scan,
    'load': run_load,
    'dump-node': run_dump_node,
    'audit': run_audit,
    'stress': run_stress,
    'stats': run_stats,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--file', default=DEFAULT_TREE_FILE, help='Tree file')
    common.add_argument('--page-bits', type=int, help='Page size as a power of two (create only)')
    common.add_argument('--no-access-intent', action='store_true',
                        help='Skip AccessIntent coupling; consolidated pages are leaked, not freed')
    common.add_argument('--cache-capacity', type=int, help='Pages held in the page cache')
    common.add_argument('--hex', action='store_true', help='Keys are given and printed as hex')
    common.add_argument('--verbose', '-v', action='store_true', help='Enable verbose logging')

    parser = argparse.ArgumentParser(
        description="Concurrent B-link tree index",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python main.py create --file t.db --page-bits 12
  python main.py put --file t.db apple 42
  python main.py get --file t.db apple
  python main.py scan --file t.db --low a --high b
  python main.py stress --file t.db --workers 8 --ops 50000 --seed 7
  python main.py audit --file t.db
        """
    )
    sub = parser.add_subparsers(dest='command', required=True)

    sub.add_parser('create', parents=[common], help='Create an empty tree file')
    put = sub.add_parser('put', parents=[common], help='Insert or update a key')
    put.add_argument('key')
    put.add_argument('value')
    for name, text in (('get', 'Print the value of a key'), ('del', 'Delete a key')):
        cmd = sub.add_parser(name, parents=[common], help=text)
        cmd.add_argument('key')
    scan = sub.add_parser('scan', parents=[common], help='List keys in [low, high)')
    scan.add_argument('--low')
    scan.add_argument('--high')
    load = sub.add_parser('load', parents=[common], help='Bulk load key[TAB value] lines')
    load.add_argument('input', help="Input file, or '-' for standard input")
    dump = sub.add_parser('dump-node', parents=[common], help='Print one page as a node')
    dump.add_argument('page', type=int)
    sub.add_parser('audit', parents=[common], help='Check every structural invariant')
    defaults = runtime_config.stress
    st = sub.add_parser('stress', parents=[common], help='Concurrent stress run with oracle check')
    st.add_argument('--workers', type=int, default=defaults.workers)
    st.add_argument('--ops', type=int, default=defaults.ops_per_worker, help='Operations per worker')
    st.add_argument('--seed', type=int, default=defaults.seed)
    st.add_argument('--mix', default=defaults.mix, help='put/remove/get/scan percentages')
    st.add_argument('--timeout', type=float, default=defaults.timeout)
    st.add_argument('--keys-per-worker', type=int, default=defaults.keys_per_worker)
    sub.add_parser('stats', parents=[common],
                   help="Print header and level figures; latch and cache counters cover this command's walk only")
    return parser


def run(argv: Optional[List[str]] = None, log: bool = False) -> int:
    """Parse argv, execute one subcommand and return its exit status"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    if log:
        setup_logging(args.verbose)

    try:
        return COMMANDS[args.command](args)
    except (ValueError, PageOutOfRangeError, FileNotFoundError) as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except BLinkError as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CORRUPT
    except OSError as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


def main():
    """Main entry point"""
    return run(sys.argv[1:], log=True)


if __name__ == '__main__':
    sys.exit(main())
