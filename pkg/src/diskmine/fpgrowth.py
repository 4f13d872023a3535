"""In-memory FP-growth* over :class:`~diskmine.fptree.FpTree`.

Each conditional tree is seeded from the parent's pair-array row, so a
header item needs only one walk of its node list.
"""
from __future__ import annotations

import heapq
import os
import tempfile
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path
from typing import Iterable, Optional

from .fptree import FpTree, MemoryBudget, PairArray, conditional_tree


@dataclass(frozen=True)
class Itemset:
    items: tuple
    support: int


class ResultSink:
    """Collects emitted itemsets; subclasses may stream them elsewhere."""

    def __init__(self):
        self.n_emitted = 0

    def emit(self, items: Iterable[int], support: int):
        self.n_emitted += 1
        self._store(tuple(sorted(items)), support)

    def _store(self, items: tuple, support: int):
        raise NotImplementedError

    def close(self):
        pass


class MemorySink(ResultSink):
    """In-memory ``{itemset: support}``; optionally raises on a repeated itemset."""

    def __init__(self, check_duplicates: bool = False):
        super().__init__()
        self.results = {}
        self.check_duplicates = check_duplicates

    def _store(self, items, support):
        if self.check_duplicates and items in self.results:
            raise DuplicateItemset(items)
        self.results[items] = support

    def sorted_items(self):
        return sorted(self.results.items(), key=lambda kv: (len(kv[0]), kv[0]))


class FileSink(ResultSink):
    """Streams itemsets in FIMI result format: ``1 4 7 (12)`` per line."""

    def __init__(self, path):
        super().__init__()
        self.path = Path(path)
        self._fh = open(self.path, "w")

    def _store(self, items, support):
        self._fh.write(format_itemset(items, support))

    def close(self):
        if not self._fh.closed:
            self._fh.close()


class DuplicateItemset(AssertionError):
    def __init__(self, items):
        super().__init__(f"itemset emitted twice: {items}")
        self.items = items


def format_itemset(items, support) -> str:
    return " ".join(map(str, items)) + f" ({support})\n"


def parse_result_line(line: str):
    line = line.strip()
    if not line:
        return None
    head, sep, tail = line.rpartition(" (")
    if not sep or not tail.endswith(")"):
        if line.startswith("(") and line.endswith(")"):
            return (), int(line[1:-1])
        raise ValueError(f"not a result line: {line!r}")
    items = tuple(sorted(int(x) for x in head.split()))
    return items, int(tail[:-1])


def read_results(path) -> dict:
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            try:
                parsed = parse_result_line(line)
            except ValueError as e:
                raise ValueError(f"{path}:{lineno}: {e}") from None
            if parsed is not None:
                out[parsed[0]] = parsed[1]
    return out


def write_results(results: dict, path):
    """Write ``{itemset: support}`` sorted by (size, items)."""
    with open(path, "w") as fh:
        for items, sup in sorted(results.items(), key=lambda kv: (len(kv[0]), kv[0])):
            fh.write(format_itemset(items, sup))


def sort_result_file(path, chunk_lines: int = 1 << 20, tmp_dir=None):
    """Rewrite a result file in (size, items) order, merging sorted runs on disk."""
    def key(line):
        items, _ = parse_result_line(line)
        return len(items), items

    path = Path(path)
    runs = []
    try:
        with open(path) as fh:
            while True:
                lines = [ln for _, ln in zip(range(chunk_lines), fh)]
                if not lines:
                    break
                lines.sort(key=key)
                fd, name = tempfile.mkstemp(prefix="run-", suffix=".txt",
                                            dir=tmp_dir or path.parent)
                with os.fdopen(fd, "w") as out:
                    out.writelines(lines)
                runs.append(name)
        handles = [open(r) for r in runs]
        try:
            with open(path, "w") as out:
                out.writelines(heapq.merge(*handles, key=key))
        finally:
            for h in handles:
                h.close()
    finally:
        for r in runs:
            os.unlink(r)


def single_path_shortcut(tree: FpTree) -> Optional[list]:
    """The ``[(item_id, count), ...]`` chain if ``tree`` is a single path."""
    if tree.n_nodes == 0 or not tree.is_single_path():
        return None
    items = tree.order.items
    return [(items[p], c) for p, c in tree.single_path()]


def _emit_chain(chain, suffix, sink, masters):
    # supports along a chain are non-increasing, so a subset's support is the
    # count at its deepest member
    for d in range(len(chain)):
        item, sup = chain[d]
        for r in range(d + 1):
            for rest in combinations(chain[:d], r):
                if masters is not None and item not in masters and not any(i in masters for i, _ in rest):
                    continue
                sink.emit(suffix + (item,) + tuple(i for i, _ in rest), sup)


def fpgrowth_star(tree: FpTree, array: PairArray, suffix, min_count: int, sink: ResultSink,
                  master_filter=None, use_single_path: bool = True,
                  budget: Optional[MemoryBudget] = None):
    """Emit every itemset frequent in ``tree`` joined with ``suffix``.

    With ``master_filter`` (a set of item ids) only itemsets containing at
    least one master item are emitted.
    """
    _mine(tree, array, tuple(suffix), min_count, sink, master_filter, use_single_path, budget)


def _mine(tree, array, suffix, min_count, sink, masters, use_single_path, budget):
    if tree.n_nodes == 0:
        return
    if use_single_path:
        chain = single_path_shortcut(tree)
        if chain is not None:
            _emit_chain([c for c in chain if c[1] >= min_count], suffix, sink, masters)
            return
    items = tree.order.items
    # a non-master suffix can still lead to itemsets holding an earlier master
    first_master = None
    if masters is not None:
        first_master = min((p for p, i in enumerate(items) if i in masters), default=None)
        if first_master is None:
            return
    for p in range(tree.n_items - 1, -1, -1):
        item = items[p]
        sup = tree.header_count[p]
        if sup < min_count:
            continue
        new_suffix = suffix + (item,)
        if masters is None or item in masters:
            sink.emit(new_suffix, sup)
            inherited = None
        elif p > first_master:
            inherited = masters
        else:
            continue
        if p == 0:
            continue
        ctree, carr = conditional_tree(tree, array, p, min_count, budget)
        if ctree.n_items:
            _mine(ctree, carr, new_suffix, min_count, sink, inherited, use_single_path, budget)
        ctree.discard()


def mine_transactions(transactions, min_count: int, use_single_path: bool = True) -> dict:
    """Convenience in-memory miner: ``{sorted itemset tuple: support}``."""
    from collections import Counter

    from .fptree import FreqString, tree_from_transactions

    transactions = list(transactions)
    counts = Counter(i for t in transactions for i in t)
    order = FreqString.from_counts(counts, min_count)
    tree, arr = tree_from_transactions(transactions, order)
    sink = MemorySink(check_duplicates=True)
    fpgrowth_star(tree, arr, (), min_count, sink, use_single_path=use_single_path)
    tree.discard()
    return sink.results
