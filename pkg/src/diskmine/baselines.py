"""Reference miners: naive per-item projection, SON partitioning, brute force."""
from __future__ import annotations

import math
import os
import tempfile
import time
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from pathlib import Path
from typing import Optional

from .driver import Diskmine, MineConfig, MiningResult, MiningTask, RunReport, TrialResult
from .fpgrowth import MemorySink, ResultSink, fpgrowth_star
from .fptree import (BudgetTooSmall, FpTree, FreqString, MemoryBudget, PairArray, build_tree)
from .projection import naive_project
from .txdb import (BlockConfig, DbLocator, IoStats, ScanPosition, _as_threshold,
                   open_scan, read_all)

ORACLE_MAX_ITEMS = 24


class TooLarge(ValueError):
    pass


class CandidateOverflow(RuntimeError):
    pass


# -- naive projection -------------------------------------------------------


class NaiveDiskmine(Diskmine):
    """Per-item projection: every frequent item gets its own projected database.

    The trial build stops at the budget without completing a pair array, and
    each child level recounts its items with a scan of its own.
    """

    def __init__(self, config: Optional[MineConfig] = None, sink: Optional[ResultSink] = None):
        super().__init__(config, sink)
        self.report.algorithm = "naive"

    def trialmainmine(self, task: MiningTask, fs: FreqString) -> TrialResult:
        with open_scan(task.db, self.cfg, self.stats) as scan:
            res = build_tree(scan, fs, self.budget, fill_array=False)
        if res.complete:
            fpgrowth_star(res.tree, res.array, task.alpha, self.min_count, self.emitter,
                          use_single_path=self.config.single_path, budget=self.budget)
        res.tree.discard()
        return TrialResult(fs, res)

    def _decompose(self, task: MiningTask, trial: TrialResult):
        fs = trial.freqstring
        level = self.report.groups_per_level
        level[task.depth] = level.get(task.depth, 0) + len(fs)
        if task.depth == 1:
            self.report.root_groups = len(fs)
        before = self.stats.bytes_written
        locs = naive_project(task.db, fs, self.cfg, self.stats, self._tmp, task.alpha)
        self.report.add_projected(task.depth, self.stats.bytes_written - before)
        for item, support, loc in zip(fs.items, fs.counts, locs):
            self._emit(task.alpha + (item,), support)
            try:
                self._mine(MiningTask(loc, task.alpha + (item,), task.depth + 1))
            finally:
                if loc.path.exists():
                    loc.path.unlink()


def naive_diskmine(locator: DbLocator, threshold, config: Optional[MineConfig] = None,
                   sink: Optional[ResultSink] = None) -> MiningResult:
    miner = NaiveDiskmine(config, sink)
    report = miner.run(locator, threshold)
    results = miner.sink.results if isinstance(miner.sink, MemorySink) else None
    return MiningResult(results, report)


def memory_only(locator: DbLocator, threshold, config: Optional[MineConfig] = None,
                sink: Optional[ResultSink] = None) -> MiningResult:
    """Plain FP-growth* with no memory cap: one counting scan, one build scan."""
    config = config or MineConfig()
    config = MineConfig(**{**config.__dict__, "budget_bytes": 1 << 62})
    miner = Diskmine(config, sink)
    report = miner.run(locator, threshold)
    report.algorithm = "memory-only"
    report.budget_bytes = 0
    results = miner.sink.results if isinstance(miner.sink, MemorySink) else None
    return MiningResult(results, report)


# -- partitioning -----------------------------------------------------------


@dataclass
class Cell:
    start: ScanPosition
    n_transactions: int
    local_threshold: int
    tree_nodes: int


@dataclass
class Partition:
    """Cells are consecutive, non-overlapping runs of the original database."""

    cells: list = field(default_factory=list)

    @property
    def cell_size(self) -> int:
        return max((c.n_transactions for c in self.cells), default=0)

    @property
    def n_transactions(self) -> int:
        return sum(c.n_transactions for c in self.cells)


class CandidateSet:
    """Locally frequent itemsets, spilled to a temp file past ``spill_limit``."""

    def __init__(self, cfg: BlockConfig, stats: IoStats, tmp_dir=None,
                 spill_limit: Optional[int] = None, max_candidates: Optional[int] = None):
        self.cfg = cfg
        self.stats = stats
        self.tmp_dir = tmp_dir
        self.spill_limit = spill_limit
        self.max_candidates = max_candidates
        self.items = set()
        self.spill_path: Optional[Path] = None
        self.spilled_bytes = 0
        self.spills = 0

    def add(self, itemset: tuple):
        self.items.add(itemset)
        if self.spill_limit is not None and len(self.items) > self.spill_limit:
            self._spill()

    def _spill(self):
        if self.tmp_dir is None:
            raise CandidateOverflow(
                f"more than {self.spill_limit} candidates and no temporary directory to spill to")
        if self.spill_path is None:
            fd, name = tempfile.mkstemp(prefix="candidates-", suffix=".txt", dir=self.tmp_dir)
            os.close(fd)
            self.spill_path = Path(name)
        data = "".join(" ".join(map(str, c)) + "\n" for c in sorted(self.items)).encode()
        with open(self.spill_path, "ab") as fh:
            fh.write(data)
        start = self.spilled_bytes
        self.spilled_bytes += len(data)
        self.stats.bytes_written += len(data)
        self.stats.blocks_written += self.cfg.blocks(start, self.spilled_bytes)
        self.spills += 1
        self.items = set()

    def load(self) -> set:
        """All distinct candidates, reading back whatever was spilled."""
        out = set(self.items)
        if self.spill_path is not None:
            with open(self.spill_path, "rb") as fh:
                for line in fh:
                    out.add(tuple(map(int, line.split())))
            self.stats.bytes_read += self.spilled_bytes
            self.stats.blocks_read += self.cfg.blocks(0, self.spilled_bytes)
            self.spill_path.unlink()
            self.spill_path = None
        if self.max_candidates is not None and len(out) > self.max_candidates:
            raise CandidateOverflow(f"{len(out)} candidates exceed the limit of {self.max_candidates}")
        return out


class _Trie:
    __slots__ = ("children", "count", "terminal")

    def __init__(self):
        self.children = {}
        self.count = 0
        self.terminal = False


def _build_trie(candidates) -> _Trie:
    root = _Trie()
    for c in candidates:
        node = root
        for i in c:
            node = node.children.setdefault(i, _Trie())
        node.terminal = True
    return root


def _count_into(node: _Trie, t: tuple, start: int):
    children = node.children
    for k in range(start, len(t)):
        child = children.get(t[k])
        if child is not None:
            child.count += 1
            if child.children:
                _count_into(child, t, k + 1)


def _trie_items(node: _Trie, prefix=()):
    for i, child in node.children.items():
        p = prefix + (i,)
        if child.terminal:
            yield p, child.count
        yield from _trie_items(child, p)


@dataclass
class PartitionResult:
    results: Optional[dict]
    report: RunReport
    partition: Partition
    candidates: int


def partition_mine(locator: DbLocator, threshold, config: Optional[MineConfig] = None,
                   sink: Optional[ResultSink] = None, spill_limit: Optional[int] = None,
                   max_candidates: Optional[int] = None,
                   n_transactions: Optional[int] = None) -> PartitionResult:
    """Two-pass SON mining with memory-sized cells.

    Pass one splits the database into consecutive cells, each cut where its
    FP-tree would outgrow the budget, and mines every cell at the local
    threshold ``ceil(fraction * cell size)``. Pass two counts all candidates
    exactly. An absolute threshold needs ``n_transactions`` to be turned into
    the fraction.
    """
    config = config or MineConfig()
    threshold = _as_threshold(threshold)
    if threshold.is_fraction:
        xi = threshold.fraction
    elif n_transactions:
        xi = Fraction(threshold.resolved_count, n_transactions)
    else:
        raise ValueError("partition mining with an absolute support needs the transaction count")
    sink = sink if sink is not None else MemorySink()
    cfg = BlockConfig(config.block_size)
    stats = IoStats()
    budget = MemoryBudget(config.budget_bytes, config.node_cost, config.headroom)
    limit = budget.tree_limit_nodes
    t0 = time.perf_counter()
    tmp_base = config.tmp_dir
    if tmp_base:
        Path(tmp_base).mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix="partition-", dir=tmp_base))
    cands = CandidateSet(cfg, stats, tmp, spill_limit, max_candidates)
    partition = Partition()
    total = 0
    db_bytes = 0

    def mine_cell(cell_tx, start, trial_order):
        local = max(1, math.ceil(xi * len(cell_tx)))
        counts = Counter(i for t in cell_tx for i in t)
        keep = [i for i in trial_order.items if counts[i] >= local]
        order = FreqString(keep, [counts[i] for i in keep])
        tree = FpTree(order, budget)
        arr = PairArray(len(order))
        paths = [order.positions(t) for t in cell_tx]
        for p in paths:
            tree.insert(p)
        arr.add_rows(paths)
        tree.charge()
        partition.cells.append(Cell(start, len(cell_tx), local, tree.n_nodes))
        cell_sink = MemorySink()
        fpgrowth_star(tree, arr, (), local, cell_sink, use_single_path=config.single_path,
                      budget=budget)
        tree.discard()
        for items in cell_sink.results:
            cands.add(items)

    try:
        # pass 1
        with open_scan(locator, cfg, stats) as scan:
            buf = []      # (transaction, start position)
            occ = 0
            cap = 4 * limit
            it = iter(scan)
            exhausted = False
            while buf or not exhausted:
                while not exhausted and occ < cap:
                    pos = scan.position()
                    t = next(it, None)
                    if t is None:
                        exhausted = True
                        break
                    buf.append((t, pos))
                    occ += len(t)
                    total += 1
                if not buf:
                    break
                cut, trial_order = _fitting_prefix([t for t, _ in buf], limit)
                if cut == 0:
                    raise BudgetTooSmall(
                        f"a single transaction of {len(buf[0][0])} items exceeds the tree budget")
                mine_cell([t for t, _ in buf[:cut]], buf[0][1], trial_order)
                occ -= sum(len(t) for t, _ in buf[:cut])
                buf = buf[cut:]
            db_bytes = scan.offset
        min_count = threshold.resolve(total)

        # pass 2
        candidates = cands.load()
        trie = _build_trie(sorted(candidates))
        wanted = set(trie.children)
        with open_scan(locator, cfg, stats) as scan:
            for t in scan:
                t = tuple(i for i in t if i in wanted)
                if t:
                    _count_into(trie, t, 0)
        n_out = 0
        for items, count in _trie_items(trie):
            if count >= min_count:
                sink.emit(items, count)
                n_out += 1
    finally:
        sink.close()
        if cands.spill_path is not None and cands.spill_path.exists():
            cands.spill_path.unlink()
        try:
            tmp.rmdir()
        except OSError:
            pass

    report = RunReport(
        algorithm="partition", io=stats, budget_violations=budget.violations,
        itemsets_emitted=n_out, wall_time=time.perf_counter() - t0, peak_tree_bytes=budget.peak,
        budget_bytes=config.budget_bytes, block_size=config.block_size, db_bytes=db_bytes,
        n_transactions=total, min_count=min_count, root_groups=len(partition.cells),
        extra={"cells": len(partition.cells), "cell_size": partition.cell_size,
               "candidates": len(candidates), "spilled_bytes": cands.spilled_bytes,
               "spills": cands.spills})
    results = sink.results if isinstance(sink, MemorySink) else None
    return PartitionResult(results, report, partition, len(candidates))


def _fitting_prefix(transactions, limit: int):
    """How many leading transactions fit one tree of at most ``limit`` nodes.

    The trial tree holds every item of the buffer. The cell's real tree
    keeps the same order but drops locally infrequent items, and deleting
    items from every path never adds nodes.
    """
    counts = Counter(i for t in transactions for i in t)
    order = FreqString.from_counts(counts, 1)
    tree = FpTree(order, MemoryBudget.unlimited())
    n = 0
    for t in transactions:
        if not tree.insert_within(order.positions(t), limit):
            break
        n += 1
    tree.discard()
    return n, order


# -- oracle -----------------------------------------------------------------


def brute_force_oracle(source, threshold) -> dict:
    """Count every subset of every transaction; keep those meeting the threshold.

    ``source`` is a :class:`DbLocator` or an iterable of transactions.
    """
    if isinstance(source, DbLocator):
        transactions = read_all(source)
    else:
        transactions = [tuple(sorted(set(t))) for t in source]
    distinct = {i for t in transactions for i in t}
    if len(distinct) > ORACLE_MAX_ITEMS:
        raise TooLarge(f"{len(distinct)} distinct items; the oracle handles at most {ORACLE_MAX_ITEMS}")
    min_count = _as_threshold(threshold).resolve(len(transactions))
    counts = Counter()
    for t in transactions:
        for r in range(1, len(t) + 1):
            counts.update(combinations(t, r))
    return {items: c for items, c in counts.items() if c >= min_count}
