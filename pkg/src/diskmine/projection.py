"""Decomposition machinery: projections, grouping, pruning plans, cost model."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .fptree import FpTree, FreqString, PairArray, TreeShapeStats
from .txdb import (BINARY, BlockConfig, DbLocator, IoStats, ScanPosition, encode_binary,
                   open_scan, projected_db_path)


class NoFrequentItems(Exception):
    pass


class ProjectionError(RuntimeError):
    pass


def compute_freqstring(counts, min_count: int, exclude=()) -> FreqString:
    fs = FreqString.from_counts(counts, min_count, exclude)
    if not len(fs):
        raise NoFrequentItems(f"no item reaches support {min_count}")
    return fs


class ProjectionWriters:
    """Buffered appenders for many projected databases at once.

    Keeps one byte buffer per target and appends to the file when it grows
    large, so hundreds of targets never need hundreds of open descriptors.
    Files are created lazily: a target that receives nothing has no file.
    """

    def __init__(self, paths, cfg: BlockConfig, stats: IoStats, flush_bytes: int = 1 << 16):
        self.paths = [Path(p) for p in paths]
        self.cfg = cfg
        self.stats = stats
        self.flush_bytes = flush_bytes
        self.buffers = [bytearray() for _ in self.paths]
        self.sizes = [0] * len(self.paths)
        self.n_transactions = [0] * len(self.paths)
        self._created = [False] * len(self.paths)

    def write(self, j: int, data: bytes, times: int = 1):
        buf = self.buffers[j]
        buf += data * times
        self.sizes[j] += len(data) * times
        self.n_transactions[j] += times
        if len(buf) >= self.flush_bytes:
            self._flush(j)

    def _flush(self, j: int):
        buf = self.buffers[j]
        if not buf:
            return
        with open(self.paths[j], "ab" if self._created[j] else "wb") as fh:
            fh.write(buf)
        self._created[j] = True
        self.buffers[j] = bytearray()

    def close(self) -> list:
        """Flush everything; return a locator per target (None when empty)."""
        out = []
        for j, path in enumerate(self.paths):
            self._flush(j)
            if self.sizes[j]:
                self.stats.bytes_written += self.sizes[j]
                self.stats.blocks_written += self.cfg.blocks(0, self.sizes[j])
                out.append(DbLocator(path, BINARY))
            else:
                out.append(None)
        return out


def naive_project(locator: DbLocator, freqstring: FreqString, cfg: BlockConfig, stats: IoStats,
                  tmp_dir, alpha=()) -> list:
    """One projected database per frequent item: {t & {i_1..i_j} : i_j in t}."""
    if not len(freqstring):
        raise NoFrequentItems("empty freqstring")
    items = freqstring.items
    paths = [projected_db_path(tmp_dir, alpha, j) for j in range(len(items))]
    writers = ProjectionWriters(paths, cfg, stats)
    with open_scan(locator, cfg, stats) as scan:
        for t in scan:
            pos = freqstring.positions(t)
            ids = [items[p] for p in pos]
            for idx, p in enumerate(pos):
                writers.write(p, encode_binary(sorted(ids[:idx + 1])))
    return writers.close()


@dataclass
class Statistics:
    t_D: int
    t_T: int
    shape: TreeShapeStats
    array: PairArray
    n_frequent: int

    @property
    def nu(self) -> int:
        return self.shape.nu


@dataclass
class Grouping:
    """Consecutive runs of freqstring positions; group 0 holds positions < cut_point."""

    groups: list
    cut_point: int

    def __post_init__(self):
        flat = [p for g in self.groups for p in g]
        if flat != list(range(len(flat))) or any(not g for g in self.groups):
            raise ValueError(f"groups {self.groups} do not partition the freqstring")

    @property
    def k(self) -> int:
        return len(self.groups)

    def labels(self, freqstring: FreqString) -> list:
        return [[freqstring.items[p] for p in g] for g in self.groups]

    @classmethod
    def from_sizes(cls, sizes) -> "Grouping":
        groups, start = [], 0
        for s in sizes:
            groups.append(list(range(start, start + s)))
            start += s
        return cls(groups, sizes[0] if sizes else 0)


METHOD1_MIN_TREE_TX = 100


def estimate_cutpoint(stats: Statistics, budget=None) -> int:
    """Number of leading freqstring items mined from one trimmed tree.

    Largest k with ``(nu[k] + max_{j<=k} mu[j]) * t_D <= nu * t_T``. Falls back
    to ``floor(n * t_T / t_D)`` when the partial tree is too small (fewer than
    100 transactions) or carries no shape data. Always at least 1.
    """
    n = stats.n_frequent
    if n == 0:
        return 0
    t_D, t_T = stats.t_D, stats.t_T
    if t_T >= t_D:
        return n
    nu_prefix = stats.shape.nu_prefix
    if t_T < METHOD1_MIN_TREE_TX or not any(nu_prefix):
        return min(n, max(1, n * t_T // t_D))
    mu = stats.shape.mu
    bound = stats.nu * t_T
    best = 1
    max_mu = 0
    for k in range(1, n + 1):
        max_mu = max(max_mu, mu[k - 1])
        if (nu_prefix[k - 1] + max_mu) * t_D <= bound:
            best = k
        else:
            break
    return best


def group_items(stats: Statistics, budget=None, cutpoint: Optional[int] = None) -> Grouping:
    """Greedy grouping of the items past the cut point by accumulated mu."""
    n = stats.n_frequent
    if cutpoint is None:
        cutpoint = estimate_cutpoint(stats)
    cutpoint = max(1, min(cutpoint, n))
    groups = [list(range(cutpoint))]
    t_D, t_T = stats.t_D, stats.t_T
    bound = stats.nu * t_T
    mu = stats.shape.mu
    current, acc = [], 0
    for m in range(cutpoint, n):
        if current and (acc + mu[m]) * t_D > bound:
            groups.append(current)
            current, acc = [], 0
        current.append(m)
        acc += mu[m]
    if current:
        groups.append(current)
    return Grouping(groups, cutpoint)


@dataclass
class GroupPlan:
    index: int
    masters: list
    slaves: list
    removed_slaves: list = field(default_factory=list)
    removed_masters: list = field(default_factory=list)
    direct_outputs: list = field(default_factory=list)
    write_db: bool = True
    estimated_nodes: float = 0.0

    @property
    def kept_masters(self) -> list:
        removed = set(self.removed_masters)
        return [m for m in self.masters if m not in removed]

    @property
    def kept_items(self) -> list:
        drop = set(self.removed_masters) | set(self.removed_slaves)
        return sorted(p for p in self.masters + self.slaves if p not in drop)

    @property
    def needs_projection(self) -> bool:
        return bool(self.kept_masters)


def estimated_group_nodes(stats: Statistics, group: list, first: bool) -> float:
    ratio = stats.t_D / stats.t_T if stats.t_T else float("inf")
    if first:
        return stats.shape.nu_prefix[group[-1]] * ratio
    return sum(stats.shape.mu[m] for m in group) * ratio


def plan_groups(stats: Statistics, grouping: Grouping, min_count: int, masters_filter=None,
                prune: bool = True, skip_writes: bool = True) -> list:
    """Per-group master/slave split, array-based removals and direct outputs.

    ``masters_filter`` restricts master items to a set of positions (used when
    the database itself only contributes itemsets that contain one of them);
    other items of a group then act as slaves. Direct outputs are
    ``(positions, support)`` pairs, support taken from the pair array.
    """
    arr = stats.array.counts
    n = stats.n_frequent
    plans = []
    emitted_pairs = set()
    end = 0
    for j, group in enumerate(grouping.groups):
        end = group[-1] + 1
        masters = [p for p in group if masters_filter is None or p in masters_filter]
        master_set = set(masters)
        slaves = [p for p in range(end) if p not in master_set]
        plan = GroupPlan(j, masters, slaves,
                         estimated_nodes=estimated_group_nodes(stats, group, j == 0))
        if prune and masters:
            for a in masters:
                row = arr[a, :end]
                partners = [int(x) for x in (row >= min_count).nonzero()[0] if x != a]
                if len(partners) > 1:
                    continue
                plan.removed_masters.append(a)
                plan.direct_outputs.append(((a,), int(arr[a, a])))
                if partners:
                    b = partners[0]
                    pair = (min(a, b), max(a, b))
                    if pair not in emitted_pairs:
                        emitted_pairs.add(pair)
                        plan.direct_outputs.append((pair, int(arr[a, b])))
            mrows = arr[masters, :end] >= min_count
            for s in slaves:
                if not mrows[:, s].any():
                    plan.removed_slaves.append(s)
        if skip_writes and 2 * len(masters) > n:
            plan.write_db = False
        plans.append(plan)
    return plans


def partner_masks(counts, min_count: int) -> list:
    """Per position, a bitmask of the positions it is frequent together with."""
    freq = np.asarray(counts) >= min_count
    if freq.size == 0:
        return [0] * len(freq)
    packed = np.packbits(freq, axis=1, bitorder="little")
    return [int.from_bytes(row.tobytes(), "little") for row in packed]


class _GroupRouter:
    """Maps a transaction (ascending positions) to its per-group projections.

    With ``partners`` (see :func:`partner_masks`) a non-master item survives
    in a transaction only if it is frequent with some master of the group
    present in that same transaction. Any frequent itemset holding a master
    m has every other member frequent with m, so no support is lost.
    """

    def __init__(self, plans, freqstring: FreqString, partners: Optional[list] = None):
        self.items = freqstring.items
        self.partners = partners
        n = len(freqstring)
        self.master_of = [[] for _ in range(n)]
        self.keep = {}
        self.targets = []
        for plan in plans:
            if not plan.needs_projection:
                continue
            t = len(self.targets)
            self.targets.append(plan)
            for m in plan.kept_masters:
                self.master_of[m].append(t)
            keep = [False] * n
            for p in plan.kept_items:
                keep[p] = True
            self.keep[t] = keep

    def route(self, positions):
        partners = self.partners
        if partners is None:
            hit = set()
            for p in positions:
                hit.update(self.master_of[p])
            for t in hit:
                keep = self.keep[t]
                yield t, [self.items[p] for p in positions if keep[p]]
            return
        allowed = {}
        for p in positions:
            for t in self.master_of[p]:
                allowed[t] = allowed.get(t, 0) | partners[p]
        for t, mask in allowed.items():
            keep = self.keep[t]
            yield t, [self.items[p] for p in positions if keep[p] and mask >> p & 1]


def project_database(locator: DbLocator, freqstring: FreqString, plans: list, cfg: BlockConfig,
                     stats: IoStats, tmp_dir, alpha=(), partial_tree: Optional[FpTree] = None,
                     position: Optional[ScanPosition] = None,
                     partners: Optional[list] = None) -> list:
    """Write the projected database of every plan with ``write_db`` set.

    With a partial tree and its resume position, transactions already in the
    tree are regenerated from the tree's paths and only the remainder is read
    from disk. ``partners`` turns on per-transaction pruning. Returns
    ``[(plan, locator or None), ...]`` for all plans.
    """
    writing = [p for p in plans if p.write_db and p.needs_projection]
    router = _GroupRouter(writing, freqstring, partners)
    paths = [projected_db_path(tmp_dir, alpha, p.index) for p in router.targets]
    writers = ProjectionWriters(paths, cfg, stats)

    def emit(positions, times=1):
        for t, ids in router.route(positions):
            if ids:
                writers.write(t, encode_binary(sorted(ids)), times)

    start = None
    if partial_tree is not None:
        if position is None:
            raise ProjectionError("a partial tree needs its resume position")
        seen = 0
        for path, mult in partial_tree.transactions():
            seen += mult
            if path:
                emit(path, mult)
        if seen != partial_tree.inserted_tx or seen != position.transactions_consumed:
            raise ProjectionError(
                f"partial tree yields {seen} transactions, expected {partial_tree.inserted_tx}")
        start = position
    if router.targets:
        with open_scan(locator, cfg, stats, start) as scan:
            for t in scan:
                emit(freqstring.positions(t))
    locs = dict(zip((p.index for p in router.targets), writers.close()))
    return [(p, locs.get(p.index)) for p in plans]


def project_plain(locator: DbLocator, freqstring: FreqString, grouping: Grouping, cfg: BlockConfig,
                  stats: IoStats, tmp_dir, alpha=()) -> list:
    """Grouped projection straight from a full scan, no removals (reference path)."""
    plans = [GroupPlan(j, list(g), [p for p in range(g[0])]) for j, g in enumerate(grouping.groups)]
    return project_database(locator, freqstring, plans, cfg, stats, tmp_dir, alpha)


@dataclass
class CostModel:
    D: float
    B: float
    M: float = 1.0
    T: float = 1.0
    c: float = 0.1
    n: float = 1.0
    k: float = 1.0

    def __post_init__(self):
        if not 0 < self.c < 1:
            raise ValueError("shrink ratio c must lie in (0, 1)")
        if min(self.D, self.B, self.M, self.T) <= 0:
            raise ValueError("sizes must be positive")


def passes(M: float, T: float, c: float) -> int:
    """1 + ceil(log_c(M / T)); a tree that already fits needs one pass."""
    if T <= M:
        return 1
    x = math.log(M / T) / math.log(c)
    # guard exact powers of c against float noise
    return 1 + math.ceil(x - 1e-9)


def predict_costs(model: CostModel) -> dict:
    """Closed-form pass count and block-I/O predictions."""
    d = model.D / model.B
    return {
        "passes": passes(model.M, model.T, model.c),
        "io_general": 2 * d + 3 * (model.k + 1) / 2 * d,
        "io_naive": 2 * d + model.n * 1.5 * d,
        "io_aggressive": 2 * d + model.k * 1.5 * d,
        "io_diskmine": 1.5 * d + model.k * d,
    }


class PlanLog:
    """JSON-lines log of every grouping decision in a run."""

    def __init__(self, path=None):
        self.path = Path(path) if path else None
        self.records = []

    def add(self, **record):
        self.records.append(record)

    def write(self):
        if self.path is None:
            return
        with open(self.path, "w") as fh:
            for r in self.records:
                fh.write(json.dumps(r, default=_jsonable) + "\n")


def _jsonable(x):
    if hasattr(x, "tolist"):
        return x.tolist()
    if hasattr(x, "__dataclass_fields__"):
        return asdict(x)
    return str(x)
