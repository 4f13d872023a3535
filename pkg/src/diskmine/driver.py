"""The Diskmine driver: trial build, grouping, projection and recursion."""
from __future__ import annotations

import json
import logging
import shutil
import tempfile
import time
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from .fpgrowth import DuplicateItemset, MemorySink, ResultSink, fpgrowth_star
from .fptree import (NODE_COST, BuildResult, FreqString, MemoryBudget, build_tree,
                     shape_stats)
from .projection import (GroupPlan, Grouping, PlanLog, Statistics, estimate_cutpoint, group_items,
                         partner_masks, plan_groups, project_database)
from .txdb import (BlockConfig, DbLocator, IoStats, _as_threshold,
                   count_items, open_scan)

log = logging.getLogger(__name__)


class MaxDepthExceeded(RuntimeError):
    pass


@dataclass
class MineConfig:
    budget_bytes: int = 64 << 20
    block_size: int = 4096
    tmp_dir: Optional[str] = None
    node_cost: int = NODE_COST
    headroom: float = 0.10
    max_depth: int = 16
    # the three projection I/O savers: skip-write, reuse partial tree, array pruning
    skip_writes: bool = True
    reuse_tree: bool = True
    prune: bool = True
    single_path: bool = True
    debug: bool = False
    plan_log: Optional[str] = None

    def techniques_off(self) -> "MineConfig":
        return MineConfig(**{**asdict(self), "skip_writes": False, "reuse_tree": False, "prune": False})


@dataclass
class GroupRecord:
    alpha: list
    depth: int
    index: int
    items: list
    masters: list
    kind: str
    estimated_nodes: float
    actual_nodes: Optional[int] = None
    actual_complete: Optional[bool] = None
    removed_slaves: int = 0
    removed_masters: int = 0
    direct_outputs: int = 0
    write_db: bool = True
    projected_bytes: int = 0


@dataclass
class RunReport:
    algorithm: str = "diskmine"
    io: IoStats = field(default_factory=IoStats)
    recursion_depth: int = 1
    groups_per_level: dict = field(default_factory=dict)
    budget_violations: int = 0
    itemsets_emitted: int = 0
    wall_time: float = 0.0
    peak_tree_bytes: int = 0
    budget_bytes: int = 0
    block_size: int = 4096
    db_bytes: int = 0
    n_transactions: int = 0
    min_count: int = 0
    n_frequent: int = 0
    avg_frequent_per_tx: float = 0.0
    root_groups: int = 0
    projected_bytes_written: int = 0
    projected_bytes_per_level: dict = field(default_factory=dict)
    full_tree_nodes: Optional[int] = None
    groups: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("groups_per_level", "projected_bytes_per_level"):
            d[key] = {str(k): v for k, v in getattr(self, key).items()}
        return d

    def add_projected(self, depth: int, nbytes: int):
        self.projected_bytes_written += nbytes
        level = self.projected_bytes_per_level
        level[depth] = level.get(depth, 0) + nbytes

    def write(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        d = dict(d)
        d["io"] = IoStats(**d.get("io", {}))
        for key in ("groups_per_level", "projected_bytes_per_level"):
            d[key] = {int(k): v for k, v in d.get(key, {}).items()}
        d["groups"] = [g if isinstance(g, GroupRecord) else GroupRecord(**g)
                       for g in d.get("groups", [])]
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})

    @classmethod
    def read(cls, path) -> "RunReport":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class MiningTask:
    db: DbLocator
    alpha: tuple = ()
    depth: int = 1
    # fixed item order inherited from the parent level (None: derive from counts)
    order: Optional[list] = None
    masters: Optional[frozenset] = None
    # (item -> count, n_transactions) already known from the parent's pair array
    known_counts: Optional[tuple] = None
    record: Optional[GroupRecord] = None


@dataclass
class TrialResult:
    freqstring: FreqString
    build: Optional[BuildResult]
    statistics: Optional[Statistics] = None

    @property
    def mined(self) -> bool:
        return self.build is None or self.build.complete


class _Emitter:
    """Forwards to the sink, prefixing nothing; counts and optionally dedups."""

    def __init__(self, sink: ResultSink, debug: bool):
        self.sink = sink
        self.debug = debug
        self.seen = set() if debug else None
        self.n_emitted = 0

    def emit(self, items, support):
        if self.seen is not None:
            key = frozenset(items)
            if key in self.seen:
                raise DuplicateItemset(tuple(sorted(key)))
            self.seen.add(key)
        self.n_emitted += 1
        self.sink.emit(items, support)


class Diskmine:
    """One mining run over one database.

    Results stream to the sink as they are found. ``report`` accumulates I/O
    and recursion statistics.
    """

    def __init__(self, config: Optional[MineConfig] = None, sink: Optional[ResultSink] = None):
        self.config = config or MineConfig()
        self.sink = sink if sink is not None else MemorySink()
        self.emitter = _Emitter(self.sink, self.config.debug)
        self.cfg = BlockConfig(self.config.block_size)
        self.stats = IoStats()
        self.budget = MemoryBudget(self.config.budget_bytes, self.config.node_cost,
                                   self.config.headroom)
        self.report = RunReport(budget_bytes=self.config.budget_bytes,
                                block_size=self.config.block_size)
        self.plan_log = PlanLog(self.config.plan_log)
        self.min_count = 0
        self._tmp = None

    # -- public ---------------------------------------------------------

    def run(self, locator: DbLocator, threshold) -> RunReport:
        threshold = _as_threshold(threshold)
        t0 = time.perf_counter()
        self._tmp = self._make_tmp()
        ok = False
        try:
            counts = count_items(locator, self.cfg, self.stats)
            self.min_count = threshold.resolve(counts.n_transactions)
            self.report.db_bytes = counts.total_bytes
            self.report.n_transactions = counts.n_transactions
            self.report.min_count = self.min_count
            task = MiningTask(locator, known_counts=(counts.counts, counts.n_transactions))
            self._mine(task, root=True)
            ok = True
        finally:
            self.sink.close()
            self.plan_log.write()
            self._cleanup_tmp(ok)
        self.report.io = self.stats
        self.report.wall_time = time.perf_counter() - t0
        self.report.itemsets_emitted = self.emitter.n_emitted
        self.report.budget_violations = self.budget.violations
        self.report.peak_tree_bytes = self.budget.peak
        return self.report

    # -- temp files -----------------------------------------------------

    def _make_tmp(self) -> Path:
        base = self.config.tmp_dir
        if base is not None:
            Path(base).mkdir(parents=True, exist_ok=True)
        return Path(tempfile.mkdtemp(prefix="diskmine-", dir=base))

    def _cleanup_tmp(self, ok: bool):
        if self._tmp is None:
            return
        if ok:
            shutil.rmtree(self._tmp, ignore_errors=True)
        else:
            log.warning("run failed; keeping temporary files in %s", self._tmp)

    # -- algorithm ------------------------------------------------------

    def _emit(self, items, support):
        self.emitter.emit(items, support)

    def _freqstring(self, task: MiningTask) -> tuple:
        if task.known_counts is not None:
            counts, t_D = task.known_counts
        else:
            ic = count_items(task.db, self.cfg, self.stats)
            counts, t_D = ic.counts, ic.n_transactions
        thr = self.min_count
        exclude = set(task.alpha)
        if task.order is None:
            fs = FreqString.from_counts(counts, thr, exclude)
        else:
            keep = [i for i in task.order if counts.get(i, 0) >= thr and i not in exclude]
            fs = FreqString(keep, [counts[i] for i in keep])
        return fs, t_D

    def trialmainmine(self, task: MiningTask, fs: FreqString) -> TrialResult:
        """Optimistic full build; mines in place when the tree fits."""
        masters = task.masters
        with open_scan(task.db, self.cfg, self.stats) as scan:
            res = build_tree(scan, fs, self.budget, fill_array=True)
        tree = res.tree
        if task.record is not None:
            task.record.actual_nodes = tree.n_nodes
            task.record.actual_complete = res.complete
        if res.complete:
            fpgrowth_star(tree, res.array, task.alpha, self.min_count, self.emitter,
                          master_filter=masters, use_single_path=self.config.single_path,
                          budget=self.budget)
            tree.discard()
            return TrialResult(fs, res)
        st = Statistics(res.t_D, tree.inserted_tx, shape_stats(tree, res.array, self.min_count),
                        res.array, len(fs))
        return TrialResult(fs, res, st)

    def _mine(self, task: MiningTask, root: bool = False):
        if task.depth > self.config.max_depth:
            raise MaxDepthExceeded(f"recursion deeper than {self.config.max_depth} at alpha={task.alpha}")
        self.report.recursion_depth = max(self.report.recursion_depth, task.depth)
        fs, t_D = self._freqstring(task)
        if root:
            self.report.n_frequent = len(fs)
            if t_D:
                self.report.avg_frequent_per_tx = sum(fs.counts) / t_D
        if not len(fs):
            return
        if task.masters is not None and not any(i in task.masters for i in fs.items):
            return
        trial = self.trialmainmine(task, fs)
        if root and trial.mined:
            self.report.full_tree_nodes = trial.build.tree.n_nodes
        if trial.mined:
            return
        self._decompose(task, trial)

    def _decompose(self, task: MiningTask, trial: TrialResult):
        fs = trial.freqstring
        st = trial.statistics
        build = trial.build
        thr = self.min_count
        cut = estimate_cutpoint(st, self.budget)
        grouping = group_items(st, self.budget, cut)
        master_pos = None
        if task.masters is not None:
            master_pos = {fs.index[i] for i in task.masters if i in fs.index}
            if any(master_pos <= set(g) for g in grouping.groups) and len(master_pos) > 1:
                # no split among the masters: force one group per master so the
                # recursion always shrinks
                grouping = _split_masters(grouping, master_pos)
        plans = plan_groups(st, grouping, thr, master_pos, prune=self.config.prune,
                            skip_writes=self.config.skip_writes)
        for plan in plans:
            if plan.write_db is False and len(plan.kept_masters) <= 1:
                plan.write_db = True
        level = self.report.groups_per_level
        level[task.depth] = level.get(task.depth, 0) + grouping.k
        if task.depth == 1 and not task.alpha:
            self.report.root_groups = grouping.k

        for plan in plans:
            for positions, sup in plan.direct_outputs:
                self._emit(task.alpha + tuple(fs.items[p] for p in positions), sup)

        partners = partner_masks(st.array.counts, thr) if self.config.prune else None
        before = self.stats.bytes_written
        projected = project_database(
            task.db, fs, plans, self.cfg, self.stats, self._tmp, _tag(task),
            partial_tree=build.tree if self.config.reuse_tree else None,
            position=build.position, partners=partners)
        self.report.add_projected(task.depth, self.stats.bytes_written - before)
        build.tree.discard()

        for plan, loc in projected:
            rec = GroupRecord(
                alpha=list(task.alpha), depth=task.depth, index=plan.index,
                items=[fs.items[p] for p in grouping.groups[plan.index]],
                masters=[fs.items[p] for p in plan.kept_masters],
                kind="direct", estimated_nodes=plan.estimated_nodes,
                removed_slaves=len(plan.removed_slaves),
                removed_masters=len(plan.removed_masters),
                direct_outputs=len(plan.direct_outputs), write_db=plan.write_db,
                projected_bytes=loc.size() if loc is not None else 0)
            self.report.groups.append(rec)
            kept = plan.kept_masters
            try:
                if len(kept) == 1:
                    rec.kind = "recurse"
                    self._recurse_single(task, fs, st, plan, loc, rec)
                elif kept:
                    rec.kind = "mainmine"
                    self.mainmine(task, fs, plan, loc, rec, partners)
            finally:
                if loc is not None and loc.path.exists():
                    loc.path.unlink()
                self.plan_log.add(**asdict(rec))

    def _recurse_single(self, task: MiningTask, fs: FreqString, st: Statistics,
                        plan: GroupPlan, loc: Optional[DbLocator], rec: GroupRecord):
        """Singleton master: emit alpha.i, then Diskmine on D_{alpha.i}.

        The pair-array row of i already gives every count in D_{alpha.i}, so
        the child level skips its counting scan.
        """
        i = plan.kept_masters[0]
        item = fs.items[i]
        row = st.array.counts[i]
        support = int(row[i])
        self._emit(task.alpha + (item,), support)
        if loc is None:
            return
        counts = Counter({fs.items[p]: int(row[p]) for p in plan.kept_items if p != i})
        child = MiningTask(loc, task.alpha + (item,), task.depth + 1,
                           known_counts=(counts, support), record=rec)
        self._mine(child)

    def mainmine(self, task: MiningTask, fs: FreqString, plan: GroupPlan,
                 loc: Optional[DbLocator], rec: GroupRecord, partners: Optional[list] = None):
        """Several masters: one tree over D_{alpha.beta} in the parent's item order.

        Without a projected file (skip-write technique) the tree is built from
        D_alpha directly, keeping transactions that hold a kept master. If the
        tree outgrows the budget the group falls back to a recursive run
        restricted to its masters. ``partners`` (positions in ``fs``) enables
        the same per-transaction pruning the projections get.
        """
        kept = plan.kept_items
        order = FreqString([fs.items[p] for p in kept], [fs.counts[p] for p in kept])
        masters = frozenset(fs.items[p] for p in plan.kept_masters)
        if loc is not None:
            transform = order.positions
            source = loc
        else:
            transform = _master_filter(order, masters, fs, partners)
            source = task.db
        with open_scan(source, self.cfg, self.stats) as scan:
            res = build_tree(scan, order, self.budget, fill_array=False, transform=transform)
        rec.actual_nodes = res.tree.n_nodes
        rec.actual_complete = res.complete
        if res.complete:
            fpgrowth_star(res.tree, res.array, task.alpha, self.min_count, self.emitter,
                          master_filter=masters, use_single_path=self.config.single_path,
                          budget=self.budget)
            res.tree.discard()
            return
        res.tree.discard()
        rec.kind = "mainmine-fallback"
        log.info("group %s at alpha=%s outgrew its estimate; recursing", plan.index, task.alpha)
        if loc is None:
            only = GroupPlan(plan.index, plan.masters, plan.slaves, plan.removed_slaves,
                             plan.removed_masters, [], True, plan.estimated_nodes)
            before = self.stats.bytes_written
            [(_, loc)] = project_database(task.db, fs, [only], self.cfg, self.stats, self._tmp,
                                          _tag(task) + "-fb", partners=partners)
            self.report.add_projected(task.depth, self.stats.bytes_written - before)
        try:
            child = MiningTask(loc, task.alpha, task.depth + 1, order=order.items, masters=masters)
            self._mine(child)
        finally:
            if loc is not None and loc.path.exists():
                loc.path.unlink()


def _tag(task: MiningTask) -> str:
    tag = "-".join(map(str, task.alpha)) if task.alpha else "e"
    if task.masters is not None:
        # master-restricted levels share alpha with their parent
        tag += f"-m{task.depth}"
    return tag


def _split_masters(grouping: Grouping, master_pos: set) -> Grouping:
    groups = []
    run = []
    for p in (p for g in grouping.groups for p in g):
        if p in master_pos:
            if run:
                groups.append(run)
                run = []
            groups.append([p])
        else:
            run.append(p)
    if run:
        groups.append(run)
    return Grouping(groups, len(groups[0]))


def _master_filter(order: FreqString, masters: frozenset, fs: Optional[FreqString] = None,
                   partners: Optional[list] = None):
    """Transaction -> positions in ``order``, empty unless a master is present."""
    master_pos = {order.index[m] for m in masters}
    if partners is None:
        def transform(t):
            pos = order.positions(t)
            return pos if any(p in master_pos for p in pos) else []
        return transform

    fs_index = fs.index

    def pruned(t):
        pos = order.positions(t)
        mask = 0
        for p in pos:
            if p in master_pos:
                mask |= partners[fs_index[order.items[p]]]
        if not mask:
            return []
        return [p for p in pos if mask >> fs_index[order.items[p]] & 1]

    return pruned


def union_results(parts: Iterable, debug: bool = False) -> list:
    """Concatenate disjoint result streams of ``(items, support)``."""
    out = []
    seen = set()
    for part in parts:
        for items, sup in part:
            if debug:
                key = frozenset(items)
                if key in seen:
                    raise DuplicateItemset(tuple(sorted(key)))
                seen.add(key)
            out.append((tuple(items), sup))
    return out


@dataclass
class MiningResult:
    results: Optional[dict]
    report: RunReport


def diskmine(locator: DbLocator, threshold, config: Optional[MineConfig] = None,
             sink: Optional[ResultSink] = None) -> MiningResult:
    """Mine every frequent itemset of ``locator``; results in memory unless a sink is given."""
    miner = Diskmine(config, sink)
    report = miner.run(locator, threshold)
    results = miner.sink.results if isinstance(miner.sink, MemorySink) else None
    return MiningResult(results, report)
