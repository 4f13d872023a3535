"""FP-tree with a header table, node links and the pair-count array.

Nodes live in a flat arena: parallel Python lists indexed by node id, with a
single dict mapping ``parent * stride + position`` to the child id. Node 0 is
the root. Items inside a tree are *positions* into the tree's
:class:`FreqString`; positions grow toward the leaves.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np
from scipy import sparse

from .txdb import ScanPosition, Scanner

# item u32 + count u32 + parent, first-child, sibling and node-link pointers
NODE_COST = 40

NIL = -1


class BudgetTooSmall(ValueError):
    pass


@dataclass
class FreqString:
    """Frequent items in descending count order, ties by ascending item id."""

    items: list
    counts: list

    def __post_init__(self):
        self.index = {item: pos for pos, item in enumerate(self.items)}

    def __len__(self):
        return len(self.items)

    @classmethod
    def from_counts(cls, counts, min_count: int, exclude=()) -> "FreqString":
        pairs = [(-c, i) for i, c in counts.items() if c >= min_count and i not in exclude]
        pairs.sort()
        return cls([i for _, i in pairs], [-c for c, _ in pairs])

    def positions(self, transaction) -> list:
        """Frequent items of ``transaction`` as ascending positions."""
        idx = self.index
        return sorted(idx[i] for i in transaction if i in idx)

    def subset(self, items) -> "FreqString":
        keep = set(items)
        pairs = [(i, c) for i, c in zip(self.items, self.counts) if i in keep]
        return FreqString([i for i, _ in pairs], [c for _, c in pairs])


class MemoryBudget:
    """Byte budget for tree nodes.

    Trial construction stops once a tree's nodes would exceed
    ``(1 - headroom) * budget_bytes``. Conditional trees built while mining are
    charged too but never abort; exceeding the full budget only records a
    violation.
    """

    def __init__(self, budget_bytes: int, node_cost: int = NODE_COST, headroom: float = 0.10):
        if not 0 <= headroom < 1:
            raise ValueError("headroom must be in [0, 1)")
        self.budget_bytes = int(budget_bytes)
        self.node_cost = node_cost
        self.headroom = headroom
        share = (1 - Fraction(str(headroom))) * self.budget_bytes
        self.tree_limit_nodes = math.floor(share / node_cost)
        if self.tree_limit_nodes < 1:
            raise BudgetTooSmall(f"budget of {budget_bytes} bytes cannot hold a single node")
        self.used = 0
        self.peak = 0
        self.violations = 0

    @classmethod
    def unlimited(cls) -> "MemoryBudget":
        return cls(1 << 62)

    def allocate(self, nbytes: int):
        self.used += nbytes
        if self.used > self.peak:
            self.peak = self.used
        if self.used > self.budget_bytes:
            self.violations += 1

    def release(self, nbytes: int):
        self.used -= nbytes


class PairArray:
    """Counts of every pair of frequent items, indexed by tree position.

    ``counts[j, k]`` is the number of inserted transactions containing both
    position j and position k; the diagonal holds single-item counts.
    """

    def __init__(self, n: int):
        self.n = n
        self.counts = np.zeros((n, n), dtype=np.int64)

    def get(self, j: int, k: int) -> int:
        return int(self.counts[j, k])

    def row(self, j: int) -> np.ndarray:
        return self.counts[j]

    def add_rows(self, rows: Sequence[Sequence[int]], weights: Optional[Sequence[int]] = None):
        if not rows or self.n == 0:
            return
        lens = np.fromiter((len(r) for r in rows), dtype=np.int64, count=len(rows))
        total = int(lens.sum())
        if total == 0:
            return
        cols = np.fromiter((p for r in rows for p in r), dtype=np.int64, count=total)
        ridx = np.repeat(np.arange(len(rows)), lens)
        w = np.ones(len(rows)) if weights is None else np.asarray(weights, dtype=np.float64)
        if self.n <= 256 and len(rows) * self.n <= 1 << 21:
            x = np.zeros((len(rows), self.n))
            x[ridx, cols] = 1.0
            prod = x.T @ (x * w[:, None])
        else:
            x = sparse.csr_matrix((np.ones(total), (ridx, cols)), shape=(len(rows), self.n))
            prod = (x.T @ sparse.diags(w) @ x).toarray()
        # float64 is exact well past any realistic transaction count
        self.counts += np.rint(prod).astype(np.int64)

    def frequent_partners(self, j: int, min_count: int, limit: Optional[int] = None) -> list:
        row = self.counts[j]
        cand = np.nonzero(row >= min_count)[0]
        out = [int(k) for k in cand if k != j]
        if limit is not None:
            out = [k for k in out if k < limit]
        return out


class FpTree:
    def __init__(self, order: FreqString, budget: Optional[MemoryBudget] = None):
        self.order = order
        n = len(order)
        self.n_items = n
        self._stride = n + 1
        self.item = [NIL]
        self.count = [0]
        self.parent = [NIL]
        self.link = [NIL]
        self.head = [NIL] * n
        self.header_count = [0] * n
        self.nodes_per_pos = [0] * n
        self.edges = {}
        self.inserted_tx = 0
        self.budget = budget
        self._charged = 0
        self.discarded = False

    @property
    def n_nodes(self) -> int:
        if self.count is None:
            return self._final_nodes
        return len(self.count) - 1

    def _new_node(self, node: int, p: int) -> int:
        child = len(self.count)
        self.item.append(p)
        self.count.append(0)
        self.parent.append(node)
        self.link.append(self.head[p])
        self.head[p] = child
        self.nodes_per_pos[p] += 1
        self.edges[node * self._stride + p] = child
        return child

    def insert(self, path: Sequence[int], weight: int = 1):
        """Insert ascending positions ``path`` with multiplicity ``weight``."""
        edges = self.edges
        stride = self._stride
        count = self.count
        hc = self.header_count
        node = 0
        count[0] += weight
        for p in path:
            child = edges.get(node * stride + p)
            if child is None:
                child = self._new_node(node, p)
            count[child] += weight
            hc[p] += weight
            node = child
        self.inserted_tx += weight

    def insert_within(self, path: Sequence[int], limit_nodes: int) -> bool:
        """Insert one transaction unless doing so would exceed ``limit_nodes``."""
        edges = self.edges
        stride = self._stride
        node = 0
        matched = 0
        for p in path:
            child = edges.get(node * stride + p)
            if child is None:
                break
            node = child
            matched += 1
        if self.n_nodes + len(path) - matched > limit_nodes:
            return False
        self.insert(path)
        return True

    def is_single_path(self) -> bool:
        parent = self.parent
        return all(parent[i] == i - 1 for i in range(2, len(parent)))

    def single_path(self) -> list:
        """``[(position, count), ...]`` root to leaf; only valid for a single path."""
        return [(self.item[i], self.count[i]) for i in range(1, len(self.count))]

    def node_list(self, p: int):
        node = self.head[p]
        link = self.link
        while node != NIL:
            yield node
            node = link[node]

    def path_to_root(self, node: int) -> list:
        """Positions strictly above ``node``, leaf-side first."""
        out = []
        parent = self.parent
        item = self.item
        node = parent[node]
        while node > 0:
            out.append(item[node])
            node = parent[node]
        return out

    def end_counts(self) -> list:
        """Per node, the number of inserted transactions whose path ends there."""
        end = list(self.count)
        parent = self.parent
        count = self.count
        for n in range(1, len(count)):
            end[parent[n]] -= count[n]
        return end

    def transactions(self):
        """Yield ``(positions, multiplicity)`` for every distinct inserted path.

        The root entry (transactions with no frequent item) is included when
        non-zero, with an empty position list.
        """
        end = self.end_counts()
        if end[0]:
            yield [], end[0]
        for n in range(1, len(end)):
            if end[n]:
                path = self.path_to_root(n)
                path.reverse()
                path.append(self.item[n])
                yield path, end[n]

    def charge(self):
        """Charge the current node count to the budget (idempotent top-up)."""
        if self.budget is None:
            return
        cost = self.n_nodes * self.budget.node_cost
        if cost > self._charged:
            self.budget.allocate(cost - self._charged)
            self._charged = cost

    def discard(self):
        """Release the arena in one step."""
        if self.discarded:
            return
        self._final_nodes = self.n_nodes
        self.discarded = True
        if self.budget is not None and self._charged:
            self.budget.release(self._charged)
            self._charged = 0
        self.item = self.count = self.parent = self.link = None
        self.edges = None

    def dump(self) -> str:
        """Indented ``item:count`` lines, children in ascending item-id order."""
        children = {}
        for n in range(1, len(self.count)):
            children.setdefault(self.parent[n], []).append(n)
        items = self.order.items
        lines = []

        def walk(node, depth):
            kids = sorted(children.get(node, []), key=lambda c: items[self.item[c]])
            for c in kids:
                lines.append("  " * depth + f"{items[self.item[c]]}:{self.count[c]}")
                walk(c, depth + 1)

        walk(0, 0)
        return "\n".join(lines)


@dataclass
class BuildResult:
    tree: FpTree
    array: PairArray
    complete: bool
    position: Optional[ScanPosition] = None
    t_D: int = 0

    @property
    def aborted(self) -> bool:
        return not self.complete


def build_tree(scanner: Scanner, order: FreqString, budget: MemoryBudget,
               fill_array: bool = True, transform=None, batch: int = 4096) -> BuildResult:
    """Build an FP-tree from ``scanner`` until the budget's tree share is hit.

    ``transform`` maps a raw transaction to its ascending position list
    (default: ``order.positions``). On abort the tree keeps every transaction
    inserted so far; the returned position marks the first one left out, and
    with ``fill_array`` the remaining transactions are scanned into the pair
    array without growing the tree.
    """
    tree = FpTree(order, budget)
    arr = PairArray(len(order))
    to_pos = transform or order.positions
    limit = budget.tree_limit_nodes
    pending = []
    total = 0
    position = None
    it = iter(scanner)
    for t in it:
        path = to_pos(t)
        total += 1
        if not tree.insert_within(path, limit):
            position = scanner.position_before_last()
            if fill_array:
                pending.append(path)
            break
        pending.append(path)
        if len(pending) >= batch:
            arr.add_rows(pending)
            pending = []
    if position is not None:
        if fill_array:
            for t in it:
                pending.append(to_pos(t))
                total += 1
                if len(pending) >= batch:
                    arr.add_rows(pending)
                    pending = []
        else:
            scanner.close()
    arr.add_rows(pending)
    tree.charge()
    return BuildResult(tree, arr, position is None, position, total)


def tree_from_transactions(transactions, order: FreqString, budget: Optional[MemoryBudget] = None,
                           weights=None):
    """Unbounded in-memory construction from raw item transactions."""
    tree = FpTree(order, budget)
    arr = PairArray(len(order))
    paths = [order.positions(t) for t in transactions]
    if weights is None:
        for p in paths:
            tree.insert(p)
    else:
        for p, w in zip(paths, weights):
            tree.insert(p, w)
    arr.add_rows(paths, weights)
    tree.charge()
    return tree, arr


def conditional_tree(tree: FpTree, array: PairArray, p: int, min_count: int,
                     budget: Optional[MemoryBudget] = None):
    """Build T_{alpha.i} for position ``p`` with one walk of its node list.

    The header of the new tree comes straight from array row ``p``; the new
    pair array is filled while the prefix paths are inserted.
    """
    row = array.counts[p, :p]
    cand = np.nonzero(row >= min_count)[0].tolist()
    items = tree.order.items
    cand.sort(key=lambda k: (-int(row[k]), items[k]))
    order = FreqString([items[k] for k in cand], [int(row[k]) for k in cand])
    remap = {k: i for i, k in enumerate(cand)}
    ctree = FpTree(order, budget if budget is not None else tree.budget)
    carr = PairArray(len(cand))
    if not cand:
        return ctree, carr
    paths = []
    weights = []
    parent = tree.parent
    item = tree.item
    count = tree.count
    for node in tree.node_list(p):
        path = []
        a = parent[node]
        while a > 0:
            q = remap.get(item[a])
            if q is not None:
                path.append(q)
            a = parent[a]
        if path:
            path.sort()
            paths.append(path)
            weights.append(count[node])
    for path, w in zip(paths, weights):
        ctree.insert(path, w)
    ctree.inserted_tx = tree.header_count[p]
    carr.add_rows(paths, weights)
    ctree.charge()
    return ctree, carr


@dataclass
class TreeShapeStats:
    nu: int
    nu_prefix: list
    mu: list = field(default_factory=list)


def shape_stats(tree: FpTree, array: PairArray, min_count: int) -> TreeShapeStats:
    """Node counts of the trimmed trees and estimated conditional-tree sizes.

    ``nu_prefix[j]`` counts nodes at positions <= j. ``mu[j]`` counts the
    distinct nodes P (position k < j) lying above some node of j with
    ``A[j, k] >= min_count``.
    """
    n = tree.n_items
    nu_prefix = np.cumsum(np.asarray(tree.nodes_per_pos, dtype=np.int64)).tolist() if n else []
    mu = [0] * n
    stamp = [NIL] * len(tree.count)
    parent = tree.parent
    item = tree.item
    counts = array.counts
    for j in range(1, n):
        ok = (counts[j, :j] >= min_count).tolist()
        if not any(ok):
            continue
        m = 0
        for node in tree.node_list(j):
            a = parent[node]
            while a > 0 and stamp[a] != j:
                stamp[a] = j
                if ok[item[a]]:
                    m += 1
                a = parent[a]
        mu[j] = m
    return TreeShapeStats(tree.n_nodes, nu_prefix, mu)
