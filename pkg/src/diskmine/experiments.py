"""Seed-fixed workloads and measurement helpers shared by scripts/ and the acceptance tests."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from pathlib import Path

from .datagen import GenParams, generate
from .driver import RunReport
from .fptree import NODE_COST
from .projection import CostModel, predict_costs
from .txdb import BINARY, DbLocator


@dataclass(frozen=True)
class Workload:
    name: str
    params: GenParams
    min_support: float

    def path(self, directory) -> Path:
        return Path(directory) / f"{self.name}-{self.params.seed}.db"

    def materialize(self, directory) -> DbLocator:
        """Generate the database once; later calls reuse the file."""
        loc = DbLocator(self.path(directory), BINARY)
        if not loc.path.exists():
            tmp = DbLocator(loc.path.with_suffix(".partial"), BINARY)
            generate(self.params, tmp)
            tmp.path.rename(loc.path)
            Path(str(tmp.path) + ".json").rename(str(loc.path) + ".json")
        return loc

    def to_dict(self) -> dict:
        return {"name": self.name, "min_support": self.min_support, **asdict(self.params)}


WORKLOADS = {
    # about 10 MiB of quest-style baskets; deep recursion at 1/20 of the tree
    "recursion": Workload("recursion", GenParams(n_transactions=131_000, n_items=1000,
                                                 avg_tx_len=20, avg_pattern_len=5, seed=1), 0.01),
    # uniform baskets, ~59 frequent items each but almost no frequent pairs
    "sparse": Workload("sparse", GenParams(n_transactions=3000, n_items=400, avg_tx_len=60,
                                           avg_pattern_len=12, correlation=0.0, seed=5), 0.05),
    # uniform baskets where every frequent pair is frequent, so pruning removes nothing
    "dense": Workload("dense", GenParams(n_transactions=3000, n_items=100, avg_tx_len=40,
                                         avg_pattern_len=4, correlation=0.0, seed=8), 0.1),
    # T100I20 shape, about 100 MB
    "scale": Workload("scale", GenParams(n_transactions=260_000, n_items=1000, avg_tx_len=100,
                                         avg_pattern_len=20, n_patterns=2000, seed=9), 0.05),
}


def fraction_of_tree(full_tree_nodes: int, fraction: float, node_cost: int = NODE_COST) -> int:
    """Byte budget equal to ``fraction`` of a tree with ``full_tree_nodes`` nodes."""
    return max(node_cost + 1, math.ceil(full_tree_nodes * node_cost * fraction))


def total_blocks(report: RunReport) -> int:
    return report.io.blocks_read + report.io.blocks_written


def formula_predictions(report: RunReport) -> dict:
    return predict_costs(CostModel(D=report.db_bytes, B=report.block_size,
                                   n=report.avg_frequent_per_tx or 1.0,
                                   k=max(report.root_groups, 1)))


def naive_projection_bytes(report: RunReport) -> float:
    """(n+1)/2 * D for the run's database."""
    return (report.avg_frequent_per_tx + 1) / 2 * report.db_bytes


def built_groups(report: RunReport) -> list:
    """Groups whose tree was actually built (direct-output groups excluded)."""
    return [g for g in report.groups if g.actual_nodes is not None and g.kind != "direct"]


@dataclass
class EstimateSummary:
    groups: int
    over_or_equal: int
    worst_ratio: float

    @property
    def share_over(self) -> float:
        return self.over_or_equal / self.groups if self.groups else float("nan")


def estimate_summary(reports) -> EstimateSummary:
    """How group size estimates compare with the node counts actually built.

    An aborted build only knows its node count at the abort, a lower bound on
    the real size, so it always counts as an under-estimate.
    """
    groups = [g for r in reports for g in built_groups(r)]
    over = sum(g.actual_complete is not False and g.estimated_nodes >= g.actual_nodes
               for g in groups)
    worst = min((g.estimated_nodes / g.actual_nodes for g in groups if g.actual_nodes),
                default=float("nan"))
    return EstimateSummary(len(groups), over, worst)
