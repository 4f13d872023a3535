"""Compare per-group tree size estimates with the node counts actually built."""
from pathlib import Path

from diskmine.baselines import memory_only
from diskmine.driver import MineConfig, diskmine
from diskmine.experiments import WORKLOADS, built_groups, estimate_summary, fraction_of_tree

from _common import parser, write_json, write_rows


def main():
    p = parser(__doc__)
    p.add_argument("--workloads", nargs="+", default=["sparse", "recursion"], choices=list(WORKLOADS))
    p.add_argument("--fraction", type=float, default=1 / 20)
    args = p.parse_args()
    rows, reports = [], []
    for name in args.workloads:
        w = WORKLOADS[name]
        loc = w.materialize(args.data_dir)
        full = memory_only(loc, w.min_support).report.full_tree_nodes
        rep = diskmine(loc, w.min_support,
                       MineConfig(budget_bytes=fraction_of_tree(full, args.fraction))).report
        reports.append(rep)
        for g in built_groups(rep):
            rows.append({"workload": name, "depth": g.depth, "index": g.index, "kind": g.kind,
                         "masters": len(g.masters), "estimated": round(g.estimated_nodes, 1),
                         "actual": g.actual_nodes, "complete": g.actual_complete})
    s = estimate_summary(reports)
    print(f"{s.groups} groups, estimate >= actual in {s.share_over:.1%}, "
          f"lowest ratio {s.worst_ratio:.3f}")
    if rows:
        write_rows(rows, Path(args.out) / "estimate_quality.csv")
    write_json({"groups": s.groups, "over_or_equal": s.over_or_equal,
                "share_over": s.share_over, "worst_ratio": s.worst_ratio},
               Path(args.out) / "estimate_quality.json")


if __name__ == "__main__":
    main()
