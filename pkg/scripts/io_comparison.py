"""Projection bytes and block I/O of the naive and aggressive miners, with and without the three techniques."""
from pathlib import Path

from diskmine.baselines import memory_only, naive_diskmine
from diskmine.driver import MineConfig, diskmine
from diskmine.experiments import (WORKLOADS, formula_predictions, fraction_of_tree,
                                  naive_projection_bytes, total_blocks)

from _common import parser, write_rows


def main():
    p = parser(__doc__)
    p.add_argument("--workloads", nargs="+", default=["sparse", "dense"], choices=list(WORKLOADS))
    p.add_argument("--fractions", nargs="+", type=float, default=[1 / 1.1, 1 / 2, 1 / 4])
    args = p.parse_args()
    rows = []
    for name in args.workloads:
        w = WORKLOADS[name]
        loc = w.materialize(args.data_dir)
        full = memory_only(loc, w.min_support).report.full_tree_nodes
        for frac in args.fractions:
            cfg = MineConfig(budget_bytes=fraction_of_tree(full, frac))
            runs = {
                "naive": naive_diskmine(loc, w.min_support, cfg.techniques_off()).report,
                "aggressive-plain": diskmine(loc, w.min_support, cfg.techniques_off()).report,
                "aggressive": diskmine(loc, w.min_support, cfg).report,
            }
            for algo, rep in runs.items():
                pred = formula_predictions(rep)
                rows.append({
                    "workload": name, "tree_fraction": round(frac, 4), "algorithm": algo,
                    "root_groups": rep.root_groups, "depth": rep.recursion_depth,
                    "projected_bytes": rep.projected_bytes_written,
                    "root_level_bytes": rep.projected_bytes_per_level.get(1, 0),
                    "naive_formula_bytes": round(naive_projection_bytes(rep)),
                    "blocks": total_blocks(rep),
                    "io_naive": round(pred["io_naive"]),
                    "io_aggressive": round(pred["io_aggressive"]),
                    "io_diskmine": round(pred["io_diskmine"]),
                    "seconds": round(rep.wall_time, 2),
                })
                print(" ".join(f"{k}={v}" for k, v in rows[-1].items()))
    write_rows(rows, Path(args.out) / "io_comparison.csv")


if __name__ == "__main__":
    main()
