"""Tabulate predicted pass counts and block I/O for a grid of sizes."""
from pathlib import Path

from diskmine.projection import CostModel, predict_costs

from _common import parser, write_rows

GB = 2 ** 30


def main():
    p = parser(__doc__)
    p.add_argument("--memory", type=float, default=1.0, help="memory in GiB")
    args = p.parse_args()
    rows = []
    for tree_gb in (0.5, 2, 10, 100, 1024, 10 * 1024):
        for c in (0.05, 0.1, 0.2):
            pred = predict_costs(CostModel(D=tree_gb * GB, B=4096, M=args.memory * GB,
                                           T=tree_gb * GB, c=c, n=10, k=8))
            rows.append({"tree_gib": tree_gb, "memory_gib": args.memory, "c": c, **pred})
    for r in rows:
        print(f"T={r['tree_gib']:>7} GiB  c={r['c']:<4}  passes={r['passes']}")
    write_rows(rows, Path(args.out) / "cost_model.csv")


if __name__ == "__main__":
    main()
