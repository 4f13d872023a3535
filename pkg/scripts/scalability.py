"""Mine the ~100 MB workload under a fixed budget and record time, peak memory and I/O."""
import shutil
import tempfile
from pathlib import Path

from diskmine.driver import MineConfig, diskmine
from diskmine.experiments import WORKLOADS, total_blocks
from diskmine.fpgrowth import FileSink

from _common import parser, write_json


def main():
    p = parser(__doc__)
    p.add_argument("--budget-mib", type=int, nargs="+", default=[64, 32])
    p.add_argument("--workload", default="scale", choices=list(WORKLOADS))
    args = p.parse_args()
    w = WORKLOADS[args.workload]
    loc = w.materialize(args.data_dir)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    results = []
    for mib in args.budget_mib:
        tmp = Path(tempfile.mkdtemp(prefix="scale-"))
        rep = diskmine(loc, w.min_support, MineConfig(budget_bytes=mib << 20, tmp_dir=str(tmp)),
                       sink=FileSink(out / f"{w.name}-{mib}M.txt")).report
        leftovers = len(list(tmp.iterdir()))
        shutil.rmtree(tmp)
        row = {"workload": w.to_dict(), "db_mib": loc.size() / 2 ** 20, "budget_mib": mib,
               "peak_tree_mib": rep.peak_tree_bytes / 2 ** 20,
               "budget_violations": rep.budget_violations, "root_groups": rep.root_groups,
               "depth": rep.recursion_depth, "itemsets": rep.itemsets_emitted,
               "blocks": total_blocks(rep), "seconds": rep.wall_time, "temp_files_left": leftovers}
        print({k: v for k, v in row.items() if k != "workload"})
        results.append(row)
    write_json(results, out / "scalability.json")


if __name__ == "__main__":
    main()
