"""``diskmine`` command line: mine, gen, verify, report.

Settings for ``mine`` come from three layers, highest first: command-line
flags, a JSON ``--config`` file, built-in defaults.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import re
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

from .baselines import memory_only, naive_diskmine, partition_mine
from .datagen import GenParams, generate
from .driver import MineConfig, RunReport, diskmine
from .fpgrowth import FileSink, read_results, sort_result_file
from .fptree import NODE_COST
from .projection import CostModel, predict_costs
from .txdb import FORMATS, DbLocator, SupportThreshold, TxDbError

EXIT_OK = 0
EXIT_DIFF = 1
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_INTERNAL = 4

ALGORITHMS = ("diskmine", "naive", "partition", "memory-only")

log = logging.getLogger("diskmine")


class ConfigError(ValueError):
    pass


_SIZE = re.compile(r"^\s*(\d+(?:\.\d+)?)\s*([kmgt]?)i?b?\s*$", re.I)


def parse_size(text) -> int:
    """``"64M"``, ``"1.5GiB"``, ``"4096"`` -> bytes (binary multiples)."""
    if isinstance(text, int):
        return text
    m = _SIZE.match(str(text))
    if not m:
        raise ConfigError(f"not a size: {text!r}")
    mult = 1 << (10 * "_kmgt".index(m.group(2).lower() or "_"))
    return int(float(m.group(1)) * mult)


@dataclass
class RunConfig:
    input: str = ""
    algorithm: str = "diskmine"
    min_support: str = "0.01"
    memory_budget: int = 64 << 20
    block_size: int = 4096
    tmp_dir: Optional[str] = None
    output: Optional[str] = None
    report: Optional[str] = None
    format: Optional[str] = None
    plan_log: Optional[str] = None
    techniques: bool = True
    max_depth: int = 16
    debug: bool = False

    def validate(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}")
        if not self.input:
            raise ConfigError("no input database given")
        if self.format is not None and self.format not in FORMATS:
            raise ConfigError(f"unknown format {self.format!r}")
        if self.memory_budget < NODE_COST:
            raise ConfigError(f"memory budget must cover at least one node ({NODE_COST} bytes)")
        b = self.block_size
        if b <= 0 or b & (b - 1):
            raise ConfigError("block size must be a positive power of two")
        try:
            SupportThreshold.parse(str(self.min_support))
        except (ValueError, TypeError) as e:
            raise ConfigError(f"bad --min-support: {e}") from None

    def locator(self) -> DbLocator:
        if self.format:
            return DbLocator(self.input, self.format)
        return DbLocator.guess(self.input)

    def mine_config(self) -> MineConfig:
        cfg = MineConfig(budget_bytes=self.memory_budget, block_size=self.block_size,
                         tmp_dir=self.tmp_dir, max_depth=self.max_depth, debug=self.debug,
                         plan_log=self.plan_log)
        return cfg if self.techniques else cfg.techniques_off()


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values = {}
    if args.config:
        try:
            with open(args.config) as fh:
                loaded = json.load(fh)
        except OSError as e:
            raise ConfigError(f"cannot read config file: {e}") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {args.config}: {e}") from None
        known = {f.name for f in fields(RunConfig)}
        for key, value in loaded.items():
            key = key.replace("-", "_")
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            values[key] = value
    for f in fields(RunConfig):
        flag = getattr(args, f.name, None)
        if flag is not None:
            values[f.name] = flag
    for key in ("memory_budget", "block_size"):
        if key in values:
            values[key] = parse_size(values[key])
    if "min_support" in values:
        values["min_support"] = str(values["min_support"])
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


def cmd_mine(cfg: RunConfig) -> int:
    loc = cfg.locator()
    if not loc.path.exists():
        raise FileNotFoundError(f"input database not found: {loc.path}")
    threshold = SupportThreshold.parse(cfg.min_support)
    if cfg.algorithm == "partition" and not threshold.is_fraction:
        raise ConfigError("the partition algorithm needs a fractional --min-support")
    mc = cfg.mine_config()
    sink = FileSink(cfg.output) if cfg.output else FileSink("/dev/stdout")
    if cfg.algorithm == "diskmine":
        report = diskmine(loc, threshold, mc, sink).report
    elif cfg.algorithm == "naive":
        report = naive_diskmine(loc, threshold, mc, sink).report
    elif cfg.algorithm == "memory-only":
        report = memory_only(loc, threshold, mc, sink).report
    else:
        report = partition_mine(loc, threshold, mc, sink).report
    if cfg.output:
        sort_result_file(cfg.output, tmp_dir=cfg.tmp_dir)
    report.extra.setdefault("input", str(loc.path))
    report.extra.setdefault("techniques", cfg.techniques)
    if cfg.report:
        report.write(cfg.report)
    log.info("%d itemsets, %d blocks read, %d written, depth %d",
             report.itemsets_emitted, report.io.blocks_read, report.io.blocks_written,
             report.recursion_depth)
    return EXIT_OK


def cmd_gen(args) -> int:
    try:
        params = GenParams(n_transactions=args.n_transactions, n_items=args.n_items,
                           avg_tx_len=args.avg_tx_len, avg_pattern_len=args.avg_pattern_len,
                           n_patterns=args.n_patterns, correlation=args.correlation,
                           seed=args.seed)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    fmt = args.format or DbLocator.guess(args.output).format
    generate(params, DbLocator(args.output, fmt))
    return EXIT_OK


def cmd_verify(a: str, b: str, out=sys.stdout, max_listed: int = 20) -> int:
    ra = read_results(a)
    rb = read_results(b)
    only_a = sorted(set(ra) - set(rb), key=lambda x: (len(x), x))
    only_b = sorted(set(rb) - set(ra), key=lambda x: (len(x), x))
    differ = sorted((k for k in set(ra) & set(rb) if ra[k] != rb[k]), key=lambda x: (len(x), x))
    if not (only_a or only_b or differ):
        print(f"identical: {len(ra)} itemsets", file=out)
        return EXIT_OK
    print(f"{len(only_a)} only in {a}, {len(only_b)} only in {b}, "
          f"{len(differ)} with different support", file=out)
    for k in only_a[:max_listed]:
        print(f"< {' '.join(map(str, k))} ({ra[k]})", file=out)
    for k in only_b[:max_listed]:
        print(f"> {' '.join(map(str, k))} ({rb[k]})", file=out)
    for k in differ[:max_listed]:
        print(f"! {' '.join(map(str, k))} ({ra[k]} vs {rb[k]})", file=out)
    return EXIT_DIFF


def report_rows(report: RunReport) -> list:
    """Measured block counts next to the closed-form predictions."""
    B = report.block_size
    D = report.db_bytes
    d = D / B if B else 0.0
    k = max(report.root_groups, 1)
    n = report.avg_frequent_per_tx or 1.0
    projected = report.root_groups > 0
    if D > 0 and projected:
        pred = predict_costs(CostModel(D=D, B=B, n=n, k=k))
    else:
        pred = {}
    measured = report.io.blocks_read + report.io.blocks_written
    rows = []
    for key, label in (("io_general", "general"), ("io_naive", "naive"),
                       ("io_aggressive", "aggressive"), ("io_diskmine", "diskmine")):
        # without projection the run is two plain scans
        value = pred.get(key, 2 * d)
        rows.append({"algorithm": report.algorithm, "formula": label, "predicted_blocks": value,
                     "measured_blocks": measured,
                     "ratio": measured / value if value else float("nan"),
                     "D_blocks": d, "k": report.root_groups, "n": n})
    return rows


def cmd_report(path: str, csv_path: Optional[str] = None, out=sys.stdout) -> int:
    report = RunReport.read(path)
    rows = report_rows(report)
    io_ = report.io
    print(f"algorithm {report.algorithm}  D={report.db_bytes} B  block={report.block_size} B  "
          f"k={report.root_groups}  n={rows[0]['n']:.2f}  depth={report.recursion_depth}", file=out)
    print(f"measured: {io_.blocks_read} blocks read, {io_.blocks_written} written, "
          f"{io_.db_scans} scans", file=out)
    print(f"{'formula':<16}{'predicted':>14}{'measured':>14}{'ratio':>9}", file=out)
    for r in rows:
        print(f"{r['formula']:<16}{r['predicted_blocks']:>14.4g}{r['measured_blocks']:>14d}"
              f"{r['ratio']:>9.3f}", file=out)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]))
    w.writeheader()
    w.writerows(rows)
    if csv_path:
        Path(csv_path).write_text(buf.getvalue())
    else:
        print(file=out)
        out.write(buf.getvalue())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="diskmine", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    m = sub.add_parser("mine", help="mine frequent itemsets",
                       description="Mine frequent itemsets. Precedence: flags > --config > defaults.")
    m.add_argument("input", nargs="?", default=None)
    m.add_argument("--config", help="JSON file with any of the options below")
    m.add_argument("--algorithm", choices=ALGORITHMS, default=None)
    m.add_argument("--min-support", default=None,
                   help="fraction (0.05), percent (5%%) or absolute count (12); default 0.01")
    m.add_argument("--memory-budget", default=None, help="bytes, e.g. 64M (default 64M)")
    m.add_argument("--block-size", default=None, help="bytes (default 4096)")
    m.add_argument("--tmp-dir", default=None)
    m.add_argument("--output", default=None, help="result file (default stdout)")
    m.add_argument("--report", default=None, help="write the run report JSON here")
    m.add_argument("--format", choices=FORMATS, default=None,
                   help="input format (default: binary for .db/.bin, else text)")
    m.add_argument("--plan-log", default=None, help="JSON-lines log of grouping decisions")
    m.add_argument("--no-techniques", dest="techniques", action="store_const", const=False,
                   default=None, help="disable skip-write, tree reuse and pruning")
    m.add_argument("--max-depth", type=int, default=None)
    m.add_argument("--debug", action="store_const", const=True, default=None,
                   help="check that no itemset is emitted twice")

    g = sub.add_parser("gen", help="generate a synthetic database")
    g.add_argument("output")
    g.add_argument("--n-transactions", type=int, default=GenParams.n_transactions)
    g.add_argument("--n-items", type=int, default=GenParams.n_items)
    g.add_argument("--avg-tx-len", type=float, default=GenParams.avg_tx_len)
    g.add_argument("--avg-pattern-len", type=float, default=GenParams.avg_pattern_len)
    g.add_argument("--n-patterns", type=int, default=GenParams.n_patterns)
    g.add_argument("--correlation", type=float, default=GenParams.correlation)
    g.add_argument("--seed", type=int, default=GenParams.seed)
    g.add_argument("--format", choices=FORMATS, default=None)

    v = sub.add_parser("verify", help="compare two result files")
    v.add_argument("a")
    v.add_argument("b")

    r = sub.add_parser("report", help="measured I/O against the cost model")
    r.add_argument("report")
    r.add_argument("--csv", default=None, help="write the CSV here instead of stdout")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "mine":
            cfg = resolve_config(args)
        elif args.command == "verify":
            return cmd_verify(args.a, args.b)
        elif args.command == "report":
            return cmd_report(args.report, args.csv)
    except (ConfigError, ValueError, KeyError, TypeError) as e:
        # bad settings, or an unparsable result/report file
        print(f"diskmine: error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"diskmine: error: {e}", file=sys.stderr)
        return EXIT_IO
    try:
        if args.command == "mine":
            return cmd_mine(cfg)
        return cmd_gen(args)
    except ConfigError as e:
        print(f"diskmine: error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, TxDbError) as e:
        print(f"diskmine: error: {e}", file=sys.stderr)
        return EXIT_IO
    except Exception:  # noqa: BLE001
        log.exception("internal error")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
