"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line that is repeated in the terminal summary.
The datasets are seed-fixed (see ``diskmine.experiments.WORKLOADS``).
"""
import random
import time
from collections import Counter

import pytest

from diskmine.baselines import brute_force_oracle, memory_only, naive_diskmine, partition_mine
from diskmine.driver import MineConfig, diskmine
from diskmine.experiments import (WORKLOADS, estimate_summary, formula_predictions,
                                  fraction_of_tree, naive_projection_bytes, total_blocks)
from diskmine.fpgrowth import FileSink, MemorySink, fpgrowth_star, sort_result_file
from diskmine.fptree import FreqString, tree_from_transactions
from diskmine.projection import CostModel, Grouping, compute_freqstring, predict_costs, project_plain
from diskmine.txdb import BINARY, BlockConfig, DbLocator, IoStats, read_all, write_db

from conftest import A, B, C, D, D1, budget_for_nodes, ids, letters, record_criterion

pytestmark = pytest.mark.acceptance


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    return tmp_path_factory.mktemp("workloads")


# -- 1 ----------------------------------------------------------------------


def test_criterion_1_oracle_equivalence(tmp_path):
    t0 = time.perf_counter()
    n_dbs, decomposed, bad = 120, 0, []
    for seed in range(n_dbs):
        rng = random.Random(seed)
        n_items = rng.randint(1, 15)
        txs = [tuple(sorted(rng.sample(range(n_items), rng.randint(0, n_items))))
               for _ in range(rng.randint(0, 200))]
        loc = write_db(DbLocator(tmp_path / f"{seed}.db", BINARY), txs)
        xi = rng.choice([0.02, 0.05, 0.1, 0.2, 0.3, 0.5, 0.8])
        longest = max((len(t) for t in txs), default=1)
        cfg = MineConfig(budget_bytes=budget_for_nodes(max(longest, 1) + rng.randint(0, 60)),
                         debug=True)
        oracle = brute_force_oracle(txs, xi)
        dm = diskmine(loc, xi, cfg)
        decomposed += dm.report.root_groups > 0
        for name, got in (("diskmine", dm.results), ("naive", naive_diskmine(loc, xi, cfg).results),
                          ("partition", partition_mine(loc, xi, cfg).results)):
            if got != oracle:
                bad.append((seed, name))
    elapsed = time.perf_counter() - t0
    ok = not bad and elapsed < 60
    record_criterion(1, ok, f"{n_dbs} databases x 3 miners, {len(bad)} mismatches, "
                            f"{decomposed} decomposed, {elapsed:.1f}s")
    assert not bad, bad[:10]
    assert elapsed < 60


# -- 2 ----------------------------------------------------------------------


def _group_output(loc, fs, masters, min_count):
    tree, arr = tree_from_transactions(read_all(loc), fs)
    sink = MemorySink(check_duplicates=True)
    fpgrowth_star(tree, arr, (), min_count, sink, master_filter=set(masters))
    return {letters(k): v for k, v in sink.results.items()}


def test_criterion_2_worked_examples(d1_path, tmp_path):
    checks = {}
    txs = [ids("abc"), ids("abcd"), ids("ac")]
    fs = compute_freqstring(Counter(i for t in txs for i in t), 2)     # 60% of 3 -> 2
    checks["freqstring"] = letters(fs.items) == "acb"

    fs1 = FreqString([A, B, C, D], [3, 3, 2, 2])
    projected = project_plain(d1_path, fs1, Grouping([[0, 1], [2, 3]], 2), BlockConfig(),
                              IoStats(), tmp_path)
    (_, d_ab), (_, d_cd) = projected
    checks["D_ab"] = [letters(t) for t in read_all(d_ab)] == ["ab", "b", "a", "ab"]
    checks["D_cd"] = [letters(t) for t in read_all(d_cd)] == ["abd", "bcd", "ac"]
    checks["ab outputs"] = _group_output(d_ab, fs1, [A, B], 2) == {"a": 3, "b": 3, "ab": 2}
    checks["cd outputs"] = _group_output(d_cd, fs1, [C, D], 2) == {"d": 2, "bd": 2, "c": 2}
    ok = all(checks.values())
    record_criterion(2, ok, ", ".join(f"{k} {'ok' if v else 'WRONG'}" for k, v in checks.items()))
    assert ok, checks


# -- 3 ----------------------------------------------------------------------


def test_criterion_3_pass_anchors():
    def passes(T):
        return predict_costs(CostModel(D=1, B=1, M=2 ** 30, T=T, c=0.1))["passes"]

    got = {"10 GB": passes(10 * 2 ** 30), "10 TB": passes(10 * 2 ** 40)}
    want = {"10 GB": 2, "10 TB": 5}
    ok = got == want
    record_criterion(3, ok, "passes " + ", ".join(f"{k}: {got[k]} (want {want[k]})" for k in got))
    assert got == want


# -- 4 and 6 share the forced-recursion run ------------------------------------


@pytest.fixture(scope="module")
def recursion_runs(data_dir, tmp_path_factory):
    w = WORKLOADS["recursion"]
    loc = w.materialize(data_dir)
    out = tmp_path_factory.mktemp("recursion")
    t0 = time.perf_counter()
    ref = memory_only(loc, w.min_support, sink=FileSink(out / "memory.txt"))
    budget = fraction_of_tree(ref.report.full_tree_nodes, 1 / 20)
    run = diskmine(loc, w.min_support, MineConfig(budget_bytes=budget, tmp_dir=str(out / "tmp")),
                   sink=FileSink(out / "diskmine.txt"))
    elapsed = time.perf_counter() - t0
    for name in ("memory.txt", "diskmine.txt"):
        sort_result_file(out / name)
    return loc, ref.report, run.report, out, elapsed


def test_criterion_4_forced_recursion(recursion_runs):
    loc, ref, rep, out, elapsed = recursion_runs
    same = (out / "memory.txt").read_bytes() == (out / "diskmine.txt").read_bytes()
    ok = rep.recursion_depth >= 2 and same and loc.size() >= 10 * 2 ** 20 and elapsed < 300
    record_criterion(4, ok, f"{loc.size() / 2 ** 20:.1f} MiB, full tree {ref.full_tree_nodes} nodes, "
                            f"budget {rep.budget_bytes} B, depth {rep.recursion_depth}, "
                            f"{rep.root_groups} root groups, {rep.itemsets_emitted} itemsets, "
                            f"identical={same}, {elapsed:.0f}s")
    assert loc.size() >= 10 * 2 ** 20
    assert rep.recursion_depth >= 2
    assert same
    assert elapsed < 300


# -- 5 ----------------------------------------------------------------------


@pytest.fixture(scope="module")
def sparse_runs(data_dir):
    w = WORKLOADS["sparse"]
    loc = w.materialize(data_dir)
    full = memory_only(loc, w.min_support).report.full_tree_nodes
    cfg = MineConfig(budget_bytes=fraction_of_tree(full, 1 / 2))
    return {
        "naive": naive_diskmine(loc, w.min_support, cfg.techniques_off()).report,
        "aggressive": diskmine(loc, w.min_support, cfg).report,
        "aggressive-plain": diskmine(loc, w.min_support, cfg.techniques_off()).report,
    }


def test_criterion_5_io_dominance(sparse_runs):
    naive, agg, plain = sparse_runs["naive"], sparse_runs["aggressive"], sparse_runs["aggressive-plain"]
    n = naive.avg_frequent_per_tx
    naive_root = naive.projected_bytes_per_level[1]
    formula = naive_projection_bytes(naive)
    naive_err = abs(naive_root - formula) / formula
    ratio_total = agg.projected_bytes_written / naive.projected_bytes_written
    ratio_root = plain.projected_bytes_per_level[1] / naive_root
    ok = n >= 50 and agg.root_groups >= 2 and ratio_total < 0.5 and ratio_root < 0.5 \
        and naive_err <= 0.25
    record_criterion(5, ok, f"n={n:.1f}, k={agg.root_groups}, aggressive/naive bytes {ratio_total:.3f} "
                            f"(one level, no techniques: {ratio_root:.3f}), naive vs (n+1)/2*D "
                            f"{naive_root / formula:.3f}")
    assert n >= 50
    assert agg.root_groups >= 2
    assert ratio_total < 0.5 and ratio_root < 0.5
    assert naive_err <= 0.25


# -- 6 ----------------------------------------------------------------------


def test_criterion_6_estimate_quality(recursion_runs, sparse_runs):
    summary = estimate_summary([recursion_runs[2], sparse_runs["aggressive"]])
    ok = summary.groups >= 5 and summary.share_over >= 0.9 and summary.worst_ratio >= 0.5
    record_criterion(6, ok, f"{summary.groups} groups, estimate >= actual in "
                            f"{summary.share_over:.1%}, lowest estimate/actual {summary.worst_ratio:.3f}")
    assert summary.groups >= 5
    assert summary.share_over >= 0.9
    assert summary.worst_ratio >= 0.5


# -- 7 ----------------------------------------------------------------------


def test_criterion_7_partition_two_scans(d1_path, data_dir, tmp_path):
    from diskmine.datagen import GenParams, generate
    scans = []
    res = partition_mine(d1_path, 0.5, MineConfig(budget_bytes=budget_for_nodes(6)))
    scans.append((len(res.partition.cells), res.report.io.db_scans, res.results == brute_force_oracle(D1, 2)))
    loc = generate(GenParams(n_transactions=20_000, n_items=500, avg_tx_len=10, seed=7),
                   DbLocator(tmp_path / "p.db", BINARY))
    ref = memory_only(loc, 0.01)
    for frac, spill in ((1 / 4, None), (1 / 10, 200)):
        cfg = MineConfig(budget_bytes=fraction_of_tree(ref.report.full_tree_nodes, frac),
                         tmp_dir=str(tmp_path / "spill"))
        res = partition_mine(loc, 0.01, cfg, spill_limit=spill)
        scans.append((len(res.partition.cells), res.report.io.db_scans, res.results == ref.results))
    ok = all(s == 2 and same for _, s, same in scans) and any(c > 2 for c, _, _ in scans)
    record_criterion(7, ok, "cells/scans " + ", ".join(f"{c}/{s}" for c, s, _ in scans))
    assert all(s == 2 for _, s, _ in scans)
    assert all(same for _, _, same in scans)


# -- 8 ----------------------------------------------------------------------


def test_criterion_8_techniques_vs_formula(data_dir):
    w = WORKLOADS["dense"]
    loc = w.materialize(data_dir)
    full = memory_only(loc, w.min_support).report.full_tree_nodes
    cfg = MineConfig(budget_bytes=fraction_of_tree(full, 1 / 1.1))
    on = diskmine(loc, w.min_support, cfg)
    off = diskmine(loc, w.min_support, cfg.techniques_off())
    assert on.results == off.results
    b_on, b_off = total_blocks(on.report), total_blocks(off.report)
    predicted = formula_predictions(off.report)["io_aggressive"]
    err = abs(b_off - predicted) / predicted
    ok = b_on <= b_off and err <= 0.35 and off.report.root_groups >= 2
    record_criterion(8, ok, f"k={off.report.root_groups}, blocks on {b_on} <= off {b_off} "
                            f"(saved {b_off - b_on}), off/aggressive-model prediction {b_off / predicted:.3f}")
    assert off.report.root_groups >= 2
    assert b_on <= b_off
    assert err <= 0.35


# -- 9 ----------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_9_scalability(data_dir, tmp_path):
    w = WORKLOADS["scale"]
    loc = w.materialize(data_dir)
    budget = 64 * 2 ** 20
    tmp = tmp_path / "tmp"
    t0 = time.perf_counter()
    rep = diskmine(loc, w.min_support, MineConfig(budget_bytes=budget, tmp_dir=str(tmp))).report
    elapsed = time.perf_counter() - t0
    leftovers = list(tmp.iterdir())
    within = rep.peak_tree_bytes <= budget or rep.budget_violations > 0
    ok = loc.size() >= 100 * 10 ** 6 and within and not leftovers
    record_criterion(9, ok, f"{loc.size() / 2 ** 20:.0f} MiB, budget 64 MiB, peak "
                            f"{rep.peak_tree_bytes / 2 ** 20:.1f} MiB, {rep.budget_violations} flagged "
                            f"overflows, {rep.root_groups} root groups, {rep.itemsets_emitted} itemsets, "
                            f"{len(leftovers)} temp files left, {elapsed:.0f}s")
    assert loc.size() >= 100 * 10 ** 6
    assert within
    assert not leftovers
