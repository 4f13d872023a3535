import struct
from collections import Counter
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from diskmine.txdb import (BINARY, TEXT, BlockConfig, DbLocator, FormatError, IoStats,
                           ScanPosition, StalePosition, SupportThreshold, count_items,
                           encode_binary, open_scan, projected_db_path, read_all, write_db)

from conftest import D1, transactions_strategy


def scan_all(loc, start=None, cfg=BlockConfig(), stats=None):
    stats = stats if stats is not None else IoStats()
    with open_scan(loc, cfg, stats, start) as s:
        return list(s)


@pytest.mark.parametrize("fmt", [TEXT, BINARY])
def test_scan_yields_every_transaction(tmp_path, fmt):
    loc = write_db(DbLocator(tmp_path / "d", fmt), D1)
    assert scan_all(loc) == D1


@pytest.mark.parametrize("fmt", [TEXT, BINARY])
def test_resume_after_two(tmp_path, fmt):
    loc = write_db(DbLocator(tmp_path / "d", fmt), D1)
    stats = IoStats()
    with open_scan(loc, BlockConfig(), stats) as s:
        it = iter(s)
        next(it), next(it)
        pos = s.position()
    assert pos.transactions_consumed == 2
    assert scan_all(loc, pos) == D1[2:]


def test_ten_thousand_bytes_is_three_blocks(tmp_path):
    path = tmp_path / "big.txt"
    line = b"1 2 3 4 5 6 7 8 9\n"          # 18 bytes
    body = line * (10_000 // len(line))
    body += b"7" * (10_000 - len(body) - 1) + b"\n"
    path.write_bytes(body)
    assert len(body) == 10_000
    stats = IoStats()
    with open_scan(DbLocator(path, TEXT), BlockConfig(4096), stats) as s:
        for _ in s:
            pass
    assert stats.blocks_read == 3
    assert stats.bytes_read == 10_000
    assert stats.db_scans == 1


def test_count_items_running_example(d1_path):
    stats = IoStats()
    counts, n, size = count_items(d1_path, BlockConfig(), stats)
    assert dict(counts) == {0: 3, 1: 3, 2: 2, 3: 2}
    assert n == 4
    assert size == d1_path.size()
    assert stats.db_scans == 1


def test_count_items_empty(make_db):
    ic = count_items(make_db([]), BlockConfig(), IoStats())
    assert ic.counts == Counter() and ic.n_transactions == 0


def test_count_items_is_repeatable(make_db):
    loc = make_db([(0,)])
    s1, s2 = IoStats(), IoStats()
    assert count_items(loc, BlockConfig(), s1) == count_items(loc, BlockConfig(), s2)
    assert s1 == s2


def test_round_trip_small(make_db):
    assert read_all(make_db([(0, 1), (1,)])) == [(0, 1), (1,)]
    assert read_all(make_db([])) == []


def test_empty_transactions_are_kept(make_db):
    for fmt in (TEXT, BINARY):
        loc = make_db([(), (1,), ()], fmt)
        assert read_all(loc) == [(), (1,), ()]
        assert count_items(loc, BlockConfig(), IoStats()).n_transactions == 3


@given(transactions_strategy(max_items=50, max_tx=300), st.sampled_from([TEXT, BINARY]))
def test_round_trip_property(tmp_path_factory, txs, fmt):
    loc = DbLocator(tmp_path_factory.mktemp("rt") / "d", fmt)
    stats = IoStats()
    write_db(loc, txs, BlockConfig(64), stats)
    assert read_all(loc) == txs
    assert stats.bytes_written == loc.size()
    assert stats.blocks_written == -(-loc.size() // 64)


@given(transactions_strategy(max_items=20, max_tx=60, min_tx=1), st.data())
def test_resume_property(tmp_path_factory, txs, data):
    fmt = data.draw(st.sampled_from([TEXT, BINARY]))
    loc = write_db(DbLocator(tmp_path_factory.mktemp("rs") / "d", fmt), txs)
    cut = data.draw(st.integers(0, len(txs)))
    with open_scan(loc, BlockConfig(), IoStats()) as s:
        head = [t for _, t in zip(range(cut), s)]
        pos = s.position()
    assert head + scan_all(loc, pos) == txs


def test_block_accounting_for_a_suffix_scan(tmp_path):
    txs = [tuple(range(10))] * 100               # 44 bytes each in binary
    loc = write_db(DbLocator(tmp_path / "d.db", BINARY), txs)
    pos = ScanPosition(44 * 50, 50)
    stats = IoStats()
    scan_all(loc, pos, BlockConfig(512), stats)
    # region [2200, 4400): blocks 4..8
    assert stats.bytes_read == 2200
    assert stats.blocks_read == 5


def test_io_stats_deterministic(make_db):
    loc = make_db([(1, 2, 3)] * 500)
    runs = []
    for _ in range(2):
        stats = IoStats()
        scan_all(loc, stats=stats)
        runs.append(stats.to_dict())
    assert runs[0] == runs[1]


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        open_scan(DbLocator("/nonexistent/x.txt"), BlockConfig(), IoStats())


@pytest.mark.parametrize("body,msg", [
    (b"1 2\n3 x\n", "bad item token"),
    (b"1 1\n", "duplicate"),
    (b"-1 2\n", "negative"),
])
def test_text_format_errors(tmp_path, body, msg):
    path = tmp_path / "bad.txt"
    path.write_bytes(body)
    with pytest.raises(FormatError, match=msg):
        scan_all(DbLocator(path, TEXT))


def test_binary_truncated(tmp_path):
    path = tmp_path / "bad.db"
    path.write_bytes(encode_binary([1, 2]) + struct.pack("<I", 5) + b"\0\0\0\0")
    with pytest.raises(FormatError, match="truncated"):
        scan_all(DbLocator(path, BINARY))


def test_binary_duplicate(tmp_path):
    path = tmp_path / "dup.db"
    path.write_bytes(struct.pack("<3I", 2, 4, 4))
    with pytest.raises(FormatError, match="duplicate"):
        scan_all(DbLocator(path, BINARY))


def test_stale_position(d1_path):
    with pytest.raises(StalePosition):
        open_scan(d1_path, BlockConfig(), IoStats(), ScanPosition(2, 0))
    with pytest.raises(StalePosition):
        open_scan(d1_path, BlockConfig(), IoStats(), ScanPosition(10_000, 0))


def test_block_config_validation():
    with pytest.raises(ValueError):
        BlockConfig(1000)
    with pytest.raises(ValueError):
        BlockConfig(0)
    assert BlockConfig(16).blocks(15, 17) == 2
    assert BlockConfig(16).blocks(16, 32) == 1
    assert BlockConfig(16).blocks(5, 5) == 0


class TestSupportThreshold:
    def test_fraction_rounds_up(self):
        assert SupportThreshold(0.5).resolve(4) == 2
        assert SupportThreshold(0.6).resolve(3) == 2
        assert SupportThreshold(0.07).resolve(100) == 7

    def test_absolute(self):
        t = SupportThreshold(5)
        assert not t.is_fraction and t.resolve(1000) == 5

    def test_at_least_one(self):
        assert SupportThreshold(0.0).resolve(100) == 1
        assert SupportThreshold(0.001).resolve(10) == 1

    @pytest.mark.parametrize("text,frac,count", [
        ("0.5", True, 2), ("50%", True, 2), ("2", False, 2), ("1e-1", True, 1),
    ])
    def test_parse(self, text, frac, count):
        t = SupportThreshold.parse(text)
        assert t.is_fraction == frac and t.resolve(4) == count

    def test_rejects(self):
        with pytest.raises(ValueError):
            SupportThreshold(1.5)
        with pytest.raises(ValueError):
            SupportThreshold(0)
        with pytest.raises(TypeError):
            SupportThreshold(True)

    @given(st.fractions(0, 1), st.integers(0, 10_000))
    def test_resolve_is_ceiling(self, xi, n):
        assert SupportThreshold(Fraction(xi)).resolve(n) == max(1, -(-xi.numerator * n // xi.denominator))


def test_projected_db_naming(tmp_path):
    assert projected_db_path(tmp_path, (3, 7), 2).name == "proj_3-7_2.db"
    assert projected_db_path(tmp_path, (), 0).name == "proj_e_0.db"
