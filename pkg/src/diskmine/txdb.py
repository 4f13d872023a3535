"""Disk-resident transaction databases.

Two on-disk layouts are supported:

* ``text``: one transaction per line, decimal item ids separated by single
  spaces (the FIMI repository convention).
* ``binary``: per transaction a little-endian u32 length followed by that many
  little-endian u32 item ids.

Every read and write goes through :class:`Scanner` / :class:`DbWriter`, which
charge the bytes they touch to an :class:`IoStats` at block granularity.
"""
from __future__ import annotations

import math
import os
import struct
from array import array
from collections import Counter
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Iterator, Optional, Union

TEXT = "text"
BINARY = "binary"
FORMATS = (TEXT, BINARY)

_U32 = struct.Struct("<I")
_READ_CHUNK = 1 << 20


class TxDbError(Exception):
    pass


class FormatError(TxDbError):
    def __init__(self, path, where, msg):
        super().__init__(f"{path}: {where}: {msg}")
        self.path = path
        self.where = where


class StalePosition(TxDbError):
    pass


class DiskFull(TxDbError):
    pass


@dataclass(frozen=True)
class DbLocator:
    path: Path
    format: str = TEXT

    def __post_init__(self):
        object.__setattr__(self, "path", Path(self.path))
        if self.format not in FORMATS:
            raise ValueError(f"unknown db format {self.format!r}")

    @classmethod
    def guess(cls, path) -> "DbLocator":
        """Binary if the suffix is ``.db`` or ``.bin``, text otherwise."""
        path = Path(path)
        fmt = BINARY if path.suffix in (".db", ".bin") else TEXT
        return cls(path, fmt)

    def size(self) -> int:
        return self.path.stat().st_size


@dataclass(frozen=True)
class BlockConfig:
    block_size: int = 4096

    def __post_init__(self):
        b = self.block_size
        if b <= 0 or b & (b - 1):
            raise ValueError(f"block size must be a positive power of two, got {b}")

    def blocks(self, start: int, end: int) -> int:
        """Number of aligned blocks touched by the byte region [start, end)."""
        if end <= start:
            return 0
        b = self.block_size
        return -(-end // b) - start // b


@dataclass
class IoStats:
    blocks_read: int = 0
    blocks_written: int = 0
    bytes_read: int = 0
    bytes_written: int = 0
    db_scans: int = 0

    @property
    def total_blocks(self) -> int:
        return self.blocks_read + self.blocks_written

    def snapshot(self) -> "IoStats":
        return IoStats(**asdict(self))

    def since(self, before: "IoStats") -> "IoStats":
        return IoStats(**{k: v - getattr(before, k) for k, v in asdict(self).items()})

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ScanPosition:
    byte_offset: int
    transactions_consumed: int


@dataclass
class SupportThreshold:
    """Minimum support given as a fraction of |D| or an absolute count.

    Fractions are converted exactly (via their decimal repr) so that
    e.g. ``0.07 * 100`` resolves to 7 rather than 8.
    """

    spec: Union[int, float, Fraction]
    resolved_count: Optional[int] = None

    def __post_init__(self):
        if isinstance(self.spec, bool):
            raise TypeError("support threshold must be a number")
        if isinstance(self.spec, int):
            if self.spec < 1:
                raise ValueError("absolute support must be >= 1")
            self.resolved_count = self.spec
        else:
            frac = Fraction(str(self.spec)) if isinstance(self.spec, float) else Fraction(self.spec)
            if not 0 <= frac <= 1:
                raise ValueError(f"fractional support must lie in [0, 1], got {self.spec}")
            self._fraction = frac

    @property
    def is_fraction(self) -> bool:
        return not isinstance(self.spec, int)

    @property
    def fraction(self) -> Fraction:
        return self._fraction

    def resolve(self, n_transactions: int) -> int:
        if self.is_fraction:
            self.resolved_count = max(1, math.ceil(self._fraction * n_transactions))
        return self.resolved_count

    @classmethod
    def parse(cls, text: str) -> "SupportThreshold":
        """``"0.5"`` or ``"50%"`` is a fraction, ``"12"`` an absolute count."""
        text = text.strip()
        if text.endswith("%"):
            return cls(Fraction(text[:-1]) / 100)
        if any(c in text for c in ".eE"):
            return cls(float(text))
        value = int(text)
        return cls(Fraction(value) if value == 0 else value)


def _as_threshold(threshold) -> SupportThreshold:
    if isinstance(threshold, SupportThreshold):
        return threshold
    return SupportThreshold(threshold)


class Scanner:
    """Sequential reader over one database file.

    Bytes are charged to ``stats`` for the contiguous region actually
    consumed, rounded out to whole blocks. Use as a context manager or call
    :meth:`close`; exhausting the iterator also settles the accounting.
    """

    def __init__(self, locator: DbLocator, cfg: BlockConfig, stats: IoStats,
                 start: Optional[ScanPosition] = None):
        self.locator = locator
        self.cfg = cfg
        self.stats = stats
        self._fh = open(locator.path, "rb")
        self._size = os.fstat(self._fh.fileno()).st_size
        self._start = 0
        self.consumed = 0
        if start is not None:
            self._seek(start)
        self.offset = self._start
        self.last_start = self._start
        self._settled = False
        stats.db_scans += 1

    def _seek(self, pos: ScanPosition):
        off = pos.byte_offset
        if off < 0 or off > self._size or pos.transactions_consumed < 0:
            raise StalePosition(f"{self.locator.path}: offset {off} outside file")
        if self.locator.format == TEXT and off > 0:
            self._fh.seek(off - 1)
            if self._fh.read(1) != b"\n":
                raise StalePosition(f"{self.locator.path}: offset {off} is not a line boundary")
        elif self.locator.format == BINARY and off < self._size:
            self._fh.seek(off)
            head = self._fh.read(4)
            if len(head) < 4 or off + 4 + 4 * _U32.unpack(head)[0] > self._size:
                raise StalePosition(f"{self.locator.path}: offset {off} is not a record boundary")
        self._fh.seek(off)
        self._start = off
        self.consumed = pos.transactions_consumed

    def position(self) -> ScanPosition:
        """Position just after the last transaction yielded."""
        return ScanPosition(self.offset, self.consumed)

    def position_before_last(self) -> ScanPosition:
        """Position of the last transaction yielded (so it is re-read on resume)."""
        return ScanPosition(self.last_start, max(0, self.consumed - 1))

    def __iter__(self) -> Iterator[tuple]:
        if self.locator.format == TEXT:
            return self._iter_text()
        return self._iter_binary()

    def _iter_text(self):
        path = self.locator.path
        for line in self._fh:
            self.last_start = self.offset
            self.offset += len(line)
            try:
                items = sorted(map(int, line.split()))
            except ValueError:
                raise FormatError(path, f"byte {self.last_start}", f"bad item token in {line[:40]!r}") from None
            if items:
                if items[0] < 0:
                    raise FormatError(path, f"byte {self.last_start}", "negative item id")
                if len(set(items)) != len(items):
                    raise FormatError(path, f"byte {self.last_start}", "duplicate item in transaction")
            self.consumed += 1
            yield tuple(items)
        self.close()

    def _iter_binary(self):
        path = self.locator.path
        buf = b""
        pos = 0
        fh = self._fh
        while True:
            if len(buf) - pos < 4:
                more = fh.read(_READ_CHUNK)
                if not more:
                    if len(buf) - pos:
                        raise FormatError(path, f"byte {self.offset}", "truncated record header")
                    break
                buf = buf[pos:] + more
                pos = 0
            (length,) = _U32.unpack_from(buf, pos)
            need = 4 + 4 * length
            while len(buf) - pos < need:
                more = fh.read(max(_READ_CHUNK, need))
                if not more:
                    raise FormatError(path, f"byte {self.offset}", "truncated record body")
                buf = buf[pos:] + more
                pos = 0
            items = array("I")
            items.frombytes(buf[pos + 4:pos + need])
            pos += need
            self.last_start = self.offset
            self.offset += need
            t = tuple(items)
            if length > 1 and any(t[i] >= t[i + 1] for i in range(length - 1)):
                if len(set(t)) != length:
                    raise FormatError(path, f"byte {self.last_start}", "duplicate item in transaction")
                t = tuple(sorted(t))
            self.consumed += 1
            yield t
        self.close()

    def close(self):
        if self._settled:
            return
        self._settled = True
        self.stats.bytes_read += self.offset - self._start
        self.stats.blocks_read += self.cfg.blocks(self._start, self.offset)
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def open_scan(locator: DbLocator, cfg: BlockConfig, stats: IoStats,
              start: Optional[ScanPosition] = None) -> Scanner:
    if not locator.path.exists():
        raise FileNotFoundError(f"database not found: {locator.path}")
    return Scanner(locator, cfg, stats, start)


def encode_text(items) -> bytes:
    return (" ".join(map(str, items)) + "\n").encode()


def encode_binary(items) -> bytes:
    return _U32.pack(len(items)) + array("I", items).tobytes()


class DbWriter:
    """Append-only writer for one database file.

    Transactions are written sorted ascending. Bytes and blocks are charged to
    ``stats`` when the writer is closed.
    """

    def __init__(self, locator: DbLocator, cfg: BlockConfig, stats: IoStats):
        self.locator = locator
        self.cfg = cfg
        self.stats = stats
        self.n_transactions = 0
        self.bytes = 0
        self._encode = encode_text if locator.format == TEXT else encode_binary
        self._fh = open(locator.path, "wb")
        self._closed = False

    def write(self, items):
        data = self._encode(sorted(items))
        try:
            self._fh.write(data)
        except OSError as e:
            if e.errno == 28:
                raise DiskFull(str(self.locator.path)) from e
            raise
        self.bytes += len(data)
        self.n_transactions += 1

    def write_many(self, transactions: Iterable):
        for t in transactions:
            self.write(t)

    def close(self) -> DbLocator:
        if not self._closed:
            self._closed = True
            self._fh.close()
            self.stats.bytes_written += self.bytes
            self.stats.blocks_written += self.cfg.blocks(0, self.bytes)
        return self.locator

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_db(locator: DbLocator, transactions: Iterable, cfg: BlockConfig = BlockConfig(),
             stats: Optional[IoStats] = None) -> DbLocator:
    stats = stats if stats is not None else IoStats()
    with DbWriter(locator, cfg, stats) as w:
        w.write_many(transactions)
    return locator


@dataclass
class ItemCounts:
    counts: Counter = field(default_factory=Counter)
    n_transactions: int = 0
    total_bytes: int = 0

    def __iter__(self):
        # allows ``counts, n, size = count_items(...)``
        return iter((self.counts, self.n_transactions, self.total_bytes))


def count_items(locator: DbLocator, cfg: BlockConfig, stats: IoStats) -> ItemCounts:
    """First pass: exact per-item occurrence counts."""
    counts = Counter()
    n = 0
    with open_scan(locator, cfg, stats) as scan:
        for t in scan:
            counts.update(t)
            n += 1
        size = scan.offset
    return ItemCounts(counts, n, size)


def read_all(locator: DbLocator, cfg: BlockConfig = BlockConfig(),
             stats: Optional[IoStats] = None) -> list:
    """Load a whole database into memory (tests and small-scale tooling)."""
    stats = stats if stats is not None else IoStats()
    with open_scan(locator, cfg, stats) as scan:
        return list(scan)


def projected_db_path(tmp_dir, alpha, group_index: int) -> Path:
    """``<tmpdir>/proj_<alpha-string>_<group-index>.db``; the empty suffix is ``e``.

    ``alpha`` may also be a pre-built string tag.
    """
    if isinstance(alpha, str):
        alpha_str = alpha
    else:
        alpha_str = "-".join(map(str, alpha)) if alpha else "e"
    return Path(tmp_dir) / f"proj_{alpha_str}_{group_index}.db"
