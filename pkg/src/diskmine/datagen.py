"""Seeded synthetic market-basket databases (quest-style construction).

A pool of ``n_patterns`` maximal patterns is drawn first, each with an
exponentially distributed weight. A transaction draws a Poisson target
length around ``avg_tx_len`` and then a geometric number of patterns, each
copied with every item independently dropped with probability
``1 - correlation``. The union is trimmed or padded (more patterns, then
uniform items) to the target length.

Defaults are plausible, not calibrated to any particular published dataset.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .txdb import BlockConfig, DbLocator, DbWriter, IoStats


@dataclass(frozen=True)
class GenParams:
    n_transactions: int = 10_000
    n_items: int = 1000
    avg_tx_len: float = 10.0
    avg_pattern_len: float = 4.0
    n_patterns: int = 200
    correlation: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.n_transactions < 0:
            raise ValueError("n_transactions must be >= 0")
        if self.n_items < 1:
            raise ValueError("n_items must be >= 1")
        if self.n_patterns < 1:
            raise ValueError("n_patterns must be >= 1")
        if not 0 < self.avg_pattern_len <= self.avg_tx_len:
            raise ValueError("need 0 < avg_pattern_len <= avg_tx_len")
        if not 0.0 <= self.correlation <= 1.0:
            raise ValueError("correlation must lie in [0, 1]")
        if not 0 <= self.seed < 1 << 64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def to_dict(self) -> dict:
        return asdict(self)


def _pattern_pool(p: GenParams, rng: np.random.Generator):
    sizes = np.clip(rng.poisson(p.avg_pattern_len, p.n_patterns), 1, p.n_items)
    pool = []
    prev = np.empty(0, dtype=np.int64)
    for size in sizes:
        # consecutive patterns share items, as in the classic generator
        n_shared = min(len(prev), int(rng.binomial(size, p.correlation)))
        shared = rng.choice(prev, n_shared, replace=False) if n_shared else prev[:0]
        fresh = rng.choice(p.n_items, size, replace=False)
        fresh = fresh[~np.isin(fresh, shared)][:size - n_shared]
        pat = np.concatenate([shared, fresh])
        pool.append(pat)
        prev = pat
    weights = rng.exponential(1.0, p.n_patterns)
    return pool, weights / weights.sum()


def transactions(p: GenParams):
    """Yield the generated transactions (sorted item tuples) in order."""
    rng = np.random.Generator(np.random.PCG64(p.seed))
    pool, weights = _pattern_pool(p, rng)
    cum = np.cumsum(weights)
    keep = p.correlation
    geo_p = min(1.0, p.avg_pattern_len / p.avg_tx_len)
    for _ in range(p.n_transactions):
        target = min(int(rng.poisson(p.avg_tx_len)), p.n_items)
        items = set()
        n_pat = int(rng.geometric(geo_p))
        tries = 0
        while n_pat > 0 or (len(items) < target and tries < 4 * target + 4):
            pat = pool[min(int(np.searchsorted(cum, rng.random())), len(pool) - 1)]
            mask = rng.random(len(pat)) < keep
            items.update(pat[mask].tolist())
            n_pat -= 1
            tries += 1
        while len(items) < target:
            items.add(int(rng.integers(p.n_items)))
        if len(items) > target:
            ordered = sorted(items)
            pick = rng.choice(len(ordered), target, replace=False)
            items = [ordered[k] for k in pick]
        yield tuple(sorted(items))


def generate(params: GenParams, out: DbLocator, cfg: BlockConfig = BlockConfig(),
             stats: IoStats | None = None) -> DbLocator:
    """Write the database plus a ``<file>.json`` sidecar holding ``params``."""
    stats = stats if stats is not None else IoStats()
    Path(out.path).parent.mkdir(parents=True, exist_ok=True)
    with DbWriter(out, cfg, stats) as w:
        for t in transactions(params):
            w.write(t)
    sidecar = Path(str(out.path) + ".json")
    sidecar.write_text(json.dumps({"generator": "quest-style", "format": out.format,
                                   **params.to_dict()}, indent=2, sort_keys=True) + "\n")
    return out


def params_for_size(target_bytes: int, bytes_per_tx: float, **kw) -> GenParams:
    """GenParams whose output should land near ``target_bytes``."""
    return GenParams(n_transactions=max(0, int(target_bytes / bytes_per_tx)), **kw)
