"""Out-of-core frequent-itemset mining with grouped database projection."""
from .baselines import brute_force_oracle, memory_only, naive_diskmine, partition_mine
from .datagen import GenParams, generate
from .driver import Diskmine, MineConfig, MiningResult, RunReport, diskmine
from .fpgrowth import FileSink, MemorySink, fpgrowth_star, mine_transactions, read_results
from .fptree import FpTree, FreqString, MemoryBudget, PairArray
from .projection import CostModel, predict_costs
from .txdb import BINARY, TEXT, BlockConfig, DbLocator, IoStats, SupportThreshold, read_all, write_db

__all__ = [
    "BINARY", "TEXT", "BlockConfig", "CostModel", "DbLocator", "Diskmine", "FileSink", "FpTree",
    "FreqString", "GenParams", "IoStats", "MemoryBudget", "MemorySink", "MineConfig",
    "MiningResult", "PairArray", "RunReport", "SupportThreshold", "brute_force_oracle",
    "diskmine", "fpgrowth_star", "generate", "memory_only", "mine_transactions",
    "naive_diskmine", "partition_mine", "predict_costs", "read_all", "read_results", "write_db",
]
