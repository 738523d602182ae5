"""Block-parallel Monte Carlo driver.

Paths are cut into fixed-size blocks; block ``b`` always covers path indices
``[b * block_size, (b+1) * block_size)`` and always draws from
``block_rng(master_seed, stream, b)``. Workers only decide *when* a block is
computed, so results are identical for every worker count.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..errors import ContractError, NumericError
from ..stats import mean_se
from .rng import block_rng

DEFAULT_SEED = 20_240_611
DEFAULT_BLOCK = 8192

# task(rng, n_paths, first_path_index) -> array with leading axis n_paths
Task = Callable[[np.random.Generator, int, int], np.ndarray]


def env_seed(default: int = DEFAULT_SEED) -> int:
    val = os.environ.get("FWIS_SEED")
    return default if val in (None, "") else int(val)


def env_workers(default: int = 1) -> int:
    val = os.environ.get("FWIS_THREADS")
    return default if val in (None, "") else max(1, int(val))


@dataclass(frozen=True)
class McConfig:
    n_paths: int
    master_seed: int = DEFAULT_SEED
    dt: float | None = None
    workers: int = 1
    antithetic: bool = False
    block_size: int = DEFAULT_BLOCK
    stream: int = 0

    def __post_init__(self):
        if self.n_paths < 1:
            raise ContractError("n_paths must be >= 1")
        if self.dt is not None and not self.dt > 0:
            raise ContractError("dt must be positive")
        if self.block_size < 1 or (self.antithetic and self.block_size % 2):
            raise ContractError("block size must be positive (and even with antithetic pairs)")
        if self.workers < 1:
            raise ContractError("workers must be >= 1")

    def blocks(self):
        """``(block_index, first_path, n_paths)`` covering ``[0, n_paths)``."""
        out = []
        for b, start in enumerate(range(0, self.n_paths, self.block_size)):
            out.append((b, start, min(self.block_size, self.n_paths - start)))
        return out


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    n_paths: int
    seed: int
    wall_time: float

    def within(self, reference: float, n_se: float = 3.0, slack: float = 0.0) -> bool:
        return abs(self.mean - reference) <= n_se * self.std_error + slack


def collect(task: Task, cfg: McConfig) -> np.ndarray:
    """Per-path task outputs for all ``cfg.n_paths`` paths, in path order."""
    def one(block):
        b, start, n = block
        out = np.asarray(task(block_rng(cfg.master_seed, cfg.stream, b), n, start), dtype=float)
        if out.shape[:1] != (n,):
            raise ContractError(f"task returned leading shape {out.shape[:1]}, expected ({n},)")
        return out

    blocks = cfg.blocks()
    if cfg.workers == 1 or len(blocks) == 1:
        parts = [one(b) for b in blocks]
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            parts = list(pool.map(one, blocks))
    values = np.concatenate(parts, axis=0)
    bad = ~np.isfinite(values.reshape(values.shape[0], -1)).all(axis=1)
    if np.any(bad):
        raise NumericError(f"non-finite value at path index {int(np.argmax(bad))}")
    return values


def _pair_means(values: np.ndarray, cfg: McConfig) -> np.ndarray:
    # inside each block the second half mirrors the first
    out = []
    for _, start, n in cfg.blocks():
        if n % 2:
            raise ContractError("antithetic runs need an even number of paths per block")
        blk = values[start:start + n]
        out.append(0.5 * (blk[: n // 2] + blk[n // 2:]))
    return np.concatenate(out)


def run_mc(task: Task, cfg: McConfig) -> McEstimate:
    """Mean and standard error of a scalar per-path payoff."""
    t0 = time.perf_counter()
    values = collect(task, cfg)
    if values.ndim != 1:
        raise ContractError("run_mc needs a scalar payoff per path; use collect for vectors")
    if cfg.antithetic:
        values = _pair_means(values, cfg)
    m, se = mean_se(values)
    return McEstimate(m, se, cfg.n_paths, cfg.master_seed, time.perf_counter() - t0)
