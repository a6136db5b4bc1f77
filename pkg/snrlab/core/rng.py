"""
可拆分的计数器型随机流

每条流由 (seed, purpose, t, block) 唯一确定，底层为 Philox。
链按固定大小 CHAIN_BLOCK 分块，块内第 i 行属于链 block·CHAIN_BLOCK + i；
一次总是抽满整块再截取，因此某条链拿到的随机数只取决于
(seed, chain_id, t, purpose)，与链总数和工作线程数无关。
"""

from concurrent.futures import ThreadPoolExecutor
from enum import IntEnum
from typing import Callable, TypeVar

import numpy as np

from ..models.mixture import GaussianMixture

CHAIN_BLOCK = 512

T = TypeVar("T")


class Purpose(IntEnum):
    INIT = 1
    STEP_NOISE = 2
    BIAS_NOISE = 3
    DATA = 4
    FORWARD_NOISE = 5
    PROJECTION = 6


def stream(seed: int, purpose: Purpose, t: int = 0, block: int = 0) -> np.random.Generator:
    """返回 (seed, purpose, t, block) 对应的独立生成器"""
    ss = np.random.SeedSequence(
        entropy=int(seed), spawn_key=(int(purpose), int(t), int(block))
    )
    return np.random.Generator(np.random.Philox(ss))


def block_normal(
    seed: int,
    purpose: Purpose,
    t: int,
    block: int,
    n: int,
    shape: tuple[int, ...],
) -> np.ndarray:
    """
    块内前 n 条链的标准正态抽样

    总是抽满 CHAIN_BLOCK 行后截取，保证与 n 无关。
    """
    if not 0 < n <= CHAIN_BLOCK:
        raise ValueError(f"块内链数必须位于 [1, {CHAIN_BLOCK}]，收到 {n}")
    draws = stream(seed, purpose, t, block).standard_normal((CHAIN_BLOCK,) + tuple(shape))
    return draws[:n]


def block_ranges(n_chains: int) -> list[tuple[int, int, int]]:
    """把 n_chains 切成 (block, start, stop) 列表"""
    if n_chains < 1:
        raise ValueError(f"链数必须至少为 1，收到 {n_chains}")
    n_blocks = (n_chains + CHAIN_BLOCK - 1) // CHAIN_BLOCK
    return [
        (b, b * CHAIN_BLOCK, min((b + 1) * CHAIN_BLOCK, n_chains))
        for b in range(n_blocks)
    ]


def block_data(seed: int, block: int, n: int, gmm: GaussianMixture) -> np.ndarray:
    """
    块内前 n 个数据样本 x₀ ~ q(x₀)

    成分选择与标准正态噪声都来自同一条 DATA 流，并按整块抽取。
    """
    g = stream(seed, Purpose.DATA, 0, block)
    u = g.random(CHAIN_BLOCK)
    noise = g.standard_normal((CHAIN_BLOCK,) + tuple(gmm.shape))
    ks = np.searchsorted(np.cumsum(gmm.weights), u, side="right")
    ks = np.minimum(ks, gmm.K - 1)
    x0 = gmm.means[ks] + np.sqrt(gmm.variances[ks]).reshape(-1, 1, 1, 1) * noise
    return x0[:n]


def map_blocks(fn: Callable[[int, int, int], T], n_chains: int, threads: int = 1) -> list[T]:
    """
    对每个 (block, start, stop) 调用 fn，结果按块序返回

    各块互不依赖，threads > 1 时用线程池并行。
    """
    blocks = block_ranges(n_chains)
    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda b: fn(*b), blocks))
    return [fn(*b) for b in blocks]


def sample_data(seed: int, n: int, gmm: GaussianMixture) -> np.ndarray:
    """n 个数据样本，按块从 DATA 流抽取后拼接"""
    return np.concatenate([block_data(seed, b, stop - start, gmm) for b, start, stop in block_ranges(n)])
