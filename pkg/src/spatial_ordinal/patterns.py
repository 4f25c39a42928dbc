"""
Ordinal patterns of neighbour blocks.

Patterns are indexed by the lexicographic rank of their permutation word
``(r_0, ..., r_{m-1})``, where ``r`` is the stable argsort of the block
values. Rank ``m! - 1`` (the word ``(m-1, ..., 1, 0)``) is the reference
pattern that the indicator vectors and log-ratios leave out.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

from .errors import InvalidInputError
from .geometry import PointCloud

__all__ = [
    "MAX_M",
    "PatternFrequencies",
    "ordinal_pattern",
    "ordinal_words",
    "pattern_ranks",
    "rank_to_word",
    "word_to_rank",
    "all_words",
    "pattern_frequencies",
    "indicator_matrix",
    "indicators_from_ranks",
    "tie_count",
]

MAX_M = 6


def _check_m(m: int, cap: int = MAX_M) -> None:
    if not 2 <= m <= cap:
        raise InvalidInputError(f"embedding dimension must lie in [2, {cap}], got {m}")


def word_to_rank(word) -> int:
    w = [int(x) for x in word]
    m = len(w)
    if sorted(w) != list(range(m)):
        raise InvalidInputError(f"{tuple(word)} is not a permutation of 0..{m - 1}")
    rank = 0
    for i, wi in enumerate(w):
        smaller = sum(1 for wj in w[i + 1:] if wj < wi)
        rank += smaller * factorial(m - 1 - i)
    return rank


def rank_to_word(rank: int, m: int) -> tuple[int, ...]:
    if m < 1:
        raise InvalidInputError("m must be positive")
    if not 0 <= rank < factorial(m):
        raise InvalidInputError(f"rank {rank} out of range for m={m}")
    pool = list(range(m))
    word = []
    for i in range(m - 1, -1, -1):
        q, rank = divmod(rank, factorial(i))
        word.append(pool.pop(q))
    return tuple(word)


def all_words(m: int) -> list[tuple[int, ...]]:
    return [rank_to_word(r, m) for r in range(factorial(m))]


def ordinal_words(block_values: np.ndarray) -> np.ndarray:
    """Row-wise stable argsort of an ``(n, m)`` value array."""
    vals = np.asarray(block_values, dtype=float)
    if not np.all(np.isfinite(vals)):
        raise InvalidInputError("block values must be finite")
    return np.argsort(vals, axis=-1, kind="stable")


def _ranks_from_words(words: np.ndarray) -> np.ndarray:
    n, m = words.shape
    ranks = np.zeros(n, dtype=np.int64)
    for i in range(m - 1):
        smaller = (words[:, i + 1:] < words[:, i:i + 1]).sum(axis=1)
        ranks += smaller * factorial(m - 1 - i)
    return ranks


def pattern_ranks(block_values: np.ndarray) -> np.ndarray:
    """Pattern rank for each row of an ``(n, m)`` array of block values."""
    vals = np.atleast_2d(block_values)
    return _ranks_from_words(ordinal_words(vals))


def ordinal_pattern(block_values) -> int:
    """Rank of the ordinal pattern of a single block."""
    vals = np.asarray(block_values, dtype=float)
    if vals.ndim != 1 or len(vals) < 2:
        raise InvalidInputError("a block needs at least two values")
    return int(pattern_ranks(vals[None, :])[0])


@dataclass(frozen=True)
class PatternFrequencies:
    counts: np.ndarray
    m: int

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @property
    def proportions(self) -> np.ndarray:
        return self.counts / self.n


def _block_values(cloud: PointCloud, blocks: np.ndarray) -> np.ndarray:
    blocks = np.asarray(blocks)
    if blocks.ndim != 2 or len(blocks) != cloud.n:
        raise InvalidInputError("blocks do not match the point cloud")
    return cloud.values[blocks]


def pattern_frequencies(cloud: PointCloud, blocks: np.ndarray) -> PatternFrequencies:
    m = np.asarray(blocks).shape[1]
    _check_m(m)
    ranks = pattern_ranks(_block_values(cloud, blocks))
    counts = np.bincount(ranks, minlength=factorial(m)).astype(np.int64)
    return PatternFrequencies(counts, m)


def indicator_matrix(cloud: PointCloud, blocks: np.ndarray) -> np.ndarray:
    """One-hot pattern indicators over all but the reference pattern.

    Rows whose pattern is the reference pattern are all zero.
    """
    m = np.asarray(blocks).shape[1]
    _check_m(m)
    ranks = pattern_ranks(_block_values(cloud, blocks))
    return indicators_from_ranks(ranks, m)


def indicators_from_ranks(ranks: np.ndarray, m: int) -> np.ndarray:
    d = factorial(m) - 1
    Y = np.zeros((len(ranks), d))
    keep = ranks < d
    Y[np.flatnonzero(keep), ranks[keep]] = 1.0
    return Y


def tie_count(cloud: PointCloud, blocks: np.ndarray) -> int:
    """Number of blocks holding at least two equal values."""
    vals = np.sort(_block_values(cloud, blocks), axis=1)
    return int(np.any(np.diff(vals, axis=1) == 0, axis=1).sum())
