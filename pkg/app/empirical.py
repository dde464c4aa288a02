"""Overlapping and non-overlapping empirical distributions of a sequence.

Words of length l over an alphabet of size b are packed as radix-b integers,
first symbol most significant, so packed order is lexicographic order.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from app.errors import ModelError

OVERLAPPING = "overlapping"


def radix_weights(base: int, l: int) -> np.ndarray:
    return base ** np.arange(l - 1, -1, -1, dtype=np.int64)


def pack_words(blocks: np.ndarray, base: int) -> np.ndarray:
    """Packs rows of an (N, l) digit array into word indices."""
    blocks = np.asarray(blocks, dtype=np.int64)
    return blocks @ radix_weights(base, blocks.shape[-1])


@lru_cache(maxsize=None)
def all_words(base: int, l: int) -> np.ndarray:
    """Digits of every word of length l in packed order, shape (base**l, l)."""
    index = np.arange(base**l, dtype=np.int64)
    out = (index[:, None] // radix_weights(base, l)[None, :]) % base
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class EmpiricalDistribution:
    l: int
    shift: int | str  # 0..l-1, or OVERLAPPING
    counts: np.ndarray  # exact integer counts over packed words
    total: int

    @property
    def pmf(self) -> np.ndarray:
        return self.counts / self.total

    def __str__(self) -> str:
        base = round(len(self.counts) ** (1 / self.l))
        words = all_words(base, self.l)
        shown = ", ".join(
            f"{''.join(map(str, words[k]))}:{self.counts[k]}/{self.total}"
            for k in np.flatnonzero(self.counts)
        )
        return f"EmpiricalDistribution(l={self.l}, shift={self.shift}, {{{shown}}})"


def _as_sequence(x, x_size: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.int64)
    if x.ndim != 1:
        raise ModelError("sequence must be one-dimensional")
    if len(x) and (x.min() < 0 or x.max() >= x_size):
        raise ModelError("symbol out of alphabet")
    return x


def nonoverlapping_empirical(x, l: int, s: int, x_size: int) -> EmpiricalDistribution:
    """
    Type of the disjoint blocks x[s + i*l : s + (i+1)*l], 0 <= i < (n-s)//l
    (0-based slice of the 1-based x_{il+1+s} .. x_{(i+1)l+s}).
    """
    x = _as_sequence(x, x_size)
    n = len(x)
    if not 1 <= l <= n:
        raise ModelError(f"block length {l} outside 1..{n}")
    if not 0 <= s < l:
        raise ModelError(f"shift {s} outside 0..{l - 1}")
    total = (n - s) // l
    if total == 0:
        raise ModelError("no complete block after the shift")
    blocks = x[s : s + total * l].reshape(total, l)
    counts = np.bincount(pack_words(blocks, x_size), minlength=x_size**l)
    return EmpiricalDistribution(l=l, shift=s, counts=counts, total=total)


def overlapping_empirical(x, l: int, x_size: int) -> EmpiricalDistribution:
    """Type of all n-l+1 sliding windows of length l."""
    x = _as_sequence(x, x_size)
    n = len(x)
    if not 1 <= l <= n:
        raise ModelError(f"window length {l} outside 1..{n}")
    windows = sliding_window_view(x, l)
    counts = np.bincount(pack_words(windows, x_size), minlength=x_size**l)
    return EmpiricalDistribution(l=l, shift=OVERLAPPING, counts=counts, total=n - l + 1)


def weighted_block_average(dist: EmpiricalDistribution, values):
    """
    Sum over words of pmf(a) * values(a). Words run along the last axis of
    `values`; leading axes are kept, so a stack of tables averages at once.
    """
    values = np.asarray(values, dtype=float)
    if values.shape[-1:] != dist.counts.shape:
        raise ModelError(f"values table has shape {values.shape}, expected (..., {len(dist.counts)})")
    average = values @ dist.counts / dist.total
    return float(average) if values.ndim == 1 else average
