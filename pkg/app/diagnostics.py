"""Experimenter-side quantities around the good set. These may look at the
true source; the codec in app.universal never does.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import stats

from app.catalog import CodeCatalog
from app.empirical import (
    EmpiricalDistribution,
    nonoverlapping_empirical,
    overlapping_empirical,
    weighted_block_average,
)
from app.errors import ModelError
from app.model import IIDSource, SourceModel, SystemSpec
from app.universal import SELECTION_TOL, CodecConfig, effective_cap


@dataclass(frozen=True)
class PremiseReport:
    """First catalog code whose true expected distortion is within Delta_j + eps."""

    satisfied: bool
    l: int | None = None
    code_index: int | None = None
    expected: tuple[float, ...] = ()


def excess_function(catalog: CodeCatalog, config: CodecConfig, l: int, code_index: int) -> np.ndarray:
    """f^{(j)}(a) = dbar_l^{(j)}(a, C_l) - Delta_j - eps, shape (J, |X|^l)."""
    tables = catalog.distortion_table(l, code_index).stacked()
    return tables - np.asarray(config.distortion)[:, None] - config.epsilon


def _shifted_blocks(x, l: int, x_size: int) -> list[EmpiricalDistribution]:
    """Non-overlapping distributions of every shift that holds a complete block."""
    n = len(x)
    if not 1 <= l <= n:
        raise ModelError(f"block length {l} outside 1..{n}")
    return [nonoverlapping_empirical(x, l, s, x_size) for s in range(l) if (n - s) // l]


def shift_averaged_excess(x, excess: np.ndarray, l: int, x_size: int) -> np.ndarray:
    """
    (1/l) sum_s sum_a q_{l;s}(a|x) f^{(j)}(a) for every decoder. A shift
    with no complete block adds nothing but still counts in the 1/l.
    """
    total = np.zeros(excess.shape[0])
    for dist in _shifted_blocks(x, l, x_size):
        total += weighted_block_average(dist, excess)
    return total / l


def overlap_identity_holds(x, l: int, x_size: int) -> bool:
    """(n-l+1) p_l(a) == sum_s floor((n-s)/l) q_{l;s}(a), on integer counts."""
    overlapping = overlapping_empirical(x, l, x_size)
    shifted = sum(
        (dist.counts for dist in _shifted_blocks(x, l, x_size)),
        start=np.zeros(x_size**l, dtype=np.int64),
    )
    return bool(np.array_equal(overlapping.counts, shifted))


def shift_average_factor(n: int, l: int) -> Fraction:
    """
    c with c p_l(a) >= (1/l) sum_s q_{l;s}(a) for every sequence and word:
    (n-l+1)/(n-2l+2), which is (n-l+1)/(n-l) for l <= 2. The latter fails
    for l >= 3 (x = 0011100, a = 111 gives 1/4 < 1/3).
    """
    if n < 2 * l - 1:
        raise ModelError(f"need n >= 2l - 1, got n={n}, l={l}")
    return Fraction(n - l + 1, n - 2 * l + 2)


def shift_average_bound_holds(x, l: int, x_size: int, factor: Fraction | None = None) -> bool:
    """factor * p_l(a) >= (1/l) sum_s q_{l;s}(a) for every word, in exact rationals."""
    n = len(x)
    factor = shift_average_factor(n, l) if factor is None else Fraction(factor)
    overlapping = overlapping_empirical(x, l, x_size)
    shifted = [nonoverlapping_empirical(x, l, s, x_size) for s in range(l)]
    for a in np.flatnonzero(overlapping.counts):
        left = factor * Fraction(int(overlapping.counts[a]), overlapping.total)
        right = sum(Fraction(int(d.counts[a]), d.total) for d in shifted) / l
        if left < right:
            return False
    return True


def check_premise(spec: SystemSpec, config: CodecConfig, catalog: CodeCatalog, source: SourceModel) -> PremiseReport:
    """Scans the catalog in (l, index) order under the true law of X^l."""
    top = min(config.l_cap, catalog.l_max) if config.l_cap is not None else catalog.l_max
    limits = np.asarray(config.distortion) + config.epsilon
    for l in range(1, top + 1):
        expected = catalog.stacked_tables(l) @ source.block_pmf(l)  # (count, J)
        for k in range(len(expected)):
            if np.all(expected[k] <= limits + SELECTION_TOL):
                return PremiseReport(True, l, k, tuple(float(v) for v in expected[k]))
    return PremiseReport(False)


def binomial_error_oracle(spec: SystemSpec, config: CodecConfig, catalog: CodeCatalog, source: SourceModel, n: int) -> float | None:
    """
    Exact P(error declared) when the search covers only l=1 on an i.i.d.
    binary source: every block average depends only on the count of ones.
    None when those conditions do not hold.
    """
    if not isinstance(source, IIDSource) or spec.x_size != 2:
        return None
    if effective_cap(n, config) != 1:
        return None
    tables = catalog.stacked_tables(1)  # (count, J, 2)
    counts = np.arange(n + 1)
    ones = counts[:, None, None]
    averages = ((n - ones) * tables[None, :, :, 0] + ones * tables[None, :, :, 1]) / n
    violated = np.any(averages > config.thresholds() + SELECTION_TOL, axis=2)
    error = np.all(violated, axis=1)
    return float(stats.binom.pmf(counts, n, source.pmf[1])[error].sum())
