"""The universal code: good-set test and plan selection, bit-exact
serialization, segmented encoding and per-decoder reconstruction.

Nothing here takes a source model. The encoder sees only the sequence, the
system (W and distortions), the codec targets and the shared catalog.

Bitstream layout, MSB first, fields concatenated in this order:
    l - 1        w bits, w = ceil(log2 k_eff) (0 when k_eff = 1)
    s            w bits
    code index   ceil(log2 count_l) bits
    payload      block codewords m_0..m_{B-1} as one radix-M integer,
                 m_0 most significant, in ceil(B log2 M) bits
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from app.bitstream import BitReader, Bitstream, BitWriter, radix_pack, radix_unpack, radix_width
from app.catalog import CatalogBudget, CodeCatalog, index_width
from app.empirical import nonoverlapping_empirical, pack_words, weighted_block_average
from app.errors import BitstreamError, EmptyCatalogSlot, IndexOutOfCatalog, ModelError
from app.model import SystemSpec, marginal_channel

logger = logging.getLogger(__name__)

# float slack on the good-set test; sums are formed in floating point
SELECTION_TOL = 1e-12


@dataclass(frozen=True)
class CodecConfig:
    rate: float
    delta: float
    distortion: tuple[float, ...]
    epsilon: float
    l_cap: int | None = None

    def __post_init__(self):
        if self.rate < 0 or self.delta <= 0 or self.epsilon <= 0:
            raise ModelError("need R >= 0, delta > 0 and epsilon > 0")
        if any(d < 0 for d in self.distortion):
            raise ModelError("distortion targets must be nonnegative")
        if self.l_cap is not None and self.l_cap < 1:
            raise ModelError("l_cap must be at least 1")
        object.__setattr__(self, "distortion", tuple(float(d) for d in self.distortion))

    @classmethod
    def for_system(cls, spec: SystemSpec, rate: float, delta: float, distortion, l_cap: int | None = None) -> CodecConfig:
        """Fixes epsilon = delta / (4J + 2 D_max) so that 4J eps + 2 eps D_max <= delta."""
        distortion = tuple(distortion)
        if len(distortion) != spec.J:
            raise ModelError(f"need {spec.J} distortion targets, got {len(distortion)}")
        epsilon = delta / (4 * spec.J + 2 * spec.d_max_global)
        return cls(rate=rate, delta=delta, distortion=distortion, epsilon=epsilon, l_cap=l_cap)

    @property
    def J(self) -> int:
        return len(self.distortion)

    @property
    def budget(self) -> CatalogBudget:
        return CatalogBudget(rate=self.rate, epsilon=self.epsilon)

    def thresholds(self) -> np.ndarray:
        """Delta_j + 4 J eps for every decoder."""
        return np.asarray(self.distortion) + 4 * self.J * self.epsilon


@dataclass(frozen=True)
class EncodePlan:
    l: int
    s: int
    code_index: int
    error_declared: bool
    slack: tuple[float, ...]


def window_cap(n: int) -> int:
    """k_n = floor(log2 log2 n), at least 1: the largest k with 2^(2^k) <= n."""
    if n < 4:
        raise ModelError(f"sequence length {n} is below 4")
    k = 1
    while 2 ** (2 ** (k + 1)) <= n:
        k += 1
    return k


def effective_cap(n: int, config: CodecConfig) -> int:
    k = window_cap(n)
    return min(k, config.l_cap) if config.l_cap is not None else k


def header_width(k_eff: int) -> int:
    return (k_eff - 1).bit_length()


def _sequence(x, size: int, what: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.int64)
    if x.ndim != 1:
        raise ModelError(f"{what} must be one-dimensional")
    if len(x) and (x.min() < 0 or x.max() >= size):
        raise ModelError(f"{what} symbol out of alphabet")
    return x


def _block_averages(x: np.ndarray, l: int, s: int, spec: SystemSpec, catalog: CodeCatalog) -> np.ndarray:
    """sum_a q_{l;s}(a|x) dbar_l^{(j)}(a, C) for every code of slot l, shape (count, J)."""
    dist = nonoverlapping_empirical(x, l, s, spec.x_size)
    return weighted_block_average(dist, catalog.stacked_tables(l))


def select_plan(x, spec: SystemSpec, config: CodecConfig, catalog: CodeCatalog) -> EncodePlan:
    """
    Among all (l, s, code) meeting the good-set condition for every decoder,
    picks the smallest max_j slack_j / d_max_j; ties go to smaller l, then s,
    then code index. Declares an error with plan (1, 0, 0) when none qualifies.
    """
    x = _sequence(x, spec.x_size, "source sequence")
    n = len(x)
    k_eff = effective_cap(n, config)
    targets = np.asarray(config.distortion)
    thresholds = config.thresholds() + SELECTION_TOL
    scale = np.array([d if d > 0 else 1.0 for d in spec.d_max])

    best: tuple | None = None
    best_slack: tuple[float, ...] = ()
    for l in range(1, k_eff + 1):
        for s in range(l):
            sums = _block_averages(x, l, s, spec, catalog)
            qualifies = np.all(sums <= thresholds, axis=1)
            scores = ((sums - targets) / scale).max(axis=1)
            for k in np.flatnonzero(qualifies):
                candidate = (float(scores[k]), l, s, int(k))
                if best is None or candidate < best:
                    best = candidate
                    best_slack = tuple(float(v) for v in sums[k] - targets)

    if best is None:
        sums = _block_averages(x, 1, 0, spec, catalog)[0]
        plan = EncodePlan(l=1, s=0, code_index=0, error_declared=True,
                          slack=tuple(float(v) for v in sums - targets))
    else:
        _, l, s, k = best
        plan = EncodePlan(l=l, s=s, code_index=k, error_declared=False, slack=best_slack)
    logger.debug(
        "Plan selected",
        extra={"n": n, "l": plan.l, "s": plan.s, "code_index": plan.code_index,
               "error_declared": plan.error_declared},
    )
    return plan


def encode(x, spec: SystemSpec, config: CodecConfig, catalog: CodeCatalog) -> tuple[Bitstream, EncodePlan]:
    x = _sequence(x, spec.x_size, "source sequence")
    plan = select_plan(x, spec, config, catalog)
    n = len(x)
    w = header_width(effective_cap(n, config))
    code = catalog.code(plan.l, plan.code_index)
    blocks = (n - plan.s) // plan.l
    segment = x[plan.s : plan.s + blocks * plan.l].reshape(blocks, plan.l)
    messages = code.enc[pack_words(segment, spec.x_size)]

    writer = BitWriter()
    writer.write_bits(plan.l - 1, w)
    writer.write_bits(plan.s, w)
    writer.write_bits(plan.code_index, index_width(catalog, plan.l))
    writer.write_bits(radix_pack(messages, code.M), radix_width(code.M, blocks))
    return writer.getvalue(), plan


def decode(bits: Bitstream, j: int, y, n: int, spec: SystemSpec, config: CodecConfig, catalog: CodeCatalog) -> np.ndarray:
    """
    Reconstruction of decoder j from the bitstream and its own side
    information. Positions outside the coded blocks get symbol 0.
    """
    slot = spec.decoder_slot(j)
    y_size = spec.y_size(j)
    y = _sequence(y, y_size, "side information")
    if len(y) != n:
        raise ModelError(f"side information has length {len(y)}, expected {n}")
    k_eff = effective_cap(n, config)
    w = header_width(k_eff)

    reader = BitReader(bits)
    l = reader.read_bits(w) + 1
    s = reader.read_bits(w)
    if l > k_eff or s >= l:
        raise IndexOutOfCatalog(f"header names l={l}, s={s} outside the search range (k={k_eff})")
    try:
        count = catalog.count(l)
    except EmptyCatalogSlot as exc:
        raise IndexOutOfCatalog(str(exc)) from exc
    k = reader.read_bits(index_width(catalog, l))
    if k >= count:
        raise IndexOutOfCatalog(f"code index {k} outside slot l={l} of {count} codes")
    code = catalog.code(l, k)
    blocks = (n - s) // l
    payload = reader.read_bits(radix_width(code.M, blocks))
    if reader.remaining():
        raise BitstreamError(f"{reader.remaining()} trailing bits after the payload")
    messages = np.asarray(radix_unpack(payload, code.M, blocks), dtype=np.int64)

    sides = pack_words(y[s : s + blocks * l].reshape(blocks, l), y_size)
    zt = np.zeros(n, dtype=np.int64)
    zt[s : s + blocks * l] = code.dec[slot][messages, sides].reshape(-1)
    return zt


def tail_fill_cost(spec: SystemSpec, j: int) -> np.ndarray:
    """Expected distortion of the fill symbol 0 given each source letter."""
    marginal = marginal_channel(spec, j)
    return marginal.table.sum(axis=1) @ spec.d1[j - 1][0]


def exact_conditional_distortion(x, plan: EncodePlan, spec: SystemSpec, catalog: CodeCatalog, j: int) -> float:
    """dbar_n^{(j)}(x^n, C_n) of the universal code: coded blocks plus fill positions."""
    x = _sequence(x, spec.x_size, "source sequence")
    spec.decoder_slot(j)
    n = len(x)
    l, s = plan.l, plan.s
    blocks = (n - s) // l
    table = catalog.distortion_table(l, plan.code_index).for_decoder(j)
    words = pack_words(x[s : s + blocks * l].reshape(blocks, l), spec.x_size)
    fill = tail_fill_cost(spec, j)
    tail = np.concatenate([x[:s], x[s + blocks * l :]])
    return float(l * table[words].sum() + fill[tail].sum()) / n


def distortion_bound(config: CodecConfig, spec: SystemSpec, n: int, j: int) -> float:
    """Per-sequence guarantee Delta_j + 4J eps + 2 k_n d_max_j / n on the good set."""
    slot = spec.decoder_slot(j)
    return config.distortion[slot] + 4 * config.J * config.epsilon + 2 * window_cap(n) * spec.d_max[slot] / n


def expected_distortion_bound(config: CodecConfig, spec: SystemSpec, n: int, p_error: float) -> tuple[float, ...]:
    """Averaged guarantee: adds p_error * D_max for sequences outside the good set."""
    d = spec.d_max_global
    base = 4 * config.J * config.epsilon + 2 * window_cap(n) * d / n + p_error * d
    return tuple(target + base for target in config.distortion)


def rate_threshold(config: CodecConfig, catalog: CodeCatalog) -> int:
    """
    n0 such that bits/n <= R + delta for every sequence of length n >= n0:
    bits <= 2w + index bits + 1 + n log2(M_l)/l.
    """
    top = min(config.l_cap, catalog.l_max) if config.l_cap is not None else catalog.l_max
    slots = range(1, top + 1)
    peak = max(math.log2(max(c.M for c in catalog.codes(l))) / l for l in slots)
    header = 2 * header_width(config.l_cap or catalog.l_max)
    overhead = header + max(index_width(catalog, l) for l in slots) + 1
    headroom = config.rate + config.delta - peak
    if headroom <= 0:
        raise ModelError("catalog rates leave no headroom under R + delta")
    return max(4, math.ceil(overhead / headroom))
