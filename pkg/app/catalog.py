"""The shared, deterministically ordered family of candidate codes per block
length, known to the encoder and every decoder.

A catalog equals the full code class only in enumerate mode; design mode
fills each slot with codes trained by Lloyd-style alternation.
"""
from __future__ import annotations

import hashlib
import itertools
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from app.blockcode import (
    BlockCode,
    BlockDistortionTable,
    block_geometry,
    check_pmf,
    distortion_table,
    dumps_codes,
    load_code_file,
    max_codewords,
    message_distortions,
)
from app.config import CatalogDescriptor, settings
from app.errors import CatalogError, CountExceedsLimit, EmptyCatalogSlot
from app.model import SourceModel, SystemSpec

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CatalogBudget:
    rate: float
    epsilon: float

    def codewords(self, l: int) -> int:
        return max_codewords(l, self.rate, self.epsilon)


@dataclass(frozen=True, eq=False)
class CodeCatalog:
    spec: SystemSpec
    budget: CatalogBudget
    descriptor: CatalogDescriptor
    slots: dict[int, tuple[BlockCode, ...]]
    _tables: dict = field(default_factory=dict, repr=False)

    @property
    def l_max(self) -> int:
        return max(self.slots) if self.slots else 0

    def codes(self, l: int) -> tuple[BlockCode, ...]:
        codes = self.slots.get(l, ())
        if not codes:
            raise EmptyCatalogSlot(l)
        return codes

    def count(self, l: int) -> int:
        return len(self.codes(l))

    def code(self, l: int, index: int) -> BlockCode:
        return self.codes(l)[index]

    def distortion_table(self, l: int, index: int) -> BlockDistortionTable:
        """Memoized per (l, index); codes and spec never change."""
        key = (l, index)
        if key not in self._tables:
            self._tables[key] = distortion_table(self.spec, self.code(l, index))
        return self._tables[key]

    def stacked_tables(self, l: int) -> np.ndarray:
        """All tables of slot l as an array of shape (count, J, |X|^l)."""
        key = ("stacked", l)
        if key not in self._tables:
            self._tables[key] = np.stack(
                [self.distortion_table(l, k).stacked() for k in range(self.count(l))]
            )
        return self._tables[key]

    def fingerprint(self) -> str:
        digest = hashlib.sha256()
        for l in sorted(self.slots):
            for code in self.slots[l]:
                digest.update(code.key())
        return digest.hexdigest()


def index_width(catalog: CodeCatalog, l: int) -> int:
    """ceil(log2 count_l) bits; 0 for a single-code slot."""
    return (catalog.count(l) - 1).bit_length()


def enumeration_count(spec: SystemSpec, l: int, M: int) -> int:
    count = M ** (spec.x_size**l)
    for j in range(1, spec.J + 1):
        count *= (spec.zt_size(j) ** l) ** (M * spec.y_size(j) ** l)
    return count


def enumerate_codes(spec: SystemSpec, l: int, budget: CatalogBudget, limit: int) -> list[BlockCode]:
    """Every total encoder/decoder table with M = floor(2^{l(R+eps)}), in lexicographic order."""
    M = budget.codewords(l)
    count = enumeration_count(spec, l, M)
    if count > limit:
        raise CountExceedsLimit(count, limit)
    encoders = itertools.product(range(M), repeat=spec.x_size**l)
    decoder_sets = [
        itertools.product(range(spec.zt_size(j)), repeat=M * spec.y_size(j) ** l * l)
        for j in range(1, spec.J + 1)
    ]
    codes = []
    for enc, *decs in itertools.product(encoders, *[list(d) for d in decoder_sets]):
        dec = tuple(
            np.array(table).reshape(M, spec.y_size(j) ** l, l)
            for j, table in enumerate(decs, start=1)
        )
        codes.append(BlockCode(l=l, M=M, x_size=spec.x_size, enc=np.array(enc), dec=dec))
    return codes


@dataclass(frozen=True, eq=False)
class LloydResult:
    code: BlockCode
    objectives: tuple[float, ...]

    @property
    def objective(self) -> float:
        return self.objectives[-1]


def _best_decoder(spec: SystemSpec, j: int, l: int, M: int, enc: np.ndarray, pmf: np.ndarray) -> np.ndarray:
    geo = block_geometry(spec, j, l)
    weight = pmf[:, None] * geo.side_prob  # (|X|^l, |Y|^l)
    assignment = np.zeros((len(enc), M))
    assignment[np.arange(len(enc)), enc] = 1.0
    dec = np.empty((M, len(geo.sides), l), dtype=np.int64)
    for i in range(l):
        cost = geo.cost[geo.words[:, None, i], geo.sides[None, :, i]]  # (|X|^l, |Y|^l, |Z~|)
        per_symbol = np.einsum("am,ayt->myt", assignment, weight[:, :, None] * cost)
        dec[:, :, i] = per_symbol.argmin(axis=2)  # ties: lowest symbol
    return dec


def lloyd_design(
    spec: SystemSpec,
    l: int,
    M: int,
    training_pmf,
    weights=None,
    iterations: int = 50,
    seed: int = 0,
) -> LloydResult:
    """
    Alternates an optimal encoder for fixed decoders with optimal position-wise
    decoders for a fixed encoder. The weighted objective never increases.
    """
    if M < 1:
        raise CatalogError("a code needs at least one codeword")
    pmf = check_pmf(training_pmf, spec.x_size**l)
    weights = np.ones(spec.J) if weights is None else np.asarray(weights, dtype=float)
    rng = np.random.default_rng(seed)
    dec = [rng.integers(0, spec.zt_size(j), size=(M, spec.y_size(j) ** l, l)) for j in range(1, spec.J + 1)]
    enc = np.zeros(spec.x_size**l, dtype=np.int64)
    objectives: list[float] = []
    for _ in range(iterations):
        costs = sum(weights[j - 1] * message_distortions(spec, j, dec[j - 1]) for j in range(1, spec.J + 1))
        new_enc = costs.argmin(axis=1)  # ties: lowest codeword
        new_dec = [_best_decoder(spec, j, l, M, new_enc, pmf) for j in range(1, spec.J + 1)]
        final = sum(weights[j - 1] * message_distortions(spec, j, new_dec[j - 1]) for j in range(1, spec.J + 1))
        objectives.append(float(pmf @ final[np.arange(len(new_enc)), new_enc]))
        unchanged = np.array_equal(new_enc, enc) and all(
            np.array_equal(a, b) for a, b in zip(new_dec, dec)
        )
        enc, dec = new_enc, new_dec
        if unchanged:
            break
    code = BlockCode(l=l, M=M, x_size=spec.x_size, enc=enc, dec=tuple(dec))
    logger.debug(
        "Lloyd design finished",
        extra={"l": l, "M": M, "iterations": len(objectives), "objective": objectives[-1]},
    )
    return LloydResult(code=code, objectives=tuple(objectives))


def design_code(spec, l, M, training_pmf, weights=None, iterations: int = 50, seed: int = 0) -> BlockCode:
    return lloyd_design(spec, l, M, training_pmf, weights, iterations, seed).code


def _training_pmf(name: str, spec: SystemSpec, l: int, sources: dict[str, SourceModel]) -> np.ndarray:
    if name == "uniform":
        return np.full(spec.x_size**l, 1.0 / spec.x_size**l)
    if name not in sources:
        raise CatalogError(f"no training source named '{name}'")
    return sources[name].block_pmf(l)


def _default_weights(spec: SystemSpec) -> tuple[tuple[float, ...], ...]:
    return (tuple(1.0 / d if d > 0 else 1.0 for d in spec.d_max),)


def build_catalog(
    spec: SystemSpec,
    budget: CatalogBudget,
    descriptor: CatalogDescriptor,
    training_sources: dict[str, SourceModel] | None = None,
) -> CodeCatalog:
    """
    Slot l holds injected file codes (file order), then enumerated or designed
    codes; exact duplicates keep their first occurrence.
    """
    training_sources = training_sources or {}
    injected: dict[int, list[BlockCode]] = {}
    for path in descriptor.code_files:
        for code in load_code_file(path):
            code.check_compatible(spec)
            if not code.in_class(budget.rate, budget.epsilon):
                raise CatalogError(
                    f"code from {Path(path).name} has M={code.M} above the budget "
                    f"{budget.codewords(code.l)} at l={code.l}"
                )
            if code.l > descriptor.l_max:
                logger.warning(
                    "Skipping injected code beyond l_max",
                    extra={"path": str(path), "l": code.l, "l_max": descriptor.l_max},
                )
                continue
            injected.setdefault(code.l, []).append(code)

    weights = descriptor.weights or _default_weights(spec)
    slots: dict[int, tuple[BlockCode, ...]] = {}
    for l in range(1, descriptor.l_max + 1):
        candidates = list(injected.get(l, []))
        if descriptor.mode == "enumerate":
            limit = descriptor.limit if descriptor.limit is not None else settings.catalog_limit
            candidates.extend(enumerate_codes(spec, l, budget, limit))
        elif descriptor.mode == "design":
            M = budget.codewords(l)
            for t, name in enumerate(descriptor.training):
                pmf = _training_pmf(name, spec, l, training_sources)
                for w, weight in enumerate(weights):
                    for restart in range(descriptor.restarts):
                        seed = np.random.SeedSequence([descriptor.seed, l, t, w, restart])
                        candidates.append(
                            design_code(
                                spec, l, M, pmf, weight, descriptor.iterations,
                                int(seed.generate_state(1)[0]),
                            )
                        )
        seen: set[bytes] = set()
        unique = []
        for code in candidates:
            key = code.key()
            if key not in seen:
                seen.add(key)
                unique.append(code)
        if not unique:
            raise EmptyCatalogSlot(l)
        slots[l] = tuple(unique)
        logger.info(
            "Catalog slot built",
            extra={"l": l, "codes": len(unique), "index_bits": (len(unique) - 1).bit_length()},
        )
    return CodeCatalog(spec=spec, budget=budget, descriptor=descriptor, slots=slots)


def export_catalog(catalog: CodeCatalog, path: str | Path) -> None:
    """Writes every slot, in catalog order, in the block code text format."""
    codes = [code for l in sorted(catalog.slots) for code in catalog.slots[l]]
    Path(path).write_text(dumps_codes(codes))

