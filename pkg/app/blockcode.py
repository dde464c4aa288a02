"""Length-l block codes and their exact per-block expected distortions."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from app.empirical import all_words, pack_words
from app.errors import CodeError, ModelError
from app.model import SystemSpec, marginal_channel

logger = logging.getLogger(__name__)

PMF_TOL = 1e-10


def max_codewords(l: int, rate: float, epsilon: float) -> int:
    """floor(2^{l(R+eps)}): the codeword budget of class C_l."""
    return max(1, math.floor(2 ** (l * (rate + epsilon))))


@dataclass(frozen=True, eq=False)
class BlockCode:
    """
    Encoder table enc[a] over packed words of X^l, and for each decoder a
    table dec[j][m, y] of reconstruction blocks, shape (M, |Y_j|^l, l).
    """

    l: int
    M: int
    x_size: int
    enc: np.ndarray
    dec: tuple[np.ndarray, ...]

    def __post_init__(self):
        if self.l < 1 or self.M < 1:
            raise CodeError("block length and codeword count must be positive")
        enc = np.array(self.enc, dtype=np.int64)
        if enc.shape != (self.x_size**self.l,):
            raise CodeError(f"encoder table has shape {enc.shape}, expected ({self.x_size ** self.l},)")
        if enc.min() < 0 or enc.max() >= self.M:
            raise CodeError("encoder emits an index outside 0..M-1")
        dec = []
        for table in self.dec:
            table = np.array(table, dtype=np.int64)
            if table.ndim != 3 or table.shape[0] != self.M or table.shape[2] != self.l:
                raise CodeError(f"decoder table has shape {table.shape}")
            if table.min() < 0:
                raise CodeError("negative reconstruction symbol")
            table.setflags(write=False)
            dec.append(table)
        if not dec:
            raise CodeError("a code needs at least one decoder")
        enc.setflags(write=False)
        object.__setattr__(self, "enc", enc)
        object.__setattr__(self, "dec", tuple(dec))

    @property
    def J(self) -> int:
        return len(self.dec)

    @property
    def rate(self) -> float:
        return math.log2(self.M) / self.l

    def key(self) -> bytes:
        """Exact table identity, used for deduplication."""
        parts = [np.array([self.l, self.M, self.x_size], dtype=np.int64).tobytes(), self.enc.tobytes()]
        for table in self.dec:
            parts.append(np.array(table.shape, dtype=np.int64).tobytes())
            parts.append(table.tobytes())
        return b"|".join(parts)

    def in_class(self, rate: float, epsilon: float) -> bool:
        return self.M <= max_codewords(self.l, rate, epsilon)

    def check_compatible(self, spec: SystemSpec) -> None:
        if self.x_size != spec.x_size or self.J != spec.J:
            raise CodeError("code does not match the system's source alphabet or decoder count")
        for j in range(1, spec.J + 1):
            table = self.dec[j - 1]
            if table.shape[1] != spec.y_size(j) ** self.l:
                raise CodeError(f"decoder {j} table does not cover Y_{j}^{self.l}")
            if table.max() >= spec.zt_size(j):
                raise CodeError(f"decoder {j} emits a symbol outside its alphabet")


@dataclass(frozen=True, eq=False)
class BlockDistortionTable:
    """values[j-1][a] = exact expected distortion of decoder j on word a."""

    code: BlockCode
    values: tuple[np.ndarray, ...]

    def for_decoder(self, j: int) -> np.ndarray:
        return self.values[j - 1]

    def stacked(self) -> np.ndarray:
        return np.stack(self.values)


@dataclass(frozen=True, eq=False)
class BlockGeometry:
    words: np.ndarray  # (|X|^l, l)
    sides: np.ndarray  # (|Y_j|^l, l)
    side_prob: np.ndarray  # P(y^l | a^l), shape (|X|^l, |Y_j|^l)
    cost: np.ndarray  # E[d(zt, Z) | x, y], shape (|X|, |Y_j|, |Z~_j|)


@lru_cache(maxsize=None)
def block_geometry(spec: SystemSpec, j: int, l: int) -> BlockGeometry:
    marginal = marginal_channel(spec, j)
    words = all_words(spec.x_size, l)
    sides = all_words(spec.y_size(j), l)
    side = marginal.side_given_x
    side_prob = np.ones((len(words), len(sides)))
    for i in range(l):
        side_prob *= side[words[:, i][:, None], sides[:, i][None, :]]
    cost = marginal.cost_given_xy(spec.d1[j - 1])
    return BlockGeometry(words=words, sides=sides, side_prob=side_prob, cost=cost)


def _check_word(word, size: int, l: int, what: str) -> np.ndarray:
    word = np.asarray(word, dtype=np.int64)
    if word.shape != (l,):
        raise ModelError(f"{what} must have length {l}, got shape {word.shape}")
    if word.min() < 0 or word.max() >= size:
        raise ModelError(f"{what} symbol out of alphabet")
    return word


def encode_block(code: BlockCode, a) -> int:
    a = _check_word(a, code.x_size, code.l, "source block")
    return int(code.enc[pack_words(a, code.x_size)])


def decode_block(code: BlockCode, j: int, m: int, y, y_size: int) -> np.ndarray:
    if not 1 <= j <= code.J:
        raise ModelError(f"decoder {j} out of range 1..{code.J}")
    if not 0 <= m < code.M:
        raise ModelError(f"codeword {m} outside 0..{code.M - 1}")
    y = _check_word(y, y_size, code.l, "side information block")
    return code.dec[j - 1][m, pack_words(y, y_size)].copy()


def expected_block_distortion(spec: SystemSpec, code: BlockCode, j: int, a) -> float:
    """
    Exact E[d_l(dec(enc(a), Y^l), Z^l) | X^l = a], enumerating Y_j^l only and
    taking the per-position conditional expectation over Z.
    """
    spec.decoder_slot(j)
    a = _check_word(a, spec.x_size, code.l, "source block")
    geo = block_geometry(spec, j, code.l)
    index = int(pack_words(a, spec.x_size))
    zt = code.dec[j - 1][code.enc[index]]  # (|Y|^l, l)
    per_position = geo.cost[a[None, :], geo.sides, zt]
    value = float(geo.side_prob[index] @ per_position.mean(axis=1))
    return min(max(value, 0.0), spec.d_max[j - 1])


def distortion_table(spec: SystemSpec, code: BlockCode) -> BlockDistortionTable:
    """Expected block distortion of every word, for every decoder."""
    code.check_compatible(spec)
    values = []
    for j in range(1, spec.J + 1):
        geo = block_geometry(spec, j, code.l)
        zt = code.dec[j - 1][code.enc]  # (|X|^l, |Y|^l, l)
        per_position = geo.cost[geo.words[:, None, :], geo.sides[None, :, :], zt]
        table = (geo.side_prob * per_position.mean(axis=2)).sum(axis=1)
        table = np.clip(table, 0.0, spec.d_max[j - 1])
        table.setflags(write=False)
        values.append(table)
    return BlockDistortionTable(code=code, values=tuple(values))


def message_distortions(spec: SystemSpec, j: int, dec_table: np.ndarray) -> np.ndarray:
    """
    Expected distortion of decoder j for every (word, codeword) pairing,
    shape (|X|^l, M). Used when the encoder is being (re)assigned.
    """
    l = dec_table.shape[2]
    geo = block_geometry(spec, j, l)
    per_position = geo.cost[
        geo.words[:, None, None, :], geo.sides[None, None, :, :], dec_table[None, :, :, :]
    ]
    return (geo.side_prob[:, None, :] * per_position.mean(axis=3)).sum(axis=2)


def check_pmf(pmf, size: int) -> np.ndarray:
    pmf = np.asarray(pmf, dtype=float)
    if pmf.shape != (size,):
        raise CodeError(f"pmf has shape {pmf.shape}, expected ({size},)")
    if np.any(pmf < 0) or abs(pmf.sum() - 1.0) > PMF_TOL:
        raise CodeError("pmf must be nonnegative and sum to 1")
    return pmf


def expected_code_distortion(spec: SystemSpec, code: BlockCode, j: int, pmf, table: BlockDistortionTable | None = None) -> float:
    """Average of the per-word expected distortion under a law of X^l."""
    spec.decoder_slot(j)
    pmf = check_pmf(pmf, spec.x_size**code.l)
    table = table if table is not None else distortion_table(spec, code)
    return float(pmf @ table.for_decoder(j))


# text format
#
#   code l=<l> M=<M> x=<|X|> y=<|Y_1|>,...,<|Y_J|>
#   enc <|X|^l indices>
#   dec <j>
#   <M * |Y_j|^l rows of l symbols, ordered by (m, packed y)>
#   end

def dumps_codes(codes) -> str:
    lines = []
    for code in codes:
        y_sizes = [round(t.shape[1] ** (1 / code.l)) for t in code.dec]
        lines.append(f"code l={code.l} M={code.M} x={code.x_size} y={','.join(map(str, y_sizes))}")
        lines.append("enc " + " ".join(map(str, code.enc)))
        for j, table in enumerate(code.dec, start=1):
            lines.append(f"dec {j}")
            for row in table.reshape(-1, code.l):
                lines.append(" ".join(map(str, row)))
        lines.append("end")
    return "\n".join(lines) + ("\n" if lines else "")


def _fields(header: str) -> dict[str, str]:
    try:
        return dict(part.split("=", 1) for part in header.split()[1:])
    except ValueError as exc:
        raise CodeError(f"bad code header '{header}'") from exc


def loads_codes(text: str) -> list[BlockCode]:
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    codes: list[BlockCode] = []
    pos = 0
    try:
        while pos < len(lines):
            header = lines[pos]
            if not header.startswith("code "):
                raise CodeError(f"expected 'code' header, got '{header}'")
            f = _fields(header)
            l, M, x_size = int(f["l"]), int(f["M"]), int(f["x"])
            y_sizes = [int(v) for v in f["y"].split(",")]
            enc_line = lines[pos + 1].split()
            if enc_line[0] != "enc":
                raise CodeError("missing 'enc' line")
            enc = [int(v) for v in enc_line[1:]]
            pos += 2
            dec = []
            for j, y_size in enumerate(y_sizes, start=1):
                if lines[pos] != f"dec {j}":
                    raise CodeError(f"expected 'dec {j}', got '{lines[pos]}'")
                rows = M * y_size**l
                body = [[int(v) for v in row.split()] for row in lines[pos + 1 : pos + 1 + rows]]
                if len(body) != rows or any(len(r) != l for r in body):
                    raise CodeError(f"decoder {j} needs {rows} rows of {l} symbols")
                dec.append(np.array(body).reshape(M, y_size**l, l))
                pos += 1 + rows
            if lines[pos] != "end":
                raise CodeError("missing 'end'")
            pos += 1
            codes.append(BlockCode(l=l, M=M, x_size=x_size, enc=np.array(enc), dec=tuple(dec)))
    except (IndexError, KeyError, ValueError) as exc:
        raise CodeError(f"truncated or malformed code text: {exc}") from exc
    return codes


def load_code_file(path: str | Path) -> list[BlockCode]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CodeError(f"cannot read code file {path}: {exc}") from exc
    codes = loads_codes(text)
    logger.info("Loaded code file", extra={"path": str(path), "code_count": len(codes)})
    return codes


def save_code_file(codes, path: str | Path) -> None:
    Path(path).write_text(dumps_codes(codes))
