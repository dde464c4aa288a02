"""System model: alphabets, the known memoryless channel, distortion measures
and stationary ergodic sources.

Symbols are 0-based indices into their alphabets everywhere in the package.
Decoders are numbered 1..J at every public entry point.
"""
from __future__ import annotations

import logging
import re
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import linalg

from app.errors import ModelError

logger = logging.getLogger(__name__)

ROW_TOL = 1e-12
STATIONARY_TOL = 1e-12


def _frozen(array, dtype=float) -> np.ndarray:
    out = np.array(array, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class SystemSpec:
    """
    The probabilistic system shared by encoder and decoders.

    `w` is the dense table P(y_1, z_1, ..., y_J, z_J | x) with axes ordered
    (x, y_1, z_1, y_2, z_2, ...). `d1[j]` has shape (|Z~_j|, |Z_j|).
    """

    alphabet_x: tuple[str, ...]
    alphabet_y: tuple[tuple[str, ...], ...]
    alphabet_z: tuple[tuple[str, ...], ...]
    alphabet_zt: tuple[tuple[str, ...], ...]
    w: np.ndarray
    d1: tuple[np.ndarray, ...]
    d_max: tuple[float, ...] = ()

    def __post_init__(self):
        J = len(self.alphabet_y)
        if J < 1:
            raise ModelError("a system needs at least one decoder")
        if not (len(self.alphabet_z) == len(self.alphabet_zt) == len(self.d1) == J):
            raise ModelError("per-decoder alphabets and distortion tables disagree on J")
        alphabets = [self.alphabet_x, *self.alphabet_y, *self.alphabet_z, *self.alphabet_zt]
        if any(len(a) == 0 for a in alphabets):
            raise ModelError("all alphabets must be nonempty")

        w = _frozen(self.w)
        expected_shape = (len(self.alphabet_x),) + tuple(
            size
            for j in range(J)
            for size in (len(self.alphabet_y[j]), len(self.alphabet_z[j]))
        )
        if w.shape != expected_shape:
            raise ModelError(f"channel table has shape {w.shape}, expected {expected_shape}")
        if np.any(w < 0) or np.any(w > 1):
            raise ModelError("channel probabilities must lie in [0, 1]")
        row_sums = w.reshape(w.shape[0], -1).sum(axis=1)
        if np.any(np.abs(row_sums - 1.0) > ROW_TOL):
            raise ModelError(f"channel rows must sum to 1, got {row_sums}")

        d1 = tuple(_frozen(d) for d in self.d1)
        for j, d in enumerate(d1):
            if d.shape != (len(self.alphabet_zt[j]), len(self.alphabet_z[j])):
                raise ModelError(f"distortion table {j + 1} has shape {d.shape}")
        d_max = tuple(float(v) for v in self.d_max) or tuple(float(d.max()) for d in d1)
        if len(d_max) != J:
            raise ModelError("need one distortion ceiling per decoder")
        for j, d in enumerate(d1):
            if np.any(d < 0) or np.any(d > d_max[j]):
                raise ModelError(f"distortion table {j + 1} leaves [0, {d_max[j]}]")

        object.__setattr__(self, "alphabet_x", tuple(self.alphabet_x))
        object.__setattr__(self, "alphabet_y", tuple(tuple(a) for a in self.alphabet_y))
        object.__setattr__(self, "alphabet_z", tuple(tuple(a) for a in self.alphabet_z))
        object.__setattr__(self, "alphabet_zt", tuple(tuple(a) for a in self.alphabet_zt))
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "d1", d1)
        object.__setattr__(self, "d_max", d_max)

    @property
    def J(self) -> int:
        return len(self.alphabet_y)

    @property
    def x_size(self) -> int:
        return len(self.alphabet_x)

    @property
    def d_max_global(self) -> float:
        return max(self.d_max)

    def y_size(self, j: int) -> int:
        return len(self.alphabet_y[self.decoder_slot(j)])

    def zt_size(self, j: int) -> int:
        return len(self.alphabet_zt[self.decoder_slot(j)])

    def decoder_slot(self, j: int) -> int:
        """Maps a decoder number 1..J to its 0-based position."""
        if not 1 <= j <= self.J:
            raise ModelError(f"decoder {j} out of range 1..{self.J}")
        return j - 1

    @cached_property
    def marginals(self) -> tuple[MarginalChannel, ...]:
        return tuple(_marginalize(self, j) for j in range(1, self.J + 1))


@dataclass(frozen=True, eq=False)
class MarginalChannel:
    """P(y_j, z_j | x) for one decoder, shape (|X|, |Y_j|, |Z_j|)."""

    j: int
    table: np.ndarray

    @cached_property
    def side_given_x(self) -> np.ndarray:
        """P(y_j | x), shape (|X|, |Y_j|)."""
        return self.table.sum(axis=2)

    def cost_given_xy(self, d1: np.ndarray) -> np.ndarray:
        """
        E[d1(zt, Z) | x, y] for every reconstruction symbol zt.
        Shape (|X|, |Y_j|, |Z~_j|); zero where P(y|x) = 0.
        """
        joint = np.einsum("xyz,tz->xyt", self.table, d1)
        side = self.side_given_x[:, :, None]
        return np.divide(joint, side, out=np.zeros_like(joint), where=side > 0)


def _marginalize(spec: SystemSpec, j: int) -> MarginalChannel:
    slot = j - 1
    keep = (0, 1 + 2 * slot, 2 + 2 * slot)
    drop = tuple(axis for axis in range(spec.w.ndim) if axis not in keep)
    table = spec.w.sum(axis=drop) if drop else spec.w
    return MarginalChannel(j=j, table=_frozen(table))


def marginal_channel(spec: SystemSpec, j: int) -> MarginalChannel:
    """Sums every other decoder's (y, z) out of the channel table."""
    spec.decoder_slot(j)
    return spec.marginals[j - 1]


def block_distortion(spec: SystemSpec, j: int, zt, z) -> float:
    """Per-letter average distortion d_n between a reconstruction and its target."""
    slot = spec.decoder_slot(j)
    zt = np.asarray(zt, dtype=np.int64)
    z = np.asarray(z, dtype=np.int64)
    if zt.shape != z.shape or zt.ndim != 1 or len(z) == 0:
        raise ModelError(f"length mismatch: {zt.shape} vs {z.shape}")
    d = spec.d1[slot]
    if zt.min() < 0 or zt.max() >= d.shape[0] or z.min() < 0 or z.max() >= d.shape[1]:
        raise ModelError("symbol out of alphabet")
    return float(d[zt, z].mean())


def sample_channel(spec: SystemSpec, x, rng: np.random.Generator):
    """
    Draws (y_1..y_J, z_1..z_J) position by position from W(.|x_i).
    Returns two tuples of J integer arrays.
    """
    x = np.asarray(x, dtype=np.int64)
    if len(x) and (x.min() < 0 or x.max() >= spec.x_size):
        raise ModelError("source symbol out of alphabet")
    flat = spec.w.reshape(spec.x_size, -1)
    cumulative = flat.cumsum(axis=1)
    cumulative[:, -1] = 1.0
    u = rng.random(len(x))
    draws = (cumulative[x] <= u[:, None]).sum(axis=1)
    coords = np.unravel_index(draws, spec.w.shape[1:])
    ys = tuple(coords[2 * slot].astype(np.int64) for slot in range(spec.J))
    zs = tuple(coords[2 * slot + 1].astype(np.int64) for slot in range(spec.J))
    return ys, zs


# named channel components and distortion measures

_BSC_RE = re.compile(r"^bsc\s+p\s*=\s*([0-9.eE+-]+)$")


def bsc(p: float) -> np.ndarray:
    if not 0 <= p <= 1:
        raise ModelError(f"crossover {p} outside [0, 1]")
    return np.array([[1 - p, p], [p, 1 - p]])


def hamming(size: int, size_z: int | None = None) -> np.ndarray:
    size_z = size if size_z is None else size_z
    return 1.0 - np.eye(size, size_z)


def parse_component(name: str, x_size: int) -> np.ndarray:
    """
    Resolves a named channel component to a matrix P(out | x):
    "identity", "absent" (singleton output) or "bsc p=<float>".
    """
    name = name.strip().lower()
    if name == "identity":
        return np.eye(x_size)
    if name == "absent":
        return np.ones((x_size, 1))
    match = _BSC_RE.match(name)
    if match:
        if x_size != 2:
            raise ModelError("bsc needs a binary source alphabet")
        return bsc(float(match.group(1)))
    raise ModelError(f"unknown channel component '{name}'")


def product_channel(components) -> np.ndarray:
    """
    Builds W from per-decoder (side, target) matrices that are conditionally
    independent given x.
    """
    x_size = components[0][0].shape[0]
    w = np.ones((x_size,))
    for side, target in components:
        w = w[..., None] * side.reshape((x_size,) + (1,) * (w.ndim - 1) + (side.shape[1],))
        w = w[..., None] * target.reshape((x_size,) + (1,) * (w.ndim - 1) + (target.shape[1],))
    return w


def deterministic_channel(x_size: int, shape, outputs) -> np.ndarray:
    """W putting all mass on outputs[x] = (y_1, z_1, ..., y_J, z_J)."""
    w = np.zeros((x_size,) + tuple(shape))
    for x, out in enumerate(outputs):
        w[(x,) + tuple(out)] = 1.0
    return w


# sources

def _check_stochastic(matrix: np.ndarray, what: str) -> None:
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ModelError(f"{what} must be square")
    if np.any(matrix < 0) or np.any(np.abs(matrix.sum(axis=1) - 1.0) > ROW_TOL):
        raise ModelError(f"{what} must be row-stochastic")


def _bool_power_positive(pattern: np.ndarray, power: int) -> bool:
    result = np.eye(len(pattern), dtype=bool)
    base = pattern.copy()
    while power:
        if power & 1:
            result = (result.astype(np.int64) @ base.astype(np.int64)) > 0
        base = (base.astype(np.int64) @ base.astype(np.int64)) > 0
        power >>= 1
    return bool(result.all())


def check_ergodic(transition: np.ndarray, allow_periodic: bool = False) -> None:
    """
    Irreducibility via reachability in m-1 steps; aperiodicity via
    primitivity (Wielandt bound (m-1)^2 + 1).
    """
    m = len(transition)
    pattern = transition > 0
    reach = pattern | np.eye(m, dtype=bool)
    if not _bool_power_positive(reach, max(m - 1, 1)):
        raise ModelError("transition matrix is reducible")
    if not allow_periodic and not _bool_power_positive(pattern, (m - 1) ** 2 + 1):
        raise ModelError("transition matrix is periodic")


def _normalized(pi: np.ndarray) -> np.ndarray:
    pi = np.clip(pi / pi.sum(), 0.0, None)
    return pi / pi.sum()


def stationary_distribution(transition: np.ndarray) -> np.ndarray:
    """
    Solves pi T = pi through the left eigenvector of eigenvalue 1, falling
    back to the linear system with one balance row replaced by sum(pi) = 1.
    """
    values, vectors = linalg.eig(transition.T)
    k = int(np.argmin(np.abs(values - 1.0)))
    pi = _normalized(np.real(vectors[:, k]))
    residual = np.abs(pi @ transition - pi).max()
    if residual > STATIONARY_TOL:
        m = len(transition)
        system = transition.T - np.eye(m)
        system[-1] = 1.0
        try:
            pi = _normalized(linalg.solve(system, np.eye(m)[-1]))
        except linalg.LinAlgError as exc:
            raise ModelError("transition matrix has no unique stationary law") from exc
        residual = np.abs(pi @ transition - pi).max()
    if residual > STATIONARY_TOL:
        raise ModelError(f"stationary solve did not converge (residual {residual:.2e})")
    return pi


class SourceModel(ABC):
    """A stationary ergodic source. The codec never receives one."""

    @property
    @abstractmethod
    def x_size(self) -> int: ...

    @abstractmethod
    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray: ...

    @abstractmethod
    def block_pmf(self, l: int) -> np.ndarray:
        """Exact law of X^l over packed words (first symbol most significant)."""

    @property
    @abstractmethod
    def marginal(self) -> np.ndarray: ...


@dataclass(frozen=True, eq=False)
class IIDSource(SourceModel):
    pmf: np.ndarray

    def __post_init__(self):
        pmf = _frozen(self.pmf)
        if pmf.ndim != 1 or np.any(pmf < 0) or abs(pmf.sum() - 1.0) > ROW_TOL:
            raise ModelError("iid pmf must be a probability vector")
        object.__setattr__(self, "pmf", pmf)

    @property
    def x_size(self) -> int:
        return len(self.pmf)

    @property
    def marginal(self) -> np.ndarray:
        return self.pmf

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.choice(self.x_size, size=n, p=self.pmf).astype(np.int64)

    def block_pmf(self, l: int) -> np.ndarray:
        out = np.ones(1)
        for _ in range(l):
            out = np.kron(out, self.pmf)
        return out


@dataclass(frozen=True, eq=False)
class MarkovSource(SourceModel):
    transition: np.ndarray
    allow_periodic: bool = False
    stationary: np.ndarray = field(init=False)

    def __post_init__(self):
        transition = _frozen(self.transition)
        _check_stochastic(transition, "transition matrix")
        check_ergodic(transition, self.allow_periodic)
        object.__setattr__(self, "transition", transition)
        object.__setattr__(self, "stationary", _frozen(stationary_distribution(transition)))

    @property
    def x_size(self) -> int:
        return len(self.transition)

    @property
    def marginal(self) -> np.ndarray:
        return self.stationary

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return _walk(self.transition, self.stationary, n, rng)

    def block_pmf(self, l: int) -> np.ndarray:
        m = self.x_size
        pmf = self.stationary.copy()
        for _ in range(l - 1):
            last = np.arange(len(pmf)) % m
            pmf = (pmf[:, None] * self.transition[last]).reshape(-1)
        return pmf


@dataclass(frozen=True, eq=False)
class FunctionOfMarkovSource(SourceModel):
    """A hidden ergodic chain observed through emission: state -> X."""

    transition: np.ndarray
    emission: tuple[int, ...]
    alphabet_size: int
    allow_periodic: bool = False
    stationary: np.ndarray = field(init=False)

    def __post_init__(self):
        transition = _frozen(self.transition)
        _check_stochastic(transition, "hidden transition matrix")
        check_ergodic(transition, self.allow_periodic)
        emission = tuple(int(e) for e in self.emission)
        if len(emission) != len(transition):
            raise ModelError("emission needs one symbol per hidden state")
        if min(emission) < 0 or max(emission) >= self.alphabet_size:
            raise ModelError("emission symbol out of alphabet")
        object.__setattr__(self, "transition", transition)
        object.__setattr__(self, "emission", emission)
        object.__setattr__(self, "stationary", _frozen(stationary_distribution(transition)))

    @property
    def x_size(self) -> int:
        return self.alphabet_size

    @cached_property
    def _emission_matrix(self) -> np.ndarray:
        out = np.zeros((self.alphabet_size, len(self.emission)))
        out[list(self.emission), np.arange(len(self.emission))] = 1.0
        return out

    @property
    def marginal(self) -> np.ndarray:
        return self._emission_matrix @ self.stationary

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        states = _walk(self.transition, self.stationary, n, rng)
        return np.asarray(self.emission, dtype=np.int64)[states]

    def block_pmf(self, l: int) -> np.ndarray:
        emit = self._emission_matrix
        forward = emit * self.stationary[None, :]  # (word, hidden state)
        for _ in range(l - 1):
            step = forward @ self.transition
            forward = (step[:, None, :] * emit[None, :, :]).reshape(-1, len(self.emission))
        return forward.sum(axis=1)


def _walk(transition: np.ndarray, start: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    cumulative = transition.cumsum(axis=1)
    cumulative[:, -1] = 1.0
    states = np.empty(n, dtype=np.int64)
    states[0] = rng.choice(len(start), p=start)
    u = rng.random(n - 1)
    for i in range(1, n):
        states[i] = np.searchsorted(cumulative[states[i - 1]], u[i - 1], side="right")
    return states


def sample_source(source: SourceModel, n: int, rng: np.random.Generator) -> np.ndarray:
    if n < 1:
        raise ModelError("source length must be at least 1")
    return source.sample(n, rng)
