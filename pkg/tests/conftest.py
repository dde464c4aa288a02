import numpy as np
import pytest

from app.blockcode import BlockCode
from app.catalog import CatalogBudget, build_catalog
from app.config import CatalogDescriptor
from app.experiments import binary_side_system, complementary_delivery
from app.model import SystemSpec, parse_component
from app.universal import CodecConfig


def constant_code(symbol: int = 0, x_size: int = 2, y_size: int = 1) -> BlockCode:
    """l=1, M=1 code whose decoder always outputs `symbol`."""
    return BlockCode(
        l=1, M=1, x_size=x_size, enc=np.zeros(x_size, dtype=np.int64),
        dec=(np.full((1, y_size, 1), symbol),),
    )


def side_copy_code() -> BlockCode:
    """l=1, M=1 binary code with dec(m, y) = y."""
    return BlockCode(l=1, M=1, x_size=2, enc=[0, 0], dec=(np.array([[[0], [1]]]),))


def identity_code() -> BlockCode:
    """l=1, M=2 binary code with enc = identity and dec(m, y) = m."""
    return BlockCode(l=1, M=2, x_size=2, enc=[0, 1], dec=(np.array([[[0], [0]], [[1], [1]]]),))


def _labels(size: int) -> tuple[str, ...]:
    return tuple(map(str, range(size)))


def random_system(rng, x_size, y_sizes, z_sizes, zt_sizes, alpha: float = 1.0) -> SystemSpec:
    """Dirichlet rows over the joint (y_1, z_1, ..., y_J, z_J) alphabet, uniform [0, 1) distortions."""
    shape = tuple(size for pair in zip(y_sizes, z_sizes) for size in pair)
    w = rng.dirichlet(np.full(int(np.prod(shape)), alpha), size=x_size).reshape((x_size, *shape))
    return SystemSpec(
        alphabet_x=_labels(x_size),
        alphabet_y=tuple(_labels(s) for s in y_sizes),
        alphabet_z=tuple(_labels(s) for s in z_sizes),
        alphabet_zt=tuple(_labels(s) for s in zt_sizes),
        w=w,
        d1=tuple(rng.random((zt, z)) for zt, z in zip(zt_sizes, z_sizes)),
        d_max=(1.0,) * len(y_sizes),
    )


def random_code(rng, spec: SystemSpec, l: int, M: int) -> BlockCode:
    return BlockCode(
        l=l, M=M, x_size=spec.x_size, enc=rng.integers(0, M, size=spec.x_size**l),
        dec=tuple(
            rng.integers(0, spec.zt_size(j), size=(M, spec.y_size(j) ** l, l))
            for j in range(1, spec.J + 1)
        ),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def identity_spec():
    """J=1, Y = X, Z = X, Hamming."""
    return binary_side_system([parse_component("identity", 2)])


@pytest.fixture
def bsc_spec():
    """J=1, Y = X through BSC(0.1), Z = X, Hamming."""
    return binary_side_system([parse_component("bsc p=0.1", 2)])


@pytest.fixture
def no_side_spec():
    """J=1, no side information, Z = X, Hamming."""
    return binary_side_system([parse_component("absent", 2)])


@pytest.fixture
def complementary():
    return complementary_delivery(0.1)


@pytest.fixture
def zero_rate_config(no_side_spec):
    """R=0, delta=0.3 so eps=0.05, Delta=0.3, searching l=1 only."""
    return CodecConfig.for_system(no_side_spec, rate=0.0, delta=0.3, distortion=(0.3,), l_cap=1)


@pytest.fixture
def zero_catalog(no_side_spec, zero_rate_config):
    """Enumerated R=0 catalog of the no-side-info system: dec = 0, then dec = 1."""
    return build_catalog(no_side_spec, zero_rate_config.budget, CatalogDescriptor(mode="enumerate", l_max=1))


@pytest.fixture
def complementary_catalog(complementary):
    return build_catalog(complementary.spec, complementary.codec.budget, complementary.catalog)


@pytest.fixture
def small_budget():
    return CatalogBudget(rate=0.0, epsilon=0.05)
