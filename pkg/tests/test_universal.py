import inspect
import itertools

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from app.bitstream import Bitstream
from app.blockcode import BlockCode
from app.catalog import CodeCatalog, build_catalog, index_width
from app.config import CatalogDescriptor
from app.empirical import nonoverlapping_empirical, weighted_block_average
from app.errors import BitstreamError, IndexOutOfCatalog, ModelError, TruncatedBitstream
from app.experiments import PRESETS, point_to_point, prepare_experiment, wyner_ziv
from app.model import block_distortion, sample_channel, sample_source
from app.universal import (
    CodecConfig,
    EncodePlan,
    decode,
    distortion_bound,
    encode,
    exact_conditional_distortion,
    expected_distortion_bound,
    header_width,
    rate_threshold,
    select_plan,
    tail_fill_cost,
    window_cap,
)

from .conftest import constant_code, random_code, random_system

ALTERNATING_256 = np.tile([0, 1], 128)


def _pair_code(enc, dec_words) -> BlockCode:
    """l=2, M=4 code over the no-side-information binary system."""
    dec = np.array([[word] for word in dec_words])  # (4, 1, 2)
    return BlockCode(l=2, M=4, x_size=2, enc=np.array(enc), dec=(dec,))


@pytest.fixture
def shifted_catalog(no_side_spec, small_budget):
    """
    Only (l=2, s=1, code 7) reproduces the alternating sequence: code 7 is
    lossless on "10" and loses one symbol on "01".
    """
    decoy = _pair_code([0, 0, 0, 0], [[0, 0]] * 4)
    target = _pair_code([0, 1, 2, 3], [[0, 0], [0, 0], [1, 0], [1, 1]])
    triple = BlockCode(l=3, M=1, x_size=2, enc=np.zeros(8), dec=(np.zeros((1, 1, 3)),))
    slots = {
        1: (constant_code(0), constant_code(1)),
        2: (decoy,) * 7 + (target,),
        3: (triple,),
    }
    return CodeCatalog(spec=no_side_spec, budget=small_budget, descriptor=CatalogDescriptor(), slots=slots)


@pytest.fixture
def exact_config():
    return CodecConfig(rate=1.0, delta=0.06, distortion=(0.0,), epsilon=0.01)


@pytest.fixture(scope="module")
def point_experiment():
    return prepare_experiment(point_to_point(0.3))


@pytest.mark.parametrize("n, k", [(4, 1), (15, 1), (16, 2), (255, 2), (256, 3), (65535, 3), (65536, 4)])
def test_window_cap(n, k):
    assert window_cap(n) == k


def test_window_cap_rejects_short_sequences():
    with pytest.raises(ModelError):
        window_cap(3)


def test_epsilon_from_delta(complementary):
    assert complementary.codec.epsilon == pytest.approx(0.1 / (4 * 2 + 2 * 1.0))
    assert point_to_point().codec.epsilon == pytest.approx(0.05)


def test_xor_code_is_selected(complementary, complementary_catalog, rng):
    x = sample_source(complementary.source, 200, rng)
    plan = select_plan(x, complementary.spec, complementary.codec, complementary_catalog)
    assert (plan.l, plan.s, plan.code_index) == (1, 0, 0)
    assert not plan.error_declared
    assert plan.slack == (0.0, 0.0)


def test_error_declared_when_nothing_qualifies(point_experiment):
    preset = point_experiment.preset
    x = np.array([1] * 90 + [0] * 10)
    plan = select_plan(x, preset.spec, preset.codec, point_experiment.catalog)
    assert plan.error_declared
    assert (plan.l, plan.s, plan.code_index) == (1, 0, 0)


def test_zero_code_selected_for_sparse_sequence(point_experiment):
    preset = point_experiment.preset
    x = np.array([1] * 20 + [0] * 80)
    plan = select_plan(x, preset.spec, preset.codec, point_experiment.catalog)
    assert not plan.error_declared
    assert (plan.l, plan.s, plan.code_index) == (1, 0, 0)
    assert plan.slack[0] == pytest.approx(-0.1)


def test_smallest_worst_slack_wins(no_side_spec, zero_rate_config, zero_catalog):
    x = np.array([1] * 80 + [0] * 20)
    plan = select_plan(x, no_side_spec, zero_rate_config, zero_catalog)
    assert plan.code_index == 1  # dec = 1 costs 0.2 here
    assert plan.slack[0] == pytest.approx(-0.1)


def test_layout_arithmetic(no_side_spec, shifted_catalog, exact_config):
    plan = select_plan(ALTERNATING_256, no_side_spec, exact_config, shifted_catalog)
    assert (plan.l, plan.s, plan.code_index, plan.error_declared) == (2, 1, 7, False)
    bits, _ = encode(ALTERNATING_256, no_side_spec, exact_config, shifted_catalog)
    assert header_width(window_cap(256)) == 2
    assert index_width(shifted_catalog, 2) == 3
    assert bits.bit_length == 2 + 2 + 3 + 254
    assert bits.to_bits()[:7] == "01" + "01" + "111"


def test_decode_fills_tail_with_symbol_zero(no_side_spec, shifted_catalog, exact_config):
    bits, plan = encode(ALTERNATING_256, no_side_spec, exact_config, shifted_catalog)
    zt = decode(bits, 1, np.zeros(256), 256, no_side_spec, exact_config, shifted_catalog)
    expected = ALTERNATING_256.copy()
    expected[0] = expected[255] = 0
    np.testing.assert_array_equal(zt, expected)
    exact = exact_conditional_distortion(ALTERNATING_256, plan, no_side_spec, shifted_catalog, 1)
    assert exact == pytest.approx(1 / 256)
    assert block_distortion(no_side_spec, 1, zt, ALTERNATING_256) == pytest.approx(exact)


def test_single_code_zero_rate_stream_is_empty(point_experiment, rng):
    preset = point_experiment.preset
    x = sample_source(preset.source, 500, rng)
    bits, _ = encode(x, preset.spec, preset.codec, point_experiment.catalog)
    assert bits == Bitstream(b"", 0)
    zt = decode(bits, 1, np.zeros(500), 500, preset.spec, preset.codec, point_experiment.catalog)
    np.testing.assert_array_equal(zt, np.zeros(500))


def test_truncated_stream_raises(complementary, complementary_catalog, rng):
    x = sample_source(complementary.source, 64, rng)
    ys, _ = sample_channel(complementary.spec, x, rng)
    bits, _ = encode(x, complementary.spec, complementary.codec, complementary_catalog)
    with pytest.raises(TruncatedBitstream):
        decode(bits.truncated(bits.bit_length - 1), 1, ys[0], 64,
               complementary.spec, complementary.codec, complementary_catalog)


def test_trailing_bits_raise(complementary, complementary_catalog, rng):
    x = sample_source(complementary.source, 64, rng)
    ys, _ = sample_channel(complementary.spec, x, rng)
    bits, _ = encode(x, complementary.spec, complementary.codec, complementary_catalog)
    padded = Bitstream.from_bits(bits.to_bits() + "0")
    with pytest.raises(BitstreamError):
        decode(padded, 1, ys[0], 64, complementary.spec, complementary.codec, complementary_catalog)


def test_header_outside_search_range(no_side_spec, shifted_catalog, exact_config):
    with pytest.raises(IndexOutOfCatalog):
        decode(Bitstream.from_bits("1100"), 1, np.zeros(256), 256, no_side_spec, exact_config, shifted_catalog)


def test_code_index_outside_slot(no_side_spec, small_budget, exact_config):
    slots = {1: (constant_code(0), constant_code(1), constant_code(0)), 2: (constant_code(0),), 3: (constant_code(0),)}
    catalog = CodeCatalog(spec=no_side_spec, budget=small_budget, descriptor=CatalogDescriptor(), slots=slots)
    with pytest.raises(IndexOutOfCatalog):
        decode(Bitstream.from_bits("000011"), 1, np.zeros(256), 256, no_side_spec, exact_config, catalog)


def test_decode_checks_side_information(complementary, complementary_catalog, rng):
    x = sample_source(complementary.source, 64, rng)
    bits, _ = encode(x, complementary.spec, complementary.codec, complementary_catalog)
    with pytest.raises(ModelError):
        decode(bits, 1, np.zeros(63), 64, complementary.spec, complementary.codec, complementary_catalog)
    with pytest.raises(ModelError):
        decode(bits, 3, np.zeros(64), 64, complementary.spec, complementary.codec, complementary_catalog)


def test_exact_distortion_of_xor_and_zero_codes(complementary, complementary_catalog, point_experiment, rng):
    x = sample_source(complementary.source, 128, rng)
    plan = select_plan(x, complementary.spec, complementary.codec, complementary_catalog)
    for j in (1, 2):
        assert exact_conditional_distortion(x, plan, complementary.spec, complementary_catalog, j) == 0.0

    preset = point_experiment.preset
    x = np.array([1] * 25 + [0] * 75)
    plan = select_plan(x, preset.spec, preset.codec, point_experiment.catalog)
    assert exact_conditional_distortion(x, plan, preset.spec, point_experiment.catalog, 1) == pytest.approx(0.25)


def test_tail_fill_cost(no_side_spec, complementary):
    np.testing.assert_array_equal(tail_fill_cost(no_side_spec, 1), [0.0, 1.0])
    np.testing.assert_array_equal(tail_fill_cost(complementary.spec, 1), [0.0, 0.0, 1.0, 1.0])


def test_bounds(point_experiment):
    preset = point_experiment.preset
    config, spec = preset.codec, preset.spec
    assert distortion_bound(config, spec, 256, 1) == pytest.approx(0.3 + 0.2 + 6 / 256)
    assert expected_distortion_bound(config, spec, 256, 0.01) == pytest.approx((0.3 + 0.2 + 6 / 256 + 0.01,))
    assert rate_threshold(config, point_experiment.catalog) == 4


def test_encoder_never_takes_a_source():
    for function in (encode, select_plan, decode):
        parameters = inspect.signature(function).parameters
        assert "source" not in parameters
        assert all("Source" not in str(p.annotation) for p in parameters.values())


def test_sampled_distortion_matches_exact_conditional_value():
    experiment = prepare_experiment(wyner_ziv(0.2, 0.5))
    preset, catalog = experiment.preset, experiment.catalog
    rng = np.random.default_rng(5)
    x = sample_source(preset.source, 64, rng)
    bits, plan = encode(x, preset.spec, preset.codec, catalog)
    exact = exact_conditional_distortion(x, plan, preset.spec, catalog, 1)
    realized = []
    for _ in range(2000):
        ys, zs = sample_channel(preset.spec, x, rng)
        zt = decode(bits, 1, ys[0], 64, preset.spec, preset.codec, catalog)
        realized.append(block_distortion(preset.spec, 1, zt, zs[0]))
    realized = np.array(realized)
    sigma = max(realized.std(), 1e-12) / np.sqrt(len(realized))
    assert abs(realized.mean() - exact) <= 4 * sigma + 1e-9


def _enumerated_conditional_distortion(x, code, spec, j):
    """Sums over every y^n with the l=2, s=1 layout decoded by hand."""
    n = len(x)
    table = spec.w.sum(axis=(3, 4)) if j == 1 else spec.w.sum(axis=(1, 2))
    side = table.sum(axis=2)
    d = spec.d1[j - 1]
    blocks = (n - 1) // 2
    total = 0.0
    for y in itertools.product(range(2), repeat=n):
        y = np.array(y)
        zt = np.zeros(n, dtype=np.int64)
        for b in range(blocks):
            i = 1 + 2 * b
            message = code.enc[2 * x[i] + x[i + 1]]
            zt[i : i + 2] = code.dec[j - 1][message, 2 * y[i] + y[i + 1]]
        probs = side[x, y]
        for i in range(n):
            expected = table[x[i], y[i]] @ d[zt[i]]
            total += expected * np.prod(np.delete(probs, i))
    return total / n


@pytest.mark.parametrize("n, seed", [(5, 0), (8, 1), (11, 2), (12, 3)])
def test_exact_distortion_matches_enumeration_over_side_information(n, seed, small_budget):
    rng = np.random.default_rng(seed)
    spec = random_system(rng, 2, (2, 2), (2, 2), (2, 3))
    code = random_code(rng, spec, 2, 3)
    catalog = CodeCatalog(spec=spec, budget=small_budget, descriptor=CatalogDescriptor(), slots={2: (code,)})
    plan = EncodePlan(l=2, s=1, code_index=0, error_declared=False, slack=())
    x = rng.integers(0, 2, size=n)
    for j in (1, 2):
        exact = exact_conditional_distortion(x, plan, spec, catalog, j)
        assert exact == pytest.approx(_enumerated_conditional_distortion(x, code, spec, j), abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_plan_slack_is_the_block_average_of_its_table(complementary, complementary_catalog, seed):
    spec, config = complementary.spec, complementary.codec
    x = sample_source(complementary.source, 256, np.random.default_rng(seed))
    plan = select_plan(x, spec, config, complementary_catalog)
    dist = nonoverlapping_empirical(x, plan.l, plan.s, spec.x_size)
    table = complementary_catalog.distortion_table(plan.l, plan.code_index)
    for j in range(1, spec.J + 1):
        average = weighted_block_average(dist, table.for_decoder(j))
        assert plan.slack[j - 1] == pytest.approx(average - config.distortion[j - 1], abs=1e-12)


@pytest.fixture(scope="module")
def preset_experiments():
    return {name: prepare_experiment(factory()) for name, factory in PRESETS.items()}


@settings(max_examples=200, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(name=st.sampled_from(sorted(PRESETS)), seed=st.integers(0, 2**32 - 1), n=st.integers(4, 4096))
def test_round_trip_is_deterministic(preset_experiments, name, seed, n):
    experiment = preset_experiments[name]
    preset, catalog = experiment.preset, experiment.catalog
    rng = np.random.default_rng(seed)
    x = sample_source(preset.source, n, rng)
    ys, _ = sample_channel(preset.spec, x, rng)
    first, plan = encode(x, preset.spec, preset.codec, catalog)
    second, again = encode(x, preset.spec, preset.codec, catalog)
    assert first == second
    assert plan == again
    for j in range(1, preset.spec.J + 1):
        zt = decode(first, j, ys[j - 1], n, preset.spec, preset.codec, catalog)
        assert len(zt) == n
        np.testing.assert_array_equal(zt, decode(second, j, ys[j - 1], n, preset.spec, preset.codec, catalog))


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_rate_stays_below_target_from_threshold_on(preset_experiments, name):
    experiment = preset_experiments[name]
    preset, catalog = experiment.preset, experiment.catalog
    n0 = rate_threshold(preset.codec, catalog)
    limit = preset.codec.rate + preset.codec.delta
    rng = np.random.default_rng(17)
    for n in (n0, 4 * n0):
        for _ in range(100):
            x = sample_source(preset.source, n, rng)
            bits, _ = encode(x, preset.spec, preset.codec, catalog)
            assert bits.bit_length / n <= limit
