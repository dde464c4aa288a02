"""Scenario presets, Monte Carlo trials, good-set estimation and CSV export.

Trial k of a run with master seed S draws from
    np.random.default_rng(SeedSequence(S, spawn_key=(k,)).generate_state(1, uint64)[0])
so any subset of trials can be replayed independently of the others.
Good-set draws at length n use spawn_key=(n, k).
"""
from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import stats

from app.catalog import CodeCatalog, build_catalog
from app.config import CatalogDescriptor, ExperimentConfig, SourceSection, SystemSection, settings
from app.diagnostics import PremiseReport, binomial_error_oracle, check_premise, excess_function
from app.errors import ConfigError, ModelError
from app.model import (
    FunctionOfMarkovSource,
    IIDSource,
    MarkovSource,
    SourceModel,
    SystemSpec,
    block_distortion,
    deterministic_channel,
    hamming,
    parse_component,
    product_channel,
    sample_channel,
    sample_source,
)
from app.universal import CodecConfig, decode, encode, exact_conditional_distortion, select_plan

logger = logging.getLogger(__name__)

CODES_DIR = Path(__file__).resolve().parent / "codes"
XOR_CODE_FILE = CODES_DIR / "xor_complementary.txt"
CONSTANT_ZERO_CODE_FILE = CODES_DIR / "constant_zero_binary.txt"

BITS = ("0", "1")


@dataclass(frozen=True, eq=False)
class ScenarioPreset:
    name: str
    params: dict
    spec: SystemSpec
    source: SourceModel
    codec: CodecConfig
    catalog: CatalogDescriptor

    def __post_init__(self):
        if self.source.x_size != self.spec.x_size:
            raise ModelError("source alphabet does not match the system")


def binary_side_system(sides) -> SystemSpec:
    """Binary X with Z_j = X and the given side channels."""
    components = [(side, np.eye(2)) for side in sides]
    return SystemSpec(
        alphabet_x=BITS,
        alphabet_y=tuple(BITS if side.shape[1] == 2 else ("-",) for side in sides),
        alphabet_z=(BITS,) * len(sides),
        alphabet_zt=(BITS,) * len(sides),
        w=product_channel(components),
        d1=(hamming(2),) * len(sides),
    )


def wyner_ziv(p_side: float = 0.1, p_source: float = 0.5) -> ScenarioPreset:
    spec = binary_side_system([parse_component(f"bsc p={p_side}", 2)])
    return ScenarioPreset(
        name="wyner_ziv",
        params={"p_side": p_side, "p_source": p_source},
        spec=spec,
        source=IIDSource(np.array([1 - p_source, p_source])),
        codec=CodecConfig.for_system(spec, rate=0.5, delta=0.1, distortion=(0.1,), l_cap=2),
        catalog=CatalogDescriptor(mode="design", l_max=2, training=("uniform", "source"), restarts=2),
    )


def si_maybe_absent(p_side: float = 0.1, p_source: float = 0.5) -> ScenarioPreset:
    spec = binary_side_system([parse_component("absent", 2), parse_component(f"bsc p={p_side}", 2)])
    return ScenarioPreset(
        name="si_maybe_absent",
        params={"p_side": p_side, "p_source": p_source},
        spec=spec,
        source=IIDSource(np.array([1 - p_source, p_source])),
        codec=CodecConfig.for_system(spec, rate=0.5, delta=0.1, distortion=(0.3, 0.1), l_cap=2),
        catalog=CatalogDescriptor(mode="design", l_max=2, training=("uniform", "source"), restarts=2),
    )


def point_to_point(p_source: float = 0.3) -> ScenarioPreset:
    """J=1 without side information; the designated code reconstructs all zeros."""
    spec = binary_side_system([parse_component("absent", 2)])
    return ScenarioPreset(
        name="point_to_point",
        params={"p_source": p_source},
        spec=spec,
        source=IIDSource(np.array([1 - p_source, p_source])),
        codec=CodecConfig.for_system(spec, rate=0.0, delta=0.3, distortion=(0.3,), l_cap=1),
        catalog=CatalogDescriptor(mode="files", l_max=1, code_files=(str(CONSTANT_ZERO_CODE_FILE),)),
    )


def dsbs_pmf(rho: float) -> np.ndarray:
    """Uniform X1, X2 = X1 xor Bernoulli(rho), over pairs packed as 2*x1 + x2."""
    return np.array([1 - rho, rho, rho, 1 - rho]) / 2


def complementary_delivery(rho: float = 0.1) -> ScenarioPreset:
    # decoder 1 sees x2 and wants x1; decoder 2 sees x1 and wants x2
    outputs = [(x & 1, x >> 1, x >> 1, x & 1) for x in range(4)]
    spec = SystemSpec(
        alphabet_x=("00", "01", "10", "11"),
        alphabet_y=(BITS, BITS),
        alphabet_z=(BITS, BITS),
        alphabet_zt=(BITS, BITS),
        w=deterministic_channel(4, (2, 2, 2, 2), outputs),
        d1=(hamming(2), hamming(2)),
    )
    return ScenarioPreset(
        name="complementary_delivery",
        params={"rho": rho},
        spec=spec,
        source=IIDSource(dsbs_pmf(rho)),
        codec=CodecConfig.for_system(spec, rate=1.0, delta=0.1, distortion=(0.0, 0.0), l_cap=1),
        catalog=CatalogDescriptor(mode="design", l_max=1, code_files=(str(XOR_CODE_FILE),)),
    )


def common_target(p1: float = 0.1, p2: float = 0.2) -> ScenarioPreset:
    """X = (X0, X1, X2) packed as 4*x0 + 2*x1 + x2; decoder j sees X_j and wants X0."""
    outputs = [((x >> 1) & 1, x >> 2, x & 1, x >> 2) for x in range(8)]
    spec = SystemSpec(
        alphabet_x=tuple(format(x, "03b") for x in range(8)),
        alphabet_y=(BITS, BITS),
        alphabet_z=(BITS, BITS),
        alphabet_zt=(BITS, BITS),
        w=deterministic_channel(8, (2, 2, 2, 2), outputs),
        d1=(hamming(2), hamming(2)),
    )
    pmf = np.array([
        0.5 * (p1 if ((x >> 1) & 1) != x >> 2 else 1 - p1) * (p2 if (x & 1) != x >> 2 else 1 - p2)
        for x in range(8)
    ])
    return ScenarioPreset(
        name="common_target",
        params={"p1": p1, "p2": p2},
        spec=spec,
        source=IIDSource(pmf),
        codec=CodecConfig.for_system(spec, rate=0.5, delta=0.1, distortion=(0.1, 0.2), l_cap=2),
        catalog=CatalogDescriptor(mode="design", l_max=2, training=("uniform", "source")),
    )


PRESETS: dict[str, Callable[..., ScenarioPreset]] = {
    "wyner_ziv": wyner_ziv,
    "si_maybe_absent": si_maybe_absent,
    "point_to_point": point_to_point,
    "complementary_delivery": complementary_delivery,
    "common_target": common_target,
}


def system_from_section(section: SystemSection) -> SystemSpec:
    x_size = len(section.alphabet_x)
    zt_alphabets = [tuple(d.alphabet_zt or d.alphabet_z) for d in section.decoders]
    d1 = []
    for decoder, zt in zip(section.decoders, zt_alphabets):
        if decoder.distortion == "hamming":
            d1.append(hamming(len(zt), len(decoder.alphabet_z)))
        elif isinstance(decoder.distortion, str):
            raise ConfigError(f"unknown distortion '{decoder.distortion}'")
        else:
            d1.append(np.array(decoder.distortion, dtype=float))
    if section.table is not None:
        w = np.array(section.table, dtype=float)
    else:
        w = product_channel([
            (parse_component(d.side, x_size), parse_component(d.target, x_size))
            for d in section.decoders
        ])
    d_max = tuple(
        d.d_max if d.d_max is not None else float(table.max())
        for d, table in zip(section.decoders, d1)
    )
    return SystemSpec(
        alphabet_x=tuple(section.alphabet_x),
        alphabet_y=tuple(tuple(d.alphabet_y) for d in section.decoders),
        alphabet_z=tuple(tuple(d.alphabet_z) for d in section.decoders),
        alphabet_zt=tuple(zt_alphabets),
        w=w,
        d1=tuple(d1),
        d_max=d_max,
    )


def source_from_section(section: SourceSection, x_size: int) -> SourceModel:
    if section.kind == "iid":
        return IIDSource(np.array(section.pmf))
    if section.kind == "markov":
        return MarkovSource(np.array(section.transition), allow_periodic=section.allow_periodic)
    return FunctionOfMarkovSource(
        np.array(section.transition), tuple(section.emission), x_size, allow_periodic=section.allow_periodic
    )


def scenario_preset(name: str, params: dict | None = None, config: ExperimentConfig | None = None) -> ScenarioPreset:
    """
    Builds a named preset, or a custom one from an experiment file. Codec and
    catalog sections of the file override the preset defaults.
    """
    params = params or {}
    if name == "custom":
        if config is None or config.scenario.system is None or config.scenario.source is None:
            raise ConfigError("custom scenario needs 'system' and 'source' sections")
        spec = system_from_section(config.scenario.system)
        source = source_from_section(config.scenario.source, spec.x_size)
        if config.codec is None:
            raise ConfigError("custom scenario needs a 'codec' section")
        codec = config.codec
        return ScenarioPreset(
            name="custom", params={}, spec=spec, source=source,
            codec=CodecConfig.for_system(spec, codec.rate, codec.delta, codec.distortion, codec.l_cap),
            catalog=config.catalog or CatalogDescriptor(),
        )
    if name not in PRESETS:
        raise ConfigError(f"unknown scenario '{name}', choose from {sorted(PRESETS)} or 'custom'")
    try:
        preset = PRESETS[name](**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for scenario '{name}': {exc}") from exc
    if config is not None and config.codec is not None:
        codec = config.codec
        preset = replace(
            preset,
            codec=CodecConfig.for_system(preset.spec, codec.rate, codec.delta, codec.distortion, codec.l_cap),
        )
    if config is not None and config.catalog is not None:
        preset = replace(preset, catalog=config.catalog)
    return preset


def preset_from_config(config: ExperimentConfig) -> ScenarioPreset:
    return scenario_preset(config.scenario.preset, dict(config.scenario.params), config)


@dataclass(frozen=True, eq=False)
class Experiment:
    preset: ScenarioPreset
    catalog: CodeCatalog

    @property
    def codec(self) -> CodecConfig:
        return self.preset.codec


def prepare_experiment(preset: ScenarioPreset) -> Experiment:
    """Builds the preset's catalog; "source" training uses the preset's true source."""
    catalog = build_catalog(
        preset.spec, preset.codec.budget, preset.catalog, training_sources={"source": preset.source}
    )
    logger.info(
        "Experiment prepared",
        extra={"scenario": preset.name, "catalog_fingerprint": catalog.fingerprint()},
    )
    return Experiment(preset=preset, catalog=catalog)


def trial_seed(seed: int, *key: int) -> int:
    sequence = np.random.SeedSequence(seed, spawn_key=tuple(key))
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class TrialReport:
    scenario: str
    trial: int
    n: int
    seed: int
    bits: int
    rate: float
    distortion: tuple[float, ...]
    exact_distortion: tuple[float, ...]
    error_declared: bool
    l: int
    s: int
    code_index: int


@dataclass(frozen=True)
class TrialAggregate:
    trials: int
    mean_rate: float
    rate_ci: tuple[float, float]
    mean_distortion: tuple[float, ...]
    distortion_ci: tuple[tuple[float, float], ...]
    mean_exact_distortion: tuple[float, ...]
    error_fraction: float


@dataclass(frozen=True)
class TrialSummary:
    reports: tuple[TrialReport, ...]
    aggregate: TrialAggregate


def _normal_ci(values: np.ndarray) -> tuple[float, float]:
    mean = float(values.mean())
    if len(values) < 2:
        return mean, mean
    half = stats.norm.ppf(0.975) * values.std(ddof=1) / np.sqrt(len(values))
    return mean - float(half), mean + float(half)


def aggregate_reports(reports) -> TrialAggregate:
    reports = sorted(reports, key=lambda r: r.trial)
    if not reports:
        raise ModelError("no trial reports to aggregate")
    rates = np.array([r.rate for r in reports])
    distortion = np.array([r.distortion for r in reports])
    exact = np.array([r.exact_distortion for r in reports])
    return TrialAggregate(
        trials=len(reports),
        mean_rate=float(rates.mean()),
        rate_ci=_normal_ci(rates),
        mean_distortion=tuple(float(v) for v in distortion.mean(axis=0)),
        distortion_ci=tuple(_normal_ci(distortion[:, j]) for j in range(distortion.shape[1])),
        mean_exact_distortion=tuple(float(v) for v in exact.mean(axis=0)),
        error_fraction=float(np.mean([r.error_declared for r in reports])),
    )


def run_trial(experiment: Experiment, n: int, trial: int, seed: int) -> TrialReport:
    """One source draw, one channel draw, one encoding, J decodings."""
    preset, catalog = experiment.preset, experiment.catalog
    spec, codec = preset.spec, preset.codec
    this_seed = trial_seed(seed, trial)
    rng = np.random.default_rng(this_seed)
    x = sample_source(preset.source, n, rng)
    ys, zs = sample_channel(spec, x, rng)
    bits, plan = encode(x, spec, codec, catalog)
    realized, exact = [], []
    for j in range(1, spec.J + 1):
        zt = decode(bits, j, ys[j - 1], n, spec, codec, catalog)
        realized.append(block_distortion(spec, j, zt, zs[j - 1]))
        exact.append(exact_conditional_distortion(x, plan, spec, catalog, j))
    return TrialReport(
        scenario=preset.name, trial=trial, n=n, seed=this_seed, bits=bits.bit_length,
        rate=bits.bit_length / n, distortion=tuple(realized), exact_distortion=tuple(exact),
        error_declared=plan.error_declared, l=plan.l, s=plan.s, code_index=plan.code_index,
    )


def _run_trial_job(job) -> TrialReport:
    return run_trial(*job)


def run_trials(experiment: Experiment, n: int, trials: int, seed: int, workers: int | None = None) -> TrialSummary:
    if n < 4:
        raise ModelError("trial length must be at least 4")
    if trials < 1:
        raise ModelError(f"need at least one trial, got {trials}")
    workers = workers or settings.trial_workers
    jobs = [(experiment, n, k, seed) for k in range(trials)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(_run_trial_job, jobs))
    else:
        reports = [_run_trial_job(job) for job in jobs]
    aggregate = aggregate_reports(reports)
    logger.info(
        "Trials finished",
        extra={
            "scenario": experiment.preset.name, "n": n, "trials": trials,
            "mean_rate": aggregate.mean_rate, "error_fraction": aggregate.error_fraction,
        },
    )
    return TrialSummary(reports=tuple(reports), aggregate=aggregate)


@dataclass(frozen=True)
class GoodSetPoint:
    n: int
    trials: int
    errors: int
    oracle: float | None

    @property
    def error_fraction(self) -> float:
        return self.errors / self.trials

    def oracle_sigma(self) -> float | None:
        if self.oracle is None:
            return None
        return float(np.sqrt(self.oracle * (1 - self.oracle) / self.trials))


@dataclass(frozen=True)
class GoodSetReport:
    scenario: str
    epsilon: float
    premise: PremiseReport
    points: tuple[GoodSetPoint, ...]
    excess: np.ndarray | None = field(default=None, compare=False)


def estimate_good_set_probability(experiment: Experiment, n_grid, trials: int, seed: int) -> GoodSetReport:
    """Fraction of sampled sequences outside the good set, per length."""
    if trials < 1:
        raise ModelError(f"need at least one trial, got {trials}")
    preset, catalog = experiment.preset, experiment.catalog
    spec, codec = preset.spec, preset.codec
    premise = check_premise(spec, codec, catalog, preset.source)
    if not premise.satisfied:
        logger.warning(
            "No catalog code meets the premise under the true source",
            extra={"scenario": preset.name},
        )
    excess = excess_function(catalog, codec, premise.l, premise.code_index) if premise.satisfied else None

    points = []
    for n in n_grid:
        errors = 0
        for k in range(trials):
            rng = np.random.default_rng(trial_seed(seed, n, k))
            x = sample_source(preset.source, n, rng)
            errors += select_plan(x, spec, codec, catalog).error_declared
        oracle = binomial_error_oracle(spec, codec, catalog, preset.source, n)
        points.append(GoodSetPoint(n=n, trials=trials, errors=errors, oracle=oracle))
        logger.info(
            "Good-set point estimated",
            extra={"scenario": preset.name, "n": n, "errors": errors, "oracle": oracle},
        )
    return GoodSetReport(
        scenario=preset.name, epsilon=codec.epsilon, premise=premise,
        points=tuple(points), excess=excess,
    )


TRIAL_COLUMNS = ("scenario", "n", "seed", "bits", "rate")
TRIAL_TAIL_COLUMNS = ("error_declared", "l", "s", "code_index")
GOODSET_COLUMNS = ("scenario", "n", "trials", "errors", "error_fraction", "oracle", "epsilon")


def export_csv(reports, path: str | Path) -> None:
    """
    Columns: scenario, n, seed, bits, rate, distortion_1..J,
    exact_distortion_1..J, error_declared, l, s, code_index.
    Rows sorted by (scenario, n, trial).
    """
    reports = sorted(reports, key=lambda r: (r.scenario, r.n, r.trial))
    J = max((len(r.distortion) for r in reports), default=0)
    header = (
        list(TRIAL_COLUMNS)
        + [f"distortion_{j}" for j in range(1, J + 1)]
        + [f"exact_distortion_{j}" for j in range(1, J + 1)]
        + list(TRIAL_TAIL_COLUMNS)
    )
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for r in reports:
            writer.writerow(
                [r.scenario, r.n, r.seed, r.bits, repr(r.rate)]
                + [repr(v) for v in r.distortion]
                + [repr(v) for v in r.exact_distortion]
                + [int(r.error_declared), r.l, r.s, r.code_index]
            )


def export_goodset_csv(report: GoodSetReport, path: str | Path) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(GOODSET_COLUMNS)
        for p in sorted(report.points, key=lambda p: p.n):
            writer.writerow([
                report.scenario, p.n, p.trials, p.errors, repr(p.error_fraction),
                "" if p.oracle is None else repr(p.oracle), repr(report.epsilon),
            ])
