"""Command-line entry point: python -m app.cli <verb> ...

Sequence files (side information, targets, reconstructions) hold one line of
space-separated 0-based symbol indices.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
from sqlmodel import Session

from app.bitstream import read_container, write_container
from app.catalog import export_catalog
from app.config import load_experiment_config, settings
from app.errors import CodingError, ModelError
from app.experiments import (
    PRESETS,
    estimate_good_set_probability,
    export_csv,
    export_goodset_csv,
    prepare_experiment,
    preset_from_config,
    run_trials,
    trial_seed,
)
from app.logging_config import configure_logging
from app.model import block_distortion, sample_channel, sample_source
from app.storage import create_db_and_tables, engine, save_good_set, save_trial_run
from app.universal import decode, encode, rate_threshold

logger = logging.getLogger(__name__)


def _experiment(path: str):
    return prepare_experiment(preset_from_config(load_experiment_config(path)))


def write_sequence(path: str | Path, values) -> None:
    Path(path).write_text(" ".join(str(int(v)) for v in values) + "\n")


def read_sequence(path: str | Path) -> np.ndarray:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ModelError(f"cannot read sequence {path}: {exc}") from exc
    try:
        return np.array([int(token) for token in text.split()], dtype=np.int64)
    except ValueError as exc:
        raise ModelError(f"{path} holds a non-integer symbol") from exc


def _emit(payload: dict) -> None:
    print(json.dumps(payload, indent=2))


def cmd_scenario_list(args) -> None:
    rows = []
    for name, factory in sorted(PRESETS.items()):
        preset = factory()
        rows.append({"name": name, "params": preset.params, "decoders": preset.spec.J})
    _emit({"scenarios": rows})


def cmd_catalog_build(args) -> None:
    experiment = _experiment(args.config)
    catalog = experiment.catalog
    if args.out:
        export_catalog(catalog, args.out)
    _emit({
        "fingerprint": catalog.fingerprint(),
        "slots": {str(l): len(codes) for l, codes in sorted(catalog.slots.items())},
        "epsilon": experiment.codec.epsilon,
        "rate_threshold": rate_threshold(experiment.codec, catalog),
    })


def cmd_encode(args) -> None:
    experiment = _experiment(args.config)
    preset = experiment.preset
    rng = np.random.default_rng(trial_seed(args.seed, 0))
    x = sample_source(preset.source, args.n, rng)
    ys, zs = sample_channel(preset.spec, x, rng)
    bits, plan = encode(x, preset.spec, preset.codec, experiment.catalog)
    out = Path(args.out)
    write_container(out, bits, args.n)
    write_sequence(out.with_name(out.name + ".x"), x)
    for j in range(1, preset.spec.J + 1):
        write_sequence(out.with_name(f"{out.name}.y{j}"), ys[j - 1])
        write_sequence(out.with_name(f"{out.name}.z{j}"), zs[j - 1])
    logger.info("Sequence encoded", extra={"path": str(out), "bits": bits.bit_length})
    _emit({
        "n": args.n,
        "bits": bits.bit_length,
        "rate": bits.bit_length / args.n,
        "l": plan.l,
        "s": plan.s,
        "code_index": plan.code_index,
        "error_declared": plan.error_declared,
        "slack": list(plan.slack),
    })


def cmd_decode(args) -> None:
    experiment = _experiment(args.config)
    preset = experiment.preset
    bits, n = read_container(args.bits)
    y = read_sequence(args.side)
    zt = decode(bits, args.decoder, y, n, preset.spec, preset.codec, experiment.catalog)
    if args.out:
        write_sequence(args.out, zt)
    payload = {"decoder": args.decoder, "n": n}
    if args.target:
        payload["distortion"] = block_distortion(preset.spec, args.decoder, zt, read_sequence(args.target))
    if not args.out:
        payload["reconstruction"] = [int(v) for v in zt]
    _emit(payload)


def cmd_trials(args) -> None:
    experiment = _experiment(args.config)
    summary = run_trials(experiment, args.n, args.trials, args.seed, args.workers)
    if args.csv:
        export_csv(summary.reports, args.csv)
    aggregate = summary.aggregate
    payload = {
        "scenario": experiment.preset.name,
        "n": args.n,
        "trials": aggregate.trials,
        "mean_rate": aggregate.mean_rate,
        "rate_ci": list(aggregate.rate_ci),
        "mean_distortion": list(aggregate.mean_distortion),
        "distortion_ci": [list(ci) for ci in aggregate.distortion_ci],
        "mean_exact_distortion": list(aggregate.mean_exact_distortion),
        "error_fraction": aggregate.error_fraction,
    }
    if args.store:
        create_db_and_tables(engine)
        with Session(engine) as session:
            run = save_trial_run(session, summary, experiment.catalog.fingerprint(), args.seed)
            payload["run_id"] = run.id
    _emit(payload)


def cmd_goodset(args) -> None:
    experiment = _experiment(args.config)
    report = estimate_good_set_probability(experiment, args.n_grid, args.trials, args.seed)
    if args.csv:
        export_goodset_csv(report, args.csv)
    payload = {
        "scenario": report.scenario,
        "epsilon": report.epsilon,
        "premise_satisfied": report.premise.satisfied,
        "points": [
            {"n": p.n, "trials": p.trials, "error_fraction": p.error_fraction,
             "oracle": p.oracle, "oracle_sigma": p.oracle_sigma()}
            for p in report.points
        ],
    }
    if args.store:
        create_db_and_tables(engine)
        with Session(engine) as session:
            run = save_good_set(session, report, experiment.catalog.fingerprint(), args.seed)
            payload["run_id"] = run.id
    _emit(payload)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="app.cli", description="Universal multiterminal lossy coding simulator")
    parser.add_argument("--log-level", default=settings.log_level)
    verbs = parser.add_subparsers(dest="verb", required=True)

    scenario = verbs.add_parser("scenario", help="inspect scenario presets")
    scenario_verbs = scenario.add_subparsers(dest="action", required=True)
    scenario_verbs.add_parser("list").set_defaults(handler=cmd_scenario_list)

    catalog = verbs.add_parser("catalog", help="build and export the shared catalog")
    catalog_verbs = catalog.add_subparsers(dest="action", required=True)
    build = catalog_verbs.add_parser("build")
    build.add_argument("--config", required=True)
    build.add_argument("--out", help="write codes in the block code text format")
    build.set_defaults(handler=cmd_catalog_build)

    enc = verbs.add_parser("encode", help="sample one source/channel draw and encode it")
    enc.add_argument("--config", required=True)
    enc.add_argument("--n", type=int, required=True)
    enc.add_argument("--seed", type=int, default=settings.default_seed)
    enc.add_argument("--out", required=True, help="bitstream container; side files get .x/.yJ/.zJ suffixes")
    enc.set_defaults(handler=cmd_encode)

    dec = verbs.add_parser("decode", help="reconstruct for one decoder")
    dec.add_argument("--config", required=True)
    dec.add_argument("--decoder", type=int, required=True)
    dec.add_argument("--bits", required=True)
    dec.add_argument("--side", required=True)
    dec.add_argument("--target", help="report realized distortion against this sequence")
    dec.add_argument("--out")
    dec.set_defaults(handler=cmd_decode)

    trials = verbs.add_parser("trials", help="Monte Carlo rate/distortion estimation")
    trials.add_argument("--config", required=True)
    trials.add_argument("--n", type=int, required=True)
    trials.add_argument("--trials", type=int, default=100)
    trials.add_argument("--seed", type=int, default=settings.default_seed)
    trials.add_argument("--workers", type=int, default=None)
    trials.add_argument("--csv")
    trials.add_argument("--store", action="store_true", help="persist the run to the results database")
    trials.set_defaults(handler=cmd_trials)

    goodset = verbs.add_parser("goodset", help="estimate the probability of leaving the good set")
    goodset.add_argument("--config", required=True)
    goodset.add_argument("--n-grid", type=int, nargs="+", required=True)
    goodset.add_argument("--trials", type=int, default=100)
    goodset.add_argument("--seed", type=int, default=settings.default_seed)
    goodset.add_argument("--csv")
    goodset.add_argument("--store", action="store_true")
    goodset.set_defaults(handler=cmd_goodset)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        configure_logging(args.log_level, stream=sys.stderr)
        args.handler(args)
    except CodingError as exc:
        logger.error("Command failed", extra={"verb": args.verb, "error": str(exc)})
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
