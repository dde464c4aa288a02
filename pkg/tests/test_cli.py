import json
from pathlib import Path

import pytest
from sqlalchemy.pool import StaticPool
from sqlmodel import Session, create_engine

from app import cli
from app.storage import list_runs

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _run(capsys, *argv):
    assert cli.main(list(argv)) == 0
    return json.loads(capsys.readouterr().out)


@pytest.fixture
def memory_engine(monkeypatch):
    engine = create_engine(
        "sqlite://", connect_args={"check_same_thread": False}, poolclass=StaticPool
    )
    monkeypatch.setattr(cli, "engine", engine)
    return engine


def test_sequence_files(tmp_path):
    path = tmp_path / "seq"
    cli.write_sequence(path, [0, 1, 1, 3])
    assert path.read_text() == "0 1 1 3\n"
    assert cli.read_sequence(path).tolist() == [0, 1, 1, 3]
    path.write_text("0 a 1\n")
    with pytest.raises(cli.ModelError):
        cli.read_sequence(path)


def test_scenario_list(capsys):
    names = [row["name"] for row in _run(capsys, "scenario", "list")["scenarios"]]
    assert names == sorted(names)
    assert "wyner_ziv" in names


def test_catalog_build_exports_codes(capsys, tmp_path):
    out = tmp_path / "catalog.txt"
    payload = _run(capsys, "catalog", "build", "--config", str(CONFIGS / "complementary_delivery.json"), "--out", str(out))
    assert set(payload["slots"]) == {"1"}
    assert payload["epsilon"] == pytest.approx(0.1 / 10)
    assert len(payload["fingerprint"]) == 64
    assert out.read_text()


def test_encode_then_decode_is_lossless_for_xor(capsys, tmp_path):
    config = str(CONFIGS / "complementary_delivery.json")
    bits = tmp_path / "draw.umtc"
    plan = _run(capsys, "encode", "--config", config, "--n", "64", "--seed", "5", "--out", str(bits))
    assert plan["error_declared"] is False
    assert plan["bits"] >= 64
    for j in (1, 2):
        recon = tmp_path / f"recon{j}"
        payload = _run(
            capsys, "decode", "--config", config, "--decoder", str(j), "--bits", str(bits),
            "--side", f"{bits}.y{j}", "--target", f"{bits}.z{j}", "--out", str(recon),
        )
        assert payload["distortion"] == 0.0
        assert cli.read_sequence(recon).tolist() == cli.read_sequence(f"{bits}.z{j}").tolist()


def test_decode_prints_reconstruction_without_out(capsys, tmp_path):
    config = str(CONFIGS / "point_to_point.json")
    bits = tmp_path / "p2p.umtc"
    _run(capsys, "encode", "--config", config, "--n", "16", "--out", str(bits))
    payload = _run(capsys, "decode", "--config", config, "--decoder", "1", "--bits", str(bits), "--side", f"{bits}.y1")
    assert payload["reconstruction"] == [0] * 16


def test_trials_writes_csv_and_stores(capsys, tmp_path, memory_engine):
    csv_path = tmp_path / "trials.csv"
    payload = _run(
        capsys, "trials", "--config", str(CONFIGS / "point_to_point.json"), "--n", "64",
        "--trials", "3", "--seed", "1", "--csv", str(csv_path), "--store",
    )
    assert payload["trials"] == 3
    assert payload["mean_rate"] == 0.0
    assert len(csv_path.read_text().splitlines()) == 4
    with Session(memory_engine) as session:
        runs = list_runs(session)
    assert [run.id for run in runs] == [payload["run_id"]]


def test_goodset(capsys, tmp_path, memory_engine):
    csv_path = tmp_path / "goodset.csv"
    payload = _run(
        capsys, "goodset", "--config", str(CONFIGS / "point_to_point.json"), "--n-grid", "64", "256",
        "--trials", "5", "--csv", str(csv_path), "--store",
    )
    assert payload["premise_satisfied"] is True
    assert [p["n"] for p in payload["points"]] == [64, 256]
    assert all(p["oracle"] is not None for p in payload["points"])
    assert payload["run_id"] >= 1


def test_errors_exit_with_code_2(capsys, tmp_path):
    assert cli.main(["trials", "--config", str(tmp_path / "missing.json"), "--n", "64"]) == 2
    assert "error:" in capsys.readouterr().err


def test_unknown_log_level_is_rejected(capsys):
    assert cli.main(["--log-level", "LOUD", "scenario", "list"]) == 2
    assert "LOUD" in capsys.readouterr().err


@pytest.mark.parametrize("verb, extra", [("trials", ["--n", "64"]), ("goodset", ["--n-grid", "64"])])
def test_zero_trials_exit_with_code_2(capsys, verb, extra):
    argv = [verb, "--config", str(CONFIGS / "point_to_point.json"), *extra, "--trials", "0"]
    assert cli.main(argv) == 2
    assert "at least one trial" in capsys.readouterr().err
