import pytest
from fastapi.testclient import TestClient
from sqlalchemy.pool import StaticPool
from sqlmodel import Session, create_engine

from app.diagnostics import PremiseReport
from app.experiments import (
    GoodSetPoint,
    GoodSetReport,
    TrialReport,
    TrialSummary,
    aggregate_reports,
    trial_seed,
)
from app.main import app, get_session
from app.storage import (
    GoodSetRow,
    TrialRow,
    create_db_and_tables,
    list_runs,
    run_rows,
    save_good_set,
    save_trial_run,
    split_floats,
)


@pytest.fixture
def session():
    engine = create_engine(
        "sqlite://", connect_args={"check_same_thread": False}, poolclass=StaticPool
    )
    create_db_and_tables(engine)
    with Session(engine) as session:
        yield session


@pytest.fixture
def client(session):
    app.dependency_overrides[get_session] = lambda: session
    yield TestClient(app)
    app.dependency_overrides.clear()


def _summary(seed=2**63 + 5):
    reports = tuple(
        TrialReport(
            scenario="point_to_point", trial=k, n=256, seed=trial_seed(seed, k), bits=0, rate=0.0,
            distortion=(0.25 + k / 100,), exact_distortion=(0.3,), error_declared=False,
            l=1, s=0, code_index=0,
        )
        for k in (1, 0)
    )
    return TrialSummary(reports=reports, aggregate=aggregate_reports(reports))


def _good_set():
    return GoodSetReport(
        scenario="point_to_point", epsilon=0.05, premise=PremiseReport(True, 1, 0, (0.3,)),
        points=(GoodSetPoint(256, 10, 0, 1e-9), GoodSetPoint(64, 10, 1, 2.5e-4)),
    )


def test_split_floats():
    assert split_floats("0.1,0.25") == [0.1, 0.25]
    assert split_floats(None) == []
    assert split_floats("") == []


def test_save_trial_run(session):
    seed = 2**63 + 5
    run = save_trial_run(session, _summary(seed), "abc123", seed)
    assert run.id is not None
    assert run.kind == "trials"
    assert run.seed == str(seed)
    assert split_floats(run.mean_distortion) == pytest.approx([0.255])
    rows = run_rows(session, run)
    assert all(isinstance(row, TrialRow) for row in rows)
    assert [row.trial for row in rows] == [0, 1]
    assert int(rows[0].seed) == trial_seed(seed, 0)


def test_save_good_set(session):
    run = save_good_set(session, _good_set(), "abc123", 3)
    assert run.kind == "goodset"
    assert run.n is None
    assert run.error_fraction == pytest.approx(1 / 20)
    rows = run_rows(session, run)
    assert all(isinstance(row, GoodSetRow) for row in rows)
    assert [row.n for row in rows] == [64, 256]
    assert list_runs(session) == [run]


def test_index(client):
    response = client.get("/")
    assert response.status_code == 200
    assert "/runs" in response.text


def test_scenarios(client):
    response = client.get("/scenarios")
    assert response.status_code == 200
    scenarios = {s["name"]: s for s in response.json()}
    assert "complementary_delivery" in scenarios
    assert scenarios["complementary_delivery"]["decoders"] == 2
    assert scenarios["point_to_point"]["catalog_mode"] == "files"


def test_runs_listing_and_detail(client, session):
    run = save_trial_run(session, _summary(), "abc123", 7)
    save_good_set(session, _good_set(), "abc123", 7)

    listing = client.get("/runs").json()
    assert [r["kind"] for r in listing] == ["trials", "goodset"]

    detail = client.get(f"/runs/{run.id}").json()
    assert detail["catalog_fingerprint"] == "abc123"
    assert detail["mean_exact_distortion"] == pytest.approx([0.3])
    assert detail["rows"][0]["distortion"] == pytest.approx([0.25])
    assert "run_id" not in detail["rows"][0]


def test_missing_run_is_404(client):
    response = client.get("/runs/999")
    assert response.status_code == 404
