import logging

from fastapi import Depends, FastAPI, HTTPException
from fastapi.responses import HTMLResponse
from sqlmodel import Session

from app.experiments import PRESETS
from app.logging_config import configure_logging
from app.config import settings
from app.storage import TrialRun, create_db_and_tables, engine, list_runs, run_rows, split_floats


configure_logging(settings.log_level)
logger = logging.getLogger(__name__)

app = FastAPI()


def get_session():
    with Session(engine) as session:
        yield session


@app.on_event("startup")
def on_startup():
    create_db_and_tables()


def _run_summary(run: TrialRun) -> dict:
    return {
        "id": run.id,
        "kind": run.kind,
        "scenario": run.scenario,
        "n": run.n,
        "trials": run.trials,
        "seed": run.seed,
        "catalog_fingerprint": run.catalog_fingerprint,
        "mean_rate": run.mean_rate,
        "mean_distortion": split_floats(run.mean_distortion),
        "mean_exact_distortion": split_floats(run.mean_exact_distortion),
        "error_fraction": run.error_fraction,
        "created_at": run.created_at.isoformat(),
    }


@app.get("/", response_class=HTMLResponse)
def read_root():
    return """
    <html>
        <head>
            <title>Universal Multiterminal Coding Results</title>
        </head>
        <body>
            <h1>Universal Multiterminal Coding Results</h1>
            <a href="/scenarios">Scenarios</a>
            <a href="/runs">Stored runs</a>
        </body>
    </html>
    """


@app.get("/scenarios")
def list_scenarios():
    scenarios = []
    for name, factory in sorted(PRESETS.items()):
        preset = factory()
        scenarios.append({
            "name": name,
            "params": preset.params,
            "decoders": preset.spec.J,
            "alphabet_x": list(preset.spec.alphabet_x),
            "rate": preset.codec.rate,
            "delta": preset.codec.delta,
            "distortion": list(preset.codec.distortion),
            "catalog_mode": preset.catalog.mode,
        })
    return scenarios


@app.get("/runs")
def read_runs(session: Session = Depends(get_session)):
    return [_run_summary(run) for run in list_runs(session)]


@app.get("/runs/{run_id}")
def read_run(run_id: int, session: Session = Depends(get_session)):
    run = session.get(TrialRun, run_id)
    if run is None:
        logger.info("Run not found", extra={"run_id": run_id})
        raise HTTPException(status_code=404, detail=f"run {run_id} not found")
    rows = []
    for row in run_rows(session, run):
        data = row.model_dump(exclude={"id", "run_id"})
        for column in ("distortion", "exact_distortion"):
            if column in data:
                data[column] = split_floats(data[column])
        rows.append(data)
    return {**_run_summary(run), "rows": rows}
