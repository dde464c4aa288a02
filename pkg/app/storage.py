from datetime import datetime
from typing import Optional

from pydantic import NaiveDatetime
from sqlalchemy.engine import Engine
from sqlmodel import Field, Session, SQLModel, create_engine, select

from app.config import settings


class TrialRun(SQLModel, table=True):
    id: Optional[int] = Field(default=None, primary_key=True)
    kind: str = Field(index=True)  # trials, goodset
    scenario: str = Field(index=True)
    n: Optional[int] = None  # None for a good-set sweep over several lengths
    trials: int
    seed: str  # uint64 seeds overflow sqlite integers
    catalog_fingerprint: str
    mean_rate: Optional[float] = None
    mean_distortion: Optional[str] = None  # Stored as comma-separated string like "0.1,0.25"
    mean_exact_distortion: Optional[str] = None
    error_fraction: Optional[float] = None
    created_at: NaiveDatetime = Field(default_factory=datetime.utcnow)


class TrialRow(SQLModel, table=True):
    id: Optional[int] = Field(default=None, primary_key=True)
    run_id: int = Field(foreign_key="trialrun.id", index=True)
    trial: int
    n: int
    seed: str
    bits: int
    rate: float
    distortion: str
    exact_distortion: str
    error_declared: bool
    l: int
    s: int
    code_index: int


class GoodSetRow(SQLModel, table=True):
    id: Optional[int] = Field(default=None, primary_key=True)
    run_id: int = Field(foreign_key="trialrun.id", index=True)
    n: int
    trials: int
    errors: int
    oracle: Optional[float] = None


engine = create_engine(settings.database_url, echo=settings.database_echo)


def create_db_and_tables(bind: Engine = engine):
    SQLModel.metadata.create_all(bind)


def _joined(values) -> str:
    return ",".join(repr(float(v)) for v in values)


def split_floats(raw: Optional[str]) -> list[float]:
    return [float(v) for v in raw.split(",")] if raw else []


def save_trial_run(session: Session, summary, catalog_fingerprint: str, seed: int) -> TrialRun:
    """Stores a TrialSummary with one row per trial."""
    reports = sorted(summary.reports, key=lambda r: r.trial)
    aggregate = summary.aggregate
    run = TrialRun(
        kind="trials",
        scenario=reports[0].scenario,
        n=reports[0].n,
        trials=aggregate.trials,
        seed=str(seed),
        catalog_fingerprint=catalog_fingerprint,
        mean_rate=aggregate.mean_rate,
        mean_distortion=_joined(aggregate.mean_distortion),
        mean_exact_distortion=_joined(aggregate.mean_exact_distortion),
        error_fraction=aggregate.error_fraction,
    )
    session.add(run)
    session.commit()
    session.refresh(run)
    for r in reports:
        session.add(TrialRow(
            run_id=run.id, trial=r.trial, n=r.n, seed=str(r.seed), bits=r.bits, rate=r.rate,
            distortion=_joined(r.distortion), exact_distortion=_joined(r.exact_distortion),
            error_declared=r.error_declared, l=r.l, s=r.s, code_index=r.code_index,
        ))
    session.commit()
    return run


def save_good_set(session: Session, report, catalog_fingerprint: str, seed: int) -> TrialRun:
    points = sorted(report.points, key=lambda p: p.n)
    run = TrialRun(
        kind="goodset",
        scenario=report.scenario,
        trials=points[0].trials if points else 0,
        seed=str(seed),
        catalog_fingerprint=catalog_fingerprint,
        error_fraction=(
            sum(p.errors for p in points) / sum(p.trials for p in points) if points else None
        ),
    )
    session.add(run)
    session.commit()
    session.refresh(run)
    for p in points:
        session.add(GoodSetRow(run_id=run.id, n=p.n, trials=p.trials, errors=p.errors, oracle=p.oracle))
    session.commit()
    return run


def list_runs(session: Session) -> list[TrialRun]:
    return list(session.exec(select(TrialRun).order_by(TrialRun.id)).all())


def run_rows(session: Session, run: TrialRun) -> list:
    table = TrialRow if run.kind == "trials" else GoodSetRow
    statement = select(table).where(table.run_id == run.id).order_by(table.id)
    return list(session.exec(statement).all())
