import json
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, Field, ValidationError, model_validator
from pydantic_settings import BaseSettings

from app.errors import ConfigError


class Settings(BaseSettings):
    database_url: str = "sqlite:///results.db"
    database_echo: bool = False
    log_level: str = "INFO"
    catalog_limit: int = 65536  # literal enumeration cap
    trial_workers: int = 1
    default_seed: int = 0

    class Config:
        env_file = ".env"


settings = Settings()


class DecoderSection(BaseModel):
    """One decoder of a custom system: alphabets, channel, distortion."""

    alphabet_y: list[str]
    alphabet_z: list[str]
    alphabet_zt: list[str] | None = None  # defaults to alphabet_z
    side: str = "identity"  # "identity" | "absent" | "bsc p=0.1"
    target: str = "identity"
    distortion: str | list[list[float]] = "hamming"
    d_max: float | None = None


class SystemSection(BaseModel):
    alphabet_x: list[str]
    decoders: list[DecoderSection] = Field(min_length=1)
    # dense P(y_1, z_1, ..., y_J, z_J | x), overrides per-decoder constructors
    table: list | None = None


class SourceSection(BaseModel):
    kind: Literal["iid", "markov", "function_of_markov"]
    pmf: list[float] | None = None
    transition: list[list[float]] | None = None
    emission: list[int] | None = None
    allow_periodic: bool = False

    @model_validator(mode="after")
    def _check_fields(self):
        if self.kind == "iid" and self.pmf is None:
            raise ValueError("iid source needs 'pmf'")
        if self.kind != "iid" and self.transition is None:
            raise ValueError(f"{self.kind} source needs 'transition'")
        if self.kind == "function_of_markov" and self.emission is None:
            raise ValueError("function_of_markov source needs 'emission'")
        return self


class ScenarioSection(BaseModel):
    preset: str
    params: dict[str, float] = Field(default_factory=dict)
    system: SystemSection | None = None
    source: SourceSection | None = None

    @model_validator(mode="after")
    def _custom_needs_system(self):
        if self.preset == "custom" and (self.system is None or self.source is None):
            raise ValueError("custom scenario needs 'system' and 'source'")
        return self


class CodecSection(BaseModel):
    rate: float = Field(ge=0)
    delta: float = Field(gt=0)
    distortion: list[float]
    l_cap: int | None = Field(default=None, ge=1)


class CatalogDescriptor(BaseModel):
    """Everything needed to rebuild the identical catalog at every terminal."""

    model_config = {"frozen": True}

    mode: Literal["enumerate", "design", "files"] = "design"
    l_max: int = Field(default=1, ge=1)
    limit: int | None = None
    training: tuple[str, ...] = ("uniform",)
    weights: tuple[tuple[float, ...], ...] | None = None
    restarts: int = Field(default=1, ge=1)
    iterations: int = Field(default=50, ge=1)
    seed: int = 0
    code_files: tuple[str, ...] = ()


class ExperimentConfig(BaseModel):
    scenario: ScenarioSection
    codec: CodecSection | None = None
    catalog: CatalogDescriptor | None = None


def load_experiment_config(path: str | Path) -> ExperimentConfig:
    """Reads and validates a JSON experiment file."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        config = ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(f"invalid config {path}: {exc}") from exc
    # code files are resolved relative to the config file
    if config.catalog is not None and config.catalog.code_files:
        resolved = tuple(
            str(p if Path(p).is_absolute() else path.parent / p)
            for p in config.catalog.code_files
        )
        config.catalog = config.catalog.model_copy(update={"code_files": resolved})
    return config
