"""
Neuroevolution Configuration v1.0

Uses Pydantic Settings for process-wide settings (environment variables,
.env file) and pydantic models for experiment files.

Experiment files are INI-style with five sections:
    [experiment]  datasets, q grid, strategies, repetitions, directories
    [evolution]   GA parameters and search constraints
    [training]    epochs, batch size, learning rate, optimizer
    [coverage]    NC threshold, TKNC top-K, KMN sections
    [fitness]     RET pseudo-label thresholds

Usage:
    from neuroevo.config import settings, load_experiment_config
    config = load_experiment_config("configs/desk_scale.ini")
"""

from typing import Any, Dict, List, Optional, Tuple, Union
from dataclasses import dataclass
from pathlib import Path
import configparser

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from neuroevo.coverage import CoverageConfig, CoverageMetric
from neuroevo.data import DEFAULT_RATIOS, PMLB_URL_TEMPLATE
from neuroevo.descriptor import SearchConstraints
from neuroevo.errors import ConfigError
from neuroevo.evolution import GAConfig
from neuroevo.fitness import FitnessSpec, Strategy
from neuroevo.nn import Optimizer, TrainConfig


class Settings(BaseSettings):
    """
    Process-wide settings.

    Configuration priority:
    1. Environment variables with prefix NEUROEVO_ (highest)
    2. .env file
    3. Default values (lowest)
    """

    model_config = SettingsConfigDict(
        env_prefix="NEUROEVO_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
        case_sensitive=False,
    )

    cache_dir: str = Field(
        default="~/.cache/neuroevo/pmlb",
        description="Directory holding downloaded PMLB files"
    )

    results_dir: str = Field(
        default="results",
        description="Output directory for experiments whose file sets no output_dir"
    )

    pmlb_url_template: str = Field(
        default=PMLB_URL_TEMPLATE,
        description="Download URL with a {name} placeholder"
    )

    workers: int = Field(
        default=1,
        ge=1,
        description="Threads evaluating one generation"
    )

    log_dir: str = Field(
        default="results/logs",
        description="Directory for events.jsonl of commands outside a run (fetch, datasets, summarize)"
    )

    echo_events: bool = Field(
        default=True,
        description="Echo INFO and above events to stderr"
    )

    @field_validator("cache_dir", "results_dir", "log_dir")
    @classmethod
    def validate_directories(cls, v: str) -> str:
        """Remove trailing slashes for consistency."""
        return v.rstrip("/\\") or v

    @property
    def cache_path(self) -> Path:
        return Path(self.cache_dir).expanduser()

    @property
    def results_path(self) -> Path:
        return Path(self.results_dir).expanduser()

    @property
    def log_path(self) -> Path:
        return Path(self.log_dir).expanduser()

    def to_display_dict(self) -> Dict[str, Any]:
        """Export configuration as dictionary for display."""
        return {
            "Cache Directory": str(self.cache_path),
            "Results Directory": str(self.results_path),
            "PMLB URL Template": self.pmlb_url_template,
            "Workers": self.workers,
            "Log Directory": str(self.log_path),
            "Echo Events": self.echo_events,
        }


# =========================================================================
# Experiment configuration
# =========================================================================

STRATEGY_LABELS: Tuple[str, ...] = ("SUP", "NC", "TKNC", "KMN", "NBC", "SNAC", "CERT", "RET")


def spec_from_label(
    label: str,
    coverage: CoverageConfig,
    ret_low: float = 0.4,
    ret_high: float = 0.6
) -> FitnessSpec:
    """Turn a CSV-style strategy label into a FitnessSpec."""
    label = label.strip().upper()
    if label == "SUP":
        return FitnessSpec(strategy=Strategy.SUPERVISED, ret_low=ret_low, ret_high=ret_high)
    if label in ("CERT", "RET"):
        return FitnessSpec(strategy=Strategy(label), ret_low=ret_low, ret_high=ret_high)
    try:
        metric = CoverageMetric(label)
    except ValueError:
        raise ConfigError(f"unknown strategy {label!r}; expected one of {', '.join(STRATEGY_LABELS)}")
    return FitnessSpec(
        strategy=Strategy.COVERAGE,
        coverage_config=coverage.model_copy(update={"metric": metric}),
        ret_low=ret_low,
        ret_high=ret_high,
    )


@dataclass(frozen=True)
class Cell:
    """One (dataset, q, strategy, repetition) run of the grid."""
    dataset: str
    q: float
    spec: FitnessSpec
    repetition: int

    @property
    def label(self) -> str:
        return self.spec.label


class ExperimentConfig(BaseModel):
    """A full experiment grid: dataset x q x strategy x repetitions."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    datasets: List[str] = Field(min_length=1)
    q_grid: List[float] = Field(default_factory=lambda: [0.0], min_length=1)
    strategies: List[str] = Field(default_factory=lambda: ["SUP"], min_length=1)
    repetitions: int = Field(default=1, ge=1)
    output_dir: Optional[str] = None
    data_dir: Optional[str] = None
    allow_fetch: bool = True
    split_ratios: Tuple[float, float, float] = DEFAULT_RATIOS

    ga: GAConfig = Field(default_factory=GAConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    coverage: CoverageConfig = Field(default_factory=CoverageConfig)
    ret_low: float = Field(default=0.4, ge=0.0, le=1.0)
    ret_high: float = Field(default=0.6, ge=0.0, le=1.0)

    @field_validator("q_grid")
    @classmethod
    def validate_q_grid(cls, v: List[float]) -> List[float]:
        bad = [q for q in v if not 0.0 <= q < 1.0]
        if bad:
            raise ValueError(f"q values must lie in [0, 1), got {bad}")
        return v

    @field_validator("strategies")
    @classmethod
    def validate_strategies(cls, v: List[str]) -> List[str]:
        labels = [s.strip().upper() for s in v]
        unknown = [s for s in labels if s not in STRATEGY_LABELS]
        if unknown:
            raise ValueError(f"unknown strategies {unknown}; expected from {list(STRATEGY_LABELS)}")
        return labels

    @model_validator(mode="after")
    def _check_thresholds(self) -> "ExperimentConfig":
        if self.ret_low >= self.ret_high:
            raise ValueError(f"ret_low ({self.ret_low}) must be below ret_high ({self.ret_high})")
        return self

    def fitness_specs(self) -> List[FitnessSpec]:
        return [spec_from_label(s, self.coverage, self.ret_low, self.ret_high) for s in self.strategies]

    def specs_for_q(self, q: float) -> List[FitnessSpec]:
        """Strategies run at one q; q = 0 collapses to a single supervised run."""
        if q == 0.0:
            return [spec_from_label("SUP", self.coverage, self.ret_low, self.ret_high)]
        return [spec.model_copy(update={"q": q}) for spec in self.fitness_specs()]

    def cells(self) -> List[Cell]:
        """Grid cells in a fixed order."""
        return [
            Cell(dataset=name, q=q, spec=spec, repetition=r)
            for name in self.datasets
            for q in self.q_grid
            for spec in self.specs_for_q(q)
            for r in range(self.repetitions)
        ]

    def repetition_seed(self, repetition: int) -> int:
        return self.ga.global_seed + repetition

    def with_overrides(self, seed: Optional[int] = None, workers: Optional[int] = None) -> "ExperimentConfig":
        """Apply CLI overrides for the global seed and worker count."""
        update: Dict[str, Any] = {}
        if seed is not None:
            update["global_seed"] = seed
        if workers is not None:
            update["workers"] = workers
        if not update:
            return self
        return self.model_copy(update={"ga": GAConfig.model_validate({**self.ga.model_dump(), **update})})

    def resolved(self, settings: Settings) -> "ExperimentConfig":
        """Materialize the data and output directories from settings when unset."""
        update: Dict[str, Any] = {}
        if self.data_dir is None:
            update["data_dir"] = str(settings.cache_path)
        if self.output_dir is None:
            update["output_dir"] = str(settings.results_path)
        return self.model_copy(update=update) if update else self


# =========================================================================
# INI reading and writing
# =========================================================================

_SECTIONS: Dict[str, Tuple[str, ...]] = {
    "experiment": ("datasets", "q_grid", "strategies", "repetitions", "output_dir",
                   "data_dir", "allow_fetch", "split_ratios"),
    "evolution": ("population_size", "generations", "selection_size", "crossover_probability",
                  "max_depth", "max_width", "global_seed", "workers"),
    "training": ("epochs", "batch_size", "learning_rate", "optimizer"),
    "coverage": ("threshold", "top_k", "sections"),
    "fitness": ("ret_low", "ret_high"),
}

_LIST_KEYS = {"datasets", "q_grid", "strategies", "split_ratios"}


def _split_list(value: str) -> List[str]:
    return [item.strip() for item in value.replace("\n", ",").split(",") if item.strip()]


def _read_sections(parser: configparser.ConfigParser, source: str) -> Dict[str, Dict[str, Any]]:
    unknown_sections = [s for s in parser.sections() if s not in _SECTIONS]
    if unknown_sections:
        raise ConfigError(f"{source}: unknown sections {unknown_sections}")

    raw: Dict[str, Dict[str, Any]] = {name: {} for name in _SECTIONS}
    for section in parser.sections():
        for key, value in parser.items(section):
            if key not in _SECTIONS[section]:
                raise ConfigError(f"{source}: unknown key [{section}] {key}")
            value = value.strip()
            if key in _LIST_KEYS:
                raw[section][key] = _split_list(value)
            elif value == "" or value.lower() == "none":
                raw[section][key] = None
            else:
                raw[section][key] = value
    return raw


def _drop_none(data: Dict[str, Any], keep: Tuple[str, ...] = ()) -> Dict[str, Any]:
    return {k: v for k, v in data.items() if v is not None or k in keep}


def parse_experiment_config(text: str, source: str = "<string>") -> ExperimentConfig:
    """
    Parse INI text into a validated ExperimentConfig.

    Raises:
        ConfigError: syntax errors, unknown sections or keys, invalid values
    """
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=source)
    except configparser.Error as e:
        raise ConfigError(f"{source}: {e}") from e

    raw = _read_sections(parser, source)
    evolution = dict(raw["evolution"])
    constraints = _drop_none({k: evolution.pop(k, None) for k in ("max_depth", "max_width")})

    try:
        data = {
            **_drop_none(raw["experiment"]),
            "ga": {**_drop_none(evolution, keep=("selection_size",)), "constraints": constraints},
            "train": _drop_none(raw["training"]),
            "coverage": _drop_none(raw["coverage"]),
            **_drop_none(raw["fitness"]),
        }
        config = ExperimentConfig.model_validate(data)
    except ValidationError as e:
        fields = ", ".join(".".join(str(p) for p in err["loc"]) for err in e.errors())
        raise ConfigError(f"{source}: invalid value for {fields}: {e}") from e

    return config


def load_experiment_config(path: Union[str, Path]) -> ExperimentConfig:
    """Read and validate an experiment file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    return parse_experiment_config(text, source=str(path))


def _fmt(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ", ".join(_fmt(v) for v in value)
    if isinstance(value, Optimizer):
        return value.value
    return str(value)


def render_resolved_config(config: ExperimentConfig) -> str:
    """
    Render a config with every default materialized.

    parse_experiment_config() of the output yields an equal config.
    """
    ga = config.ga
    sections = {
        "experiment": {
            "datasets": config.datasets,
            "q_grid": config.q_grid,
            "strategies": config.strategies,
            "repetitions": config.repetitions,
            "output_dir": config.output_dir,
            "data_dir": config.data_dir,
            "allow_fetch": config.allow_fetch,
            "split_ratios": list(config.split_ratios),
        },
        "evolution": {
            "population_size": ga.population_size,
            "generations": ga.generations,
            "selection_size": ga.selection_size,
            "crossover_probability": ga.crossover_probability,
            "max_depth": ga.constraints.max_depth,
            "max_width": ga.constraints.max_width,
            "global_seed": ga.global_seed,
            "workers": ga.workers,
        },
        "training": {
            "epochs": config.train.epochs,
            "batch_size": config.train.batch_size,
            "learning_rate": config.train.learning_rate,
            "optimizer": config.train.optimizer,
        },
        "coverage": {
            "threshold": config.coverage.threshold,
            "top_k": config.coverage.top_k,
            "sections": config.coverage.sections,
        },
        "fitness": {
            "ret_low": config.ret_low,
            "ret_high": config.ret_high,
        },
    }

    lines = ["# neuroevo resolved configuration"]
    for name, values in sections.items():
        lines.append("")
        lines.append(f"[{name}]")
        lines.extend(f"{key} = {_fmt(value)}" for key, value in values.items())
    return "\n".join(lines) + "\n"


# Global singleton instance
settings = Settings()
