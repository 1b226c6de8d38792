from pathlib import Path

import pytest

from neuroevo.config import (
    ExperimentConfig,
    Settings,
    load_experiment_config,
    parse_experiment_config,
    render_resolved_config,
    spec_from_label,
)
from neuroevo.coverage import CoverageConfig, CoverageMetric
from neuroevo.errors import ConfigError
from neuroevo.fitness import Strategy
from neuroevo.nn import Optimizer

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

MINIMAL = """
[experiment]
datasets = blobs
q_grid = 0.0, 0.5
strategies = nc, RET
"""


class TestShippedConfigs:
    def test_desk_scale(self):
        config = load_experiment_config(CONFIGS / "desk_scale.ini")
        assert config.datasets == ["breast_w", "diabetes", "bupa"]
        assert config.q_grid == [0.0, 0.2, 0.8]
        assert config.strategies == ["NC", "TKNC", "KMN", "CERT", "RET"]
        assert config.data_dir is None
        assert config.ga.population_size == 10
        assert config.ga.selection_size == 5
        assert config.ga.constraints.max_depth == 8
        assert config.train.optimizer is Optimizer.MOMENTUM
        assert config.coverage.sections == 100
        # 3 datasets x (1 SUP at q=0 + 5 strategies x 2 q values) x 3 repetitions
        assert len(config.cells()) == 3 * 11 * 3

    def test_paper_scale(self):
        config = load_experiment_config(CONFIGS / "paper_scale.ini")
        assert len(config.datasets) == 20
        assert config.ga.population_size == 20
        assert config.ga.generations == 30
        assert config.ga.evaluation_budget == 620
        assert config.train.epochs == 50
        assert config.train.learning_rate == 1e-3
        assert config.repetitions == 10


class TestParse:
    def test_defaults_fill_in(self):
        config = parse_experiment_config(MINIMAL)
        assert config.strategies == ["NC", "RET"]
        assert config.ga == ExperimentConfig(datasets=["x"]).ga
        assert config.ret_low == 0.4

    def test_render_reparse_is_identity(self):
        config = load_experiment_config(CONFIGS / "desk_scale.ini").model_copy(update={"data_dir": "/tmp/cache"})
        text = render_resolved_config(config)
        assert text.startswith("# neuroevo resolved configuration")
        assert parse_experiment_config(text) == config

    def test_render_keeps_float_precision(self):
        config = parse_experiment_config(MINIMAL + "\n[training]\nlearning_rate = 0.0003\n")
        assert "learning_rate = 0.0003" in render_resolved_config(config)
        assert parse_experiment_config(render_resolved_config(config)).train.learning_rate == 0.0003

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match=r"unknown key \[evolution\] mutation_rate"):
            parse_experiment_config(MINIMAL + "\n[evolution]\nmutation_rate = 0.3\n")

    def test_unknown_section(self):
        with pytest.raises(ConfigError, match="unknown sections"):
            parse_experiment_config(MINIMAL + "\n[plots]\ndpi = 300\n")

    def test_invalid_value_names_field(self):
        with pytest.raises(ConfigError, match="repetitions"):
            parse_experiment_config(MINIMAL.replace("strategies", "repetitions = 0\nstrategies"))

    def test_q_out_of_range(self):
        with pytest.raises(ConfigError, match="q_grid"):
            parse_experiment_config(MINIMAL.replace("0.0, 0.5", "0.0, 1.0"))

    def test_unknown_strategy(self):
        with pytest.raises(ConfigError):
            parse_experiment_config(MINIMAL.replace("nc, RET", "NC, DEEPGINI"))

    def test_crossover_rejected(self):
        with pytest.raises(ConfigError, match="crossover_probability"):
            parse_experiment_config(MINIMAL + "\n[evolution]\ncrossover_probability = 0.5\n")

    def test_ret_thresholds_ordered(self):
        with pytest.raises(ConfigError):
            parse_experiment_config(MINIMAL + "\n[fitness]\nret_low = 0.7\nret_high = 0.6\n")

    def test_syntax_error(self):
        with pytest.raises(ConfigError):
            parse_experiment_config("datasets = blobs\n")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_experiment_config(tmp_path / "absent.ini")


class TestGrid:
    def test_q_zero_runs_supervised_once(self):
        config = parse_experiment_config(MINIMAL)
        cells = config.cells()
        assert [(c.q, c.label) for c in cells] == [(0.0, "SUP"), (0.5, "NC"), (0.5, "RET")]
        assert cells[1].spec.q == 0.5
        assert cells[1].spec.coverage_config.metric is CoverageMetric.NC

    def test_repetitions_expand(self):
        config = parse_experiment_config(MINIMAL.replace("strategies", "repetitions = 3\nstrategies"))
        assert len(config.cells()) == 9
        assert [c.repetition for c in config.cells()[:3]] == [0, 1, 2]

    def test_seed_override(self):
        config = parse_experiment_config(MINIMAL).with_overrides(seed=7, workers=3)
        assert config.ga.global_seed == 7
        assert config.ga.workers == 3
        assert config.repetition_seed(2) == 9

    def test_no_override_returns_same(self):
        config = parse_experiment_config(MINIMAL)
        assert config.with_overrides() is config

    def test_resolved_fills_data_dir(self, tmp_path):
        config = parse_experiment_config(MINIMAL)
        resolved = config.resolved(Settings(cache_dir=str(tmp_path)))
        assert resolved.data_dir == str(tmp_path)
        assert resolved.resolved(Settings(cache_dir="/elsewhere")).data_dir == str(tmp_path)

    def test_spec_from_label(self):
        coverage = CoverageConfig(threshold=0.25, sections=7)
        spec = spec_from_label("kmn", coverage)
        assert spec.strategy is Strategy.COVERAGE
        assert spec.coverage_config.sections == 7
        assert spec.coverage_config.metric is CoverageMetric.KMN
        with pytest.raises(ConfigError):
            spec_from_label("DeepGini", coverage)


class TestSettings:
    def test_env_override(self, monkeypatch, tmp_path):
        monkeypatch.setenv("NEUROEVO_CACHE_DIR", str(tmp_path / "pmlb") + "/")
        monkeypatch.setenv("NEUROEVO_WORKERS", "4")
        settings = Settings()
        assert settings.cache_path == tmp_path / "pmlb"
        assert settings.workers == 4

    def test_display_dict(self):
        display = Settings(results_dir="out").to_display_dict()
        assert display["Results Directory"] == "out"
        assert "Cache Directory" in display

    def test_resolved_fills_directories_from_settings(self, tmp_path):
        settings = Settings(cache_dir=str(tmp_path / "pmlb"), results_dir=str(tmp_path / "runs"))
        resolved = ExperimentConfig(datasets=["x"]).resolved(settings)
        assert resolved.data_dir == str(tmp_path / "pmlb")
        assert resolved.output_dir == str(tmp_path / "runs")

    def test_resolved_keeps_explicit_directories(self, tmp_path):
        config = ExperimentConfig(datasets=["x"], output_dir="mine", data_dir="data")
        assert config.resolved(Settings(results_dir=str(tmp_path))) == config
