"""Flat dotted-key configuration parsing and override tests."""

import pytest

from dualscreen.config import (
    ConfigError,
    RunConfig,
    merge_overrides,
    parse_config_file,
    parse_value,
)


class TestParsing:
    def test_json_literals(self):
        assert parse_value("3") == 3
        assert parse_value("0.25") == 0.25
        assert parse_value("true") is True
        assert parse_value("[1, 2]") == [1, 2]
        assert parse_value('"quoted"') == "quoted"

    def test_bare_words_are_strings(self):
        assert parse_value("reference") == "reference"

    def test_file_format(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text(
            "# experiment\n"
            "seed = 17\n"
            "\n"
            "det.lr = 0.004\n"
            "det.architecture = reference\n"
        )
        values = parse_config_file(path)
        assert values == {"seed": 17, "det.lr": 0.004, "det.architecture": "reference"}

    def test_bad_line_cites_location(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("seed = 1\njust words\n")
        with pytest.raises(ConfigError, match=":2"):
            parse_config_file(path)

    def test_overrides_win(self):
        merged = merge_overrides({"seed": 1, "det.lr": 0.01}, ("seed=5",))
        assert merged == {"seed": 5, "det.lr": 0.01}

    def test_malformed_override(self):
        with pytest.raises(ConfigError, match="KEY=VALUE"):
            merge_overrides({}, ("no-equals-sign",))


class TestRunConfig:
    def test_stage_configs_from_keys(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text(
            "seed = 17\n"
            "gen.anomaly_rate = 0.3\n"
            "det.iterations = 50\n"
            "det.anchor.stride = 4\n"
            "cls.backbone = medium\n"
        )
        cfg = RunConfig.load(str(path))
        assert cfg.seed() == 17
        assert cfg.scene_config().anomaly_rate == 0.3
        assert cfg.scene_config().seed == 17  # global seed flows down
        assert cfg.detector_config().iterations == 50
        assert cfg.anchor_config().stride == 4
        assert cfg.classifier_config().backbone == "medium"

    def test_defaults_without_file(self):
        cfg = RunConfig.load(None)
        assert cfg.seed() == 0
        assert cfg.detector_config().architecture == "reference"

    def test_preset_applies(self):
        cfg = RunConfig({"det.preset": "deep_backbone"})
        assert cfg.detector_config().iterations == 2 * RunConfig({}).detector_config().iterations

    def test_to_dict_sorted(self):
        cfg = RunConfig({"b": 1, "a": 2})
        assert list(cfg.to_dict()) == ["a", "b"]
