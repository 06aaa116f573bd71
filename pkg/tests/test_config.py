from __future__ import annotations

import pytest

from incuna.config import apply_env_overrides, load_config, validate_config
from incuna.errors import ValidationError


class TestValidateConfig:
    def test_empty_config_fully_defaulted(self):
        cfg = validate_config({})
        assert cfg.confidence_threshold == 0.25
        assert cfg.iou_threshold == 0.5
        assert cfg.split_ratios == (0.8, 0.1, 0.1)
        assert cfg["ingest"]["max_pages"] == 100
        assert cfg["ingest"]["dpi"] == 300
        assert cfg["detector"]["name"] == "stub"
        assert cfg.stage_enabled == {"ocr": True, "classify": True, "describe": True}

    def test_hash_stable_across_runs(self):
        assert validate_config({}).config_hash == validate_config({}).config_hash
        assert len(validate_config({}).config_hash) == 64

    def test_hash_sensitive_to_content(self):
        a = validate_config({})
        b = validate_config({"thresholds": {"confidence": 0.9}})
        assert a.config_hash != b.config_hash

    def test_out_of_range_threshold_rejected(self):
        with pytest.raises(ValidationError, match="confidence"):
            validate_config({"thresholds": {"confidence": 1.5}})

    def test_multiple_errors_all_reported(self):
        with pytest.raises(ValidationError) as err:
            validate_config(
                {"thresholds": {"confidence": 1.5, "iou": -0.2}, "workers": 0}
            )
        assert len(err.value.problems) == 3
        text = "; ".join(err.value.problems)
        assert "confidence" in text and "iou" in text and "workers" in text

    def test_missing_source_path_rejected(self):
        with pytest.raises(ValidationError, match="does not exist"):
            validate_config({"sources": [{"doc_id": "a", "path": "/nope/missing.pdf"}]})

    def test_duplicate_source_ids_rejected(self, tmp_path):
        f = tmp_path / "x.pdf"
        f.write_bytes(b"%PDF-")
        with pytest.raises(ValidationError, match="duplicates"):
            validate_config(
                {
                    "sources": [
                        {"doc_id": "a", "path": str(f)},
                        {"doc_id": "a", "path": str(f)},
                    ]
                }
            )

    def test_bad_ratios_rejected(self):
        with pytest.raises(ValidationError, match="ratios"):
            validate_config({"split": {"ratios": [0.9, 0.2, 0.1]}})

    def test_bad_prompts_rejected(self):
        with pytest.raises(ValidationError, match="prompts"):
            validate_config({"prompts": ["ok", ""]})

    def test_bad_strategy_rejected(self):
        with pytest.raises(ValidationError, match="strategy"):
            validate_config({"detector": {"strategy": "ThirdWay"}})

    def test_partial_override_merges_with_defaults(self):
        cfg = validate_config({"thresholds": {"confidence": 0.7}})
        assert cfg.confidence_threshold == 0.7
        assert cfg.iou_threshold == 0.5  # untouched default


class TestEnvOverrides:
    def test_nested_override(self):
        raw = apply_env_overrides({}, {"INCUNA_THRESHOLDS__CONFIDENCE": "0.9"})
        assert raw["thresholds"]["confidence"] == 0.9

    def test_typed_parsing(self):
        raw = apply_env_overrides(
            {}, {"INCUNA_WORKERS": "4", "INCUNA_STAGES__OCR": "false"}
        )
        assert raw["workers"] == 4
        assert raw["stages"]["ocr"] is False

    def test_unrelated_vars_ignored(self):
        assert apply_env_overrides({"a": 1}, {"PATH": "/bin"}) == {"a": 1}

    def test_override_beats_file_value(self):
        raw = apply_env_overrides(
            {"thresholds": {"confidence": 0.2}}, {"INCUNA_THRESHOLDS__CONFIDENCE": "0.8"}
        )
        assert raw["thresholds"]["confidence"] == 0.8


class TestLoadConfig:
    def test_yaml_file(self, tmp_path):
        path = tmp_path / "cfg.yaml"
        path.write_text("thresholds:\n  confidence: 0.6\n", encoding="utf-8")
        assert load_config(path, environ={}).confidence_threshold == 0.6

    def test_json_file(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text('{"workers": 2}', encoding="utf-8")
        assert load_config(path, environ={})["workers"] == 2

    def test_none_gives_defaults(self):
        assert load_config(None, environ={}).confidence_threshold == 0.25

    def test_env_applies_on_top_of_file(self, tmp_path):
        path = tmp_path / "cfg.yaml"
        path.write_text("workers: 2\n", encoding="utf-8")
        cfg = load_config(path, environ={"INCUNA_WORKERS": "6"})
        assert cfg["workers"] == 6

    def test_non_mapping_file_rejected(self, tmp_path):
        path = tmp_path / "cfg.yaml"
        path.write_text("- just\n- a list\n", encoding="utf-8")
        with pytest.raises(ValidationError, match="mapping"):
            load_config(path, environ={})
