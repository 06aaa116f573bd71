"""Declarative pipeline configuration: loading, env overrides, collect-all
validation and a deterministic content hash for provenance."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

from .errors import ValidationError

ENV_PREFIX = "INCUNA_"

_DEFAULTS: dict[str, Any] = {
    "corpus_root": "corpus",
    "output_root": "out",
    "sources": [],  # [{doc_id, path}]
    "ingest": {"max_pages": 100, "dpi": 300},
    "split": {"seed": 0, "ratios": [0.8, 0.1, 0.1], "stratify_by_document": False},
    "thresholds": {"confidence": 0.25, "iou": 0.5},
    "eval_report": None,  # path; when set, its best operating point wins
    "detector": {"name": "stub", "strategy": "CustomOnly"},
    "classifier": {"name": "stub"},
    "scorer": {"name": "stub"},
    "ocr_engines": [{"name": "stub"}],
    "prompts": None,  # list of strings; None = built-in default list
    "stages": {"ocr": True, "classify": True, "describe": True},
    "crop": {"pad_px": 0},
    "workers": 1,
}


def _merge(base: dict, override: Mapping) -> dict:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, Mapping) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def apply_env_overrides(raw: dict, environ: Mapping[str, str] | None = None) -> dict:
    """Overlay INCUNA_* variables onto the raw config.

    Nesting uses double underscores (INCUNA_THRESHOLDS__CONFIDENCE=0.9);
    values are parsed as YAML scalars so numbers and booleans come out typed.
    """
    environ = os.environ if environ is None else environ
    out = json.loads(json.dumps(raw))  # deep copy, JSON-shaped by construction
    for key, value in sorted(environ.items()):
        if not key.startswith(ENV_PREFIX):
            continue
        path = [part.lower() for part in key[len(ENV_PREFIX) :].split("__") if part]
        if not path:
            continue
        node = out
        for part in path[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                break
        else:
            node[path[-1]] = yaml.safe_load(value)
    return out


@dataclass(frozen=True)
class PipelineConfig:
    """Validated, fully-defaulted pipeline configuration."""

    raw: dict = field(repr=False)
    config_hash: str = ""

    def __getitem__(self, key: str) -> Any:
        return self.raw[key]

    @property
    def corpus_root(self) -> Path:
        return Path(self.raw["corpus_root"])

    @property
    def output_root(self) -> Path:
        return Path(self.raw["output_root"])

    @property
    def confidence_threshold(self) -> float:
        return float(self.raw["thresholds"]["confidence"])

    @property
    def iou_threshold(self) -> float:
        return float(self.raw["thresholds"]["iou"])

    @property
    def split_ratios(self) -> tuple[float, float, float]:
        return tuple(self.raw["split"]["ratios"])

    @property
    def stage_enabled(self) -> dict[str, bool]:
        return dict(self.raw["stages"])

    def to_dict(self) -> dict:
        return json.loads(json.dumps(self.raw))


def _hash_config(normalized: dict) -> str:
    canonical = json.dumps(normalized, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def validate_config(raw: dict | None) -> PipelineConfig:
    """Fill defaults and check every invariant, reporting all problems at once."""
    merged = _merge(_DEFAULTS, raw or {})
    problems: list[str] = []

    def check_threshold(name: str, value: Any) -> None:
        if not isinstance(value, (int, float)) or not (0.0 <= float(value) <= 1.0):
            problems.append(f"thresholds.{name} must be a number in [0, 1], got {value!r}")

    check_threshold("confidence", merged["thresholds"].get("confidence"))
    check_threshold("iou", merged["thresholds"].get("iou"))

    ratios = merged["split"].get("ratios", [])
    if (
        not isinstance(ratios, (list, tuple))
        or len(ratios) != 3
        or not all(isinstance(r, (int, float)) and r > 0 for r in ratios)
    ):
        problems.append(f"split.ratios must be three positive numbers, got {ratios!r}")
    elif abs(sum(ratios) - 1.0) > 1e-9:
        problems.append(f"split.ratios must sum to 1, got {ratios!r}")

    ingest = merged["ingest"]
    if not isinstance(ingest.get("max_pages"), int) or ingest["max_pages"] < 1:
        problems.append(f"ingest.max_pages must be a positive integer, got {ingest.get('max_pages')!r}")
    if not isinstance(ingest.get("dpi"), int) or ingest["dpi"] < 1:
        problems.append(f"ingest.dpi must be a positive integer, got {ingest.get('dpi')!r}")

    if not isinstance(merged["crop"].get("pad_px"), int) or merged["crop"]["pad_px"] < 0:
        problems.append(f"crop.pad_px must be a nonnegative integer, got {merged['crop'].get('pad_px')!r}")

    if not isinstance(merged.get("workers"), int) or merged["workers"] < 1:
        problems.append(f"workers must be a positive integer, got {merged.get('workers')!r}")

    seen_ids: set[str] = set()
    for i, source in enumerate(merged["sources"]):
        if not isinstance(source, dict) or "doc_id" not in source or "path" not in source:
            problems.append(f"sources[{i}] must carry doc_id and path")
            continue
        if source["doc_id"] in seen_ids:
            problems.append(f"sources[{i}] duplicates doc_id {source['doc_id']!r}")
        seen_ids.add(source["doc_id"])
        if not Path(source["path"]).is_file():
            problems.append(f"sources[{i}] path {source['path']!r} does not exist")

    if merged.get("eval_report") and not Path(merged["eval_report"]).is_file():
        problems.append(f"eval_report {merged['eval_report']!r} does not exist")

    weights = merged["detector"].get("weights_path")
    if weights and not Path(weights).is_file():
        problems.append(f"detector.weights_path {weights!r} does not exist")

    strategy = merged["detector"].get("strategy")
    if strategy not in (None, "CustomOnly", "PretrainThenFinetune"):
        problems.append(
            f"detector.strategy must be CustomOnly or PretrainThenFinetune, got {strategy!r}"
        )

    prompts = merged.get("prompts")
    if prompts is not None and (
        not isinstance(prompts, list) or not all(isinstance(p, str) and p for p in prompts)
    ):
        problems.append("prompts must be a list of nonempty strings")

    for key in ("ocr", "classify", "describe"):
        if not isinstance(merged["stages"].get(key), bool):
            problems.append(f"stages.{key} must be true or false")

    if problems:
        raise ValidationError(problems)
    return PipelineConfig(raw=merged, config_hash=_hash_config(merged))


def load_config(
    path: Path | str | None,
    environ: Mapping[str, str] | None = None,
) -> PipelineConfig:
    """Read a YAML/JSON config file (or start empty), apply env overrides,
    validate."""
    if path is None:
        raw: dict = {}
    else:
        text = Path(path).read_text(encoding="utf-8")
        raw = yaml.safe_load(text) or {}
        if not isinstance(raw, dict):
            raise ValidationError([f"config file {path} must hold a mapping at top level"])
    raw = apply_env_overrides(raw, environ)
    return validate_config(raw)
