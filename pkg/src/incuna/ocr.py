"""OCR over Text/Title crops, plus character/word error rates for comparing
engines against reference transcriptions.

Engines are adapters: the bundled stub answers deterministically for
hermetic runs, and CommandOcrEngine shells out to any installed OCR binary
so the package has no hard dependency on an engine runtime.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import subprocess
import time
import unicodedata
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

from .annotations import LayoutClass
from .crops import Crop
from .errors import ContractError, OcrError

logger = logging.getLogger(__name__)

OCR_CLASSES = {LayoutClass.Text, LayoutClass.Title}


class OcrEngineAdapter(Protocol):
    engine_name: str

    def recognize(self, image_path: Path) -> str: ...


class StubOcrEngine:
    """Deterministic engine: fixed text, or a digest of the crop bytes."""

    def __init__(self, engine_name: str = "stub", fixed_text: str | None = None):
        self.engine_name = engine_name
        self.fixed_text = fixed_text

    def recognize(self, image_path: Path) -> str:
        if self.fixed_text is not None:
            return self.fixed_text
        digest = hashlib.sha256(Path(image_path).read_bytes()).hexdigest()
        return f"stub-{digest[:12]}"


class CommandOcrEngine:
    """Run an external OCR command; '{image}' in the argv template is replaced
    with the crop path and the transcription is read from stdout."""

    def __init__(self, engine_name: str, command: Sequence[str], timeout_s: float = 120.0):
        if not any("{image}" in part for part in command):
            raise ValueError("command template must contain an '{image}' placeholder")
        self.engine_name = engine_name
        self.command = list(command)
        self.timeout_s = timeout_s

    def recognize(self, image_path: Path) -> str:
        argv = [part.replace("{image}", str(image_path)) for part in self.command]
        proc = subprocess.run(
            argv, capture_output=True, timeout=self.timeout_s, check=False
        )
        if proc.returncode != 0:
            raise RuntimeError(
                f"exit code {proc.returncode}: {proc.stderr.decode('utf-8', 'replace').strip()}"
            )
        return proc.stdout.decode("utf-8", "replace")


@dataclass(frozen=True)
class OcrResult:
    crop_ref: str
    engine_name: str
    text: str
    duration_ms: float

    def __post_init__(self):
        if self.duration_ms < 0:
            raise ValueError("duration_ms must be >= 0")


def run_ocr(crop: Crop, engine: OcrEngineAdapter) -> OcrResult:
    """Transcribe one Text/Title crop.

    Engine failures surface as OcrError carrying the engine and crop
    identity; no text is ever fabricated for a failed call.
    """
    if crop.klass not in OCR_CLASSES:
        raise ContractError(
            f"OCR accepts Text/Title crops only, got {crop.klass.name} ({crop.ref})"
        )
    started = time.perf_counter()
    try:
        text = engine.recognize(Path(crop.path))
    except Exception as exc:
        raise OcrError(engine.engine_name, crop.ref, str(exc)) from exc
    duration_ms = (time.perf_counter() - started) * 1000.0
    return OcrResult(
        crop_ref=crop.ref, engine_name=engine.engine_name, text=text, duration_ms=duration_ms
    )


def levenshtein(a: Sequence, b: Sequence) -> int:
    """Unit-cost edit distance between two sequences (two-row DP)."""
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    previous = list(range(len(b) + 1))
    for i, item_a in enumerate(a, start=1):
        current = [i] + [0] * len(b)
        for j, item_b in enumerate(b, start=1):
            current[j] = min(
                previous[j] + 1,
                current[j - 1] + 1,
                previous[j - 1] + (item_a != item_b),
            )
        previous = current
    return previous[len(b)]


def _nfc(s: str) -> str:
    return unicodedata.normalize("NFC", s)


def cer(reference: str, hypothesis: str) -> float:
    """Character error rate: edit distance over NFC-normalized characters,
    divided by the reference length.

    An empty reference is degenerate: the rate is 0 for an empty hypothesis
    and the raw hypothesis length otherwise (denominator treated as 1),
    logged as a warning.
    """
    ref = _nfc(reference)
    hyp = _nfc(hypothesis)
    if not ref:
        if not hyp:
            return 0.0
        logger.warning("CER against an empty reference is degenerate (hypothesis %r)", hypothesis)
        return float(len(hyp))
    return levenshtein(ref, hyp) / len(ref)


def wer(reference: str, hypothesis: str) -> float:
    """Word error rate over Unicode-whitespace tokens; punctuation is kept
    (stripping it is lossy on historical text). Same degenerate rule as cer."""
    ref_tokens = _nfc(reference).split()
    hyp_tokens = _nfc(hypothesis).split()
    if not ref_tokens:
        if not hyp_tokens:
            return 0.0
        logger.warning("WER against an empty reference is degenerate")
        return float(len(hyp_tokens))
    return levenshtein(ref_tokens, hyp_tokens) / len(ref_tokens)


@dataclass
class TranscriptionComparison:
    crop_ref: str
    per_engine: dict[str, dict[str, float]]  # engine -> {"cer": x, "wer": y}


@dataclass
class EngineComparisonSummary:
    mean_cer: dict[str, float]
    mean_wer: dict[str, float]
    ranking: list[str]  # engines by mean CER ascending, names break ties
    crops_compared: int
    crops_skipped: int

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["engine", "mean_cer", "mean_wer", "rank"])
        for rank, engine in enumerate(self.ranking, start=1):
            writer.writerow(
                [engine, f"{self.mean_cer[engine]:.6f}", f"{self.mean_wer[engine]:.6f}", rank]
            )
        return out.getvalue()


def compare_engines(
    crops_with_refs: Sequence[tuple[Crop, str | None]],
    engines: Sequence[OcrEngineAdapter],
) -> tuple[list[TranscriptionComparison], EngineComparisonSummary]:
    """Run every engine over every referenced crop and rank them by mean CER.

    Crops without a reference transcription are skipped and counted. Ties in
    mean CER are broken by engine name so the ranking is total.
    """
    if not engines:
        raise ValueError("need at least one engine to compare")
    names = [e.engine_name for e in engines]
    if len(set(names)) != len(names):
        raise ValueError(f"engine names must be unique, got {names}")

    comparisons: list[TranscriptionComparison] = []
    sums_cer = {name: 0.0 for name in names}
    sums_wer = {name: 0.0 for name in names}
    skipped = 0
    for crop, reference in crops_with_refs:
        if reference is None:
            skipped += 1
            logger.warning("crop %s has no reference transcription, skipped", crop.ref)
            continue
        per_engine: dict[str, dict[str, float]] = {}
        for engine in engines:
            result = run_ocr(crop, engine)
            c = cer(reference, result.text)
            w = wer(reference, result.text)
            per_engine[engine.engine_name] = {"cer": c, "wer": w}
            sums_cer[engine.engine_name] += c
            sums_wer[engine.engine_name] += w
        comparisons.append(TranscriptionComparison(crop_ref=crop.ref, per_engine=per_engine))

    n = len(comparisons)
    mean_cer = {name: (sums_cer[name] / n if n else 0.0) for name in names}
    mean_wer = {name: (sums_wer[name] / n if n else 0.0) for name in names}
    ranking = sorted(names, key=lambda name: (mean_cer[name], name))
    summary = EngineComparisonSummary(
        mean_cer=mean_cer,
        mean_wer=mean_wer,
        ranking=ranking,
        crops_compared=n,
        crops_skipped=skipped,
    )
    return comparisons, summary


def save_transcriptions(results: Sequence[OcrResult], out_path: Path | str) -> None:
    """Consolidated JSON of OCR results (text files are written beside crops
    by the pipeline)."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    payload = [
        {
            "crop": r.crop_ref,
            "engine": r.engine_name,
            "text": r.text,
            "duration_ms": round(r.duration_ms, 3),
        }
        for r in results
    ]
    out_path.write_text(json.dumps(payload, indent=2, ensure_ascii=False), encoding="utf-8")


def create_ocr_engine(cfg: dict | None) -> OcrEngineAdapter:
    """Build an engine from its config block: builtin 'stub', or 'command'
    with an argv template for any external binary."""
    cfg = dict(cfg or {})
    name = cfg.pop("name", "stub")
    if name == "stub":
        return StubOcrEngine(**cfg)
    command = cfg.pop("command", None)
    if command:
        return CommandOcrEngine(engine_name=name, command=command, **cfg)
    raise ValueError(f"OCR engine {name!r} needs a 'command' argv template (or use 'stub')")
