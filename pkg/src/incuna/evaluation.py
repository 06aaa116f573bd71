"""Detection evaluation: IoU, greedy matching, per-class F1 and the
F1-confidence curve with best-operating-point selection.

Counts are micro-aggregated per class over the whole corpus by default
(one curve per model); a macro mode averaging per-page F1 is available
behind a flag. Classes absent from the ground truth never enter the mean.
"""

from __future__ import annotations

import bisect
import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .annotations import BoundingBox, LayoutClass, PageAnnotation
from .detection import Detection, TrainingStrategy

DEFAULT_IOU_THRESHOLD = 0.5


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two normalized boxes; 0 when disjoint."""
    ix = min(a.x1, b.x1) - max(a.x0, b.x0)
    iy = min(a.y1, b.y1) - max(a.y0, b.y0)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


@dataclass
class MatchResult:
    """Per-class detection/ground-truth matching outcome for one page."""

    tp: dict[LayoutClass, int] = field(default_factory=dict)
    fp: dict[LayoutClass, int] = field(default_factory=dict)
    fn: dict[LayoutClass, int] = field(default_factory=dict)
    pairs: list[tuple[int, int]] = field(default_factory=list)  # (det idx, gt idx)

    def counts(self, klass: LayoutClass) -> tuple[int, int, int]:
        return self.tp.get(klass, 0), self.fp.get(klass, 0), self.fn.get(klass, 0)


def _greedy_outcomes(
    dets: Sequence[Detection],
    gts: PageAnnotation,
    iou_threshold: float,
) -> list[tuple[int, bool, int]]:
    """Greedy matching over all detections in descending-confidence order.

    Returns one (det_index, matched, gt_index) per detection. Ties in
    confidence keep input order; a detection takes the highest-IoU unmatched
    same-class ground truth at or above the threshold (lowest index on IoU
    ties). Each detection's outcome is independent of any lower-confidence
    detection, which is what makes the threshold sweep a prefix computation.
    """
    order = sorted(range(len(dets)), key=lambda i: -dets[i].confidence)
    gt_taken = [False] * len(gts.regions)
    outcomes: list[tuple[int, bool, int]] = []
    for i in order:
        det = dets[i]
        best_j = -1
        best_iou = 0.0
        for j, (gklass, gbox) in enumerate(gts.regions):
            if gt_taken[j] or gklass is not det.klass:
                continue
            overlap = iou(det.box, gbox)
            if overlap >= iou_threshold and overlap > best_iou:
                best_iou = overlap
                best_j = j
        if best_j >= 0:
            gt_taken[best_j] = True
            outcomes.append((i, True, best_j))
        else:
            outcomes.append((i, False, -1))
    return outcomes


def match_detections(
    dets: Sequence[Detection],
    gts: PageAnnotation,
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
) -> MatchResult:
    """Match detections against one page's ground truth.

    Every detection becomes exactly one of tp/fp; every unmatched ground
    truth is an fn, so tp + fn = |GT| and tp + fp = |detections| per class.
    """
    result = MatchResult()
    for klass, _ in gts.regions:
        result.fn[klass] = result.fn.get(klass, 0) + 1
    for i, matched, j in _greedy_outcomes(dets, gts, iou_threshold):
        klass = dets[i].klass
        if matched:
            result.tp[klass] = result.tp.get(klass, 0) + 1
            result.fn[klass] -= 1
            result.pairs.append((i, j))
        else:
            result.fp[klass] = result.fp.get(klass, 0) + 1
    result.fn = {klass: n for klass, n in result.fn.items() if n}  # canonical: no zero entries
    result.pairs.sort()
    return result


def f1(tp: int, fp: int, fn: int) -> float:
    """2tp / (2tp + fp + fn); 0 by convention when the denominator is 0."""
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


@dataclass(frozen=True)
class F1CurvePoint:
    threshold: float
    per_class_f1: dict[LayoutClass, float]
    mean_f1: float


@dataclass(frozen=True)
class SweepPoint:
    """Per-class integer counts at one confidence threshold."""

    threshold: float
    counts: dict[LayoutClass, tuple[int, int, int]]  # class -> (tp, fp, fn)


def _default_thresholds(dets_per_page: Sequence[Sequence[Detection]]) -> list[float]:
    values = {d.confidence for dets in dets_per_page for d in dets}
    values.update((0.0, 1.0))
    return sorted(values)


def sweep_counts(
    dets_per_page: Sequence[Sequence[Detection]],
    gts_per_page: Sequence[PageAnnotation],
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
    thresholds: Sequence[float] | None = None,
) -> list[SweepPoint]:
    """Corpus-wide per-class (tp, fp, fn) at each confidence threshold.

    Equivalent to filtering at each threshold and re-matching, but computed
    from a single greedy pass per page: a kept detection's match outcome never
    depends on the detections a higher threshold would remove.
    """
    if len(dets_per_page) != len(gts_per_page):
        raise ValueError("detections and ground truth must cover the same pages")
    gt_totals: dict[LayoutClass, int] = {}
    for gts in gts_per_page:
        for klass, _ in gts.regions:
            gt_totals[klass] = gt_totals.get(klass, 0) + 1
    if not gt_totals:
        raise ValueError("F1-confidence curve is undefined on an empty ground-truth corpus")

    if thresholds is None:
        thresholds = _default_thresholds(dets_per_page)
    else:
        thresholds = list(thresholds)
        if any(t1 > t2 for t1, t2 in zip(thresholds, thresholds[1:])):
            raise ValueError("thresholds must be sorted ascending")

    # per class: ascending confidences of all detections, and of matched ones
    det_confs: dict[LayoutClass, list[float]] = {}
    tp_confs: dict[LayoutClass, list[float]] = {}
    for dets, gts in zip(dets_per_page, gts_per_page):
        for i, matched, _ in _greedy_outcomes(dets, gts, iou_threshold):
            det = dets[i]
            det_confs.setdefault(det.klass, []).append(det.confidence)
            if matched:
                tp_confs.setdefault(det.klass, []).append(det.confidence)
    for values in det_confs.values():
        values.sort()
    for values in tp_confs.values():
        values.sort()

    classes = sorted(set(gt_totals) | set(det_confs), key=int)
    points = []
    for t in thresholds:
        counts: dict[LayoutClass, tuple[int, int, int]] = {}
        for klass in classes:
            confs = det_confs.get(klass, [])
            matched = tp_confs.get(klass, [])
            kept = len(confs) - bisect.bisect_left(confs, t)
            tp = len(matched) - bisect.bisect_left(matched, t)
            fp = kept - tp
            fn = gt_totals.get(klass, 0) - tp
            counts[klass] = (tp, fp, fn)
        points.append(SweepPoint(threshold=t, counts=counts))
    return points


def f1_confidence_curve(
    dets_per_page: Sequence[Sequence[Detection]],
    gts_per_page: Sequence[PageAnnotation],
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
    thresholds: Sequence[float] | None = None,
    average: str = "micro",
) -> list[F1CurvePoint]:
    """Mean F1 across ground-truth classes as a function of the confidence cut.

    With the default micro averaging, per-class counts are aggregated over the
    whole corpus before computing F1. With average="macro", per-class F1 is
    computed per page (over pages where the class has ground truth) and
    averaged. In both modes the mean runs over classes with at least one
    ground-truth instance, so an absent class cannot dilute it.
    """
    if average not in ("micro", "macro"):
        raise ValueError(f"unknown averaging mode {average!r}")

    if average == "micro":
        points = []
        for sweep in sweep_counts(dets_per_page, gts_per_page, iou_threshold, thresholds):
            per_class = {
                klass: f1(*sweep.counts[klass])
                for klass in sweep.counts
                if sweep.counts[klass][0] + sweep.counts[klass][2] > 0  # has GT
            }
            mean = sum(per_class.values()) / len(per_class)
            points.append(
                F1CurvePoint(threshold=sweep.threshold, per_class_f1=per_class, mean_f1=mean)
            )
        return points

    # macro: average each class's per-page F1 over the pages holding its GT
    gt_totals: dict[LayoutClass, int] = {}
    for gts in gts_per_page:
        for klass, _ in gts.regions:
            gt_totals[klass] = gt_totals.get(klass, 0) + 1
    if not gt_totals:
        raise ValueError("F1-confidence curve is undefined on an empty ground-truth corpus")
    if thresholds is None:
        thresholds = _default_thresholds(dets_per_page)
    elif any(t1 > t2 for t1, t2 in zip(thresholds, thresholds[1:])):
        raise ValueError("thresholds must be sorted ascending")

    classes = sorted(gt_totals, key=int)
    points = []
    for t in thresholds:
        page_f1s: dict[LayoutClass, list[float]] = {k: [] for k in classes}
        for dets, gts in zip(dets_per_page, gts_per_page):
            kept = [d for d in dets if d.confidence >= t]
            result = match_detections(kept, gts, iou_threshold)
            present = {klass for klass, _ in gts.regions}
            for klass in present:
                page_f1s[klass].append(f1(*result.counts(klass)))
        per_class = {k: sum(v) / len(v) for k, v in page_f1s.items() if v}
        mean = sum(per_class.values()) / len(per_class)
        points.append(F1CurvePoint(threshold=t, per_class_f1=per_class, mean_f1=mean))
    return points


def best_operating_point(curve: Sequence[F1CurvePoint]) -> tuple[float, float]:
    """The threshold with maximal mean F1; ties go to the highest threshold."""
    if not curve:
        raise ValueError("cannot pick an operating point from an empty curve")
    best = max(curve, key=lambda p: (p.mean_f1, p.threshold))
    return best.threshold, best.mean_f1


@dataclass
class EvalReport:
    """One model's F1-confidence evaluation, with its best operating point."""

    model_id: str
    strategy: TrainingStrategy
    curve: list[F1CurvePoint]
    best_threshold: float
    best_mean_f1: float
    per_class_at_best: dict[LayoutClass, float]

    @classmethod
    def from_curve(
        cls, model_id: str, strategy: TrainingStrategy, curve: Sequence[F1CurvePoint]
    ) -> "EvalReport":
        threshold, mean = best_operating_point(curve)
        at_best = next(p for p in curve if p.threshold == threshold)
        return cls(
            model_id=model_id,
            strategy=strategy,
            curve=list(curve),
            best_threshold=threshold,
            best_mean_f1=mean,
            per_class_at_best=dict(at_best.per_class_f1),
        )

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "strategy": self.strategy.name,
            "best": {"threshold": self.best_threshold, "mean_f1": self.best_mean_f1},
            "per_class_at_best": {k.name: v for k, v in self.per_class_at_best.items()},
            "curve": [
                {
                    "threshold": p.threshold,
                    "mean_f1": p.mean_f1,
                    "per_class_f1": {k.name: v for k, v in p.per_class_f1.items()},
                }
                for p in self.curve
            ],
        }

    def save(self, path: Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")

    @classmethod
    def load(cls, path: Path) -> "EvalReport":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        curve = [
            F1CurvePoint(
                threshold=p["threshold"],
                per_class_f1={LayoutClass.from_name(k): v for k, v in p["per_class_f1"].items()},
                mean_f1=p["mean_f1"],
            )
            for p in data["curve"]
        ]
        return cls(
            model_id=data["model_id"],
            strategy=TrainingStrategy[data["strategy"]],
            curve=curve,
            best_threshold=data["best"]["threshold"],
            best_mean_f1=data["best"]["mean_f1"],
            per_class_at_best={
                LayoutClass.from_name(k): v for k, v in data["per_class_at_best"].items()
            },
        )


def curve_to_csv(curve: Sequence[F1CurvePoint]) -> str:
    """CSV with one row per threshold and one F1 column per curve class."""
    classes = sorted({k for p in curve for k in p.per_class_f1}, key=int)
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["threshold", *(k.name for k in classes), "mean_f1"])
    for p in curve:
        writer.writerow(
            [
                f"{p.threshold:.6f}",
                *(f"{p.per_class_f1[k]:.6f}" if k in p.per_class_f1 else "" for k in classes),
                f"{p.mean_f1:.6f}",
            ]
        )
    return out.getvalue()


def render_report(reports: Sequence[EvalReport]) -> str:
    """Comparison table: one summary row per model, per-class F1 underneath.

    The parenthesized number after the model id tells which training approach
    was used (1 = pretrain on external data then fine-tune, 2 = custom only).
    Classes absent from the ground truth are omitted.
    """
    if not reports:
        raise ValueError("need at least one report to render")
    lines = []
    for report in reports:
        lines.append(
            f"{report.model_id}({report.strategy.approach_number}): "
            f"F1={report.best_mean_f1:.2f}@{report.best_threshold:.3f}"
        )
        for klass in sorted(report.per_class_at_best, key=int):
            lines.append(f"  {klass.name}: {report.per_class_at_best[klass]:.4f}")
    return "\n".join(lines) + "\n"
