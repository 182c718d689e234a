"""All-words F1 scoring with a per-POS breakdown, and training-cost accounting.

Every prediction must name a gold instance; with full coverage, micro F1
equals plain accuracy. Cost accounting treats encoder-forward counts as the
primary hardware-independent metric and also reports device-hours
(device_count x wall-hours) for each run.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

from .data import POS_TAGS, CorpusInstance, load_gold_keys, load_predictions
from .errors import ComparisonError, ScoringError
from .training import RunMetrics, StepRecord


@dataclass
class Counts:
    attempted: int
    correct: int
    total_gold: int


@dataclass
class EvalReport:
    micro_f1: float
    precision: float
    recall: float
    counts: Counts
    per_pos: dict[str, float] = field(default_factory=dict)
    per_pos_counts: dict[str, Counts] = field(default_factory=dict)


def _f1(precision: float, recall: float) -> float:
    if precision + recall == 0.0:
        return 0.0
    if precision == recall:
        # harmonic mean of equal values; bypassing the formula keeps
        # full-coverage micro F1 exactly equal to accuracy
        return precision
    return 2.0 * precision * recall / (precision + recall)


def _score(predictions: dict[str, str], gold: dict[str, str]) -> tuple[float, float, float, Counts]:
    attempted = len(predictions)
    correct = sum(1 for key, sense in predictions.items() if gold[key] == sense)
    total = len(gold)
    precision = correct / attempted if attempted else 0.0
    recall = correct / total if total else 0.0
    return precision, recall, _f1(precision, recall), Counts(attempted, correct, total)


def score_keys(
    predictions: dict[str, str],
    gold: dict[str, str],
    pos_by_id: dict[str, str] | None = None,
) -> EvalReport:
    """Micro precision/recall/F1 of predictions against gold keys.

    ``pos_by_id`` enables the per-POS breakdown; every scored id must then
    carry a POS tag.
    """
    unknown = sorted(set(predictions) - set(gold))
    if unknown:
        raise ScoringError(f"predictions for unknown instance ids: {unknown[:5]}")
    precision, recall, f1, counts = _score(predictions, gold)
    report = EvalReport(
        micro_f1=f1, precision=precision, recall=recall, counts=counts
    )
    if pos_by_id is not None:
        missing = sorted(set(gold) - set(pos_by_id))
        if missing:
            raise ScoringError(f"gold ids missing from the corpus: {missing[:5]}")
        for pos in POS_TAGS:
            gold_pos = {k: v for k, v in gold.items() if pos_by_id[k] == pos}
            if not gold_pos:
                continue
            pred_pos = {k: v for k, v in predictions.items() if k in gold_pos}
            _, _, pos_f1, pos_counts = _score(pred_pos, gold_pos)
            report.per_pos[pos] = pos_f1
            report.per_pos_counts[pos] = pos_counts
    return report


def score_f1(predictions_path, gold_path, corpus: list[CorpusInstance] | None = None) -> EvalReport:
    """File-level wrapper over ``score_keys``; the corpus supplies POS tags."""
    predictions = load_predictions(predictions_path)
    gold = load_gold_keys(gold_path)
    pos_by_id = {inst.id: inst.pos for inst in corpus} if corpus is not None else None
    return score_keys(predictions, gold, pos_by_id)


# ---------------------------------------------------------------------------
# Cost accounting
# ---------------------------------------------------------------------------


@dataclass
class CostReport:
    """Cost of one training run; device_hours mirrors N x duration."""

    mode: str
    gloss_forwards: int
    context_forwards: int
    wall_seconds: float
    device_count: int
    reduction_vs_baseline: float | None = None

    @property
    def device_hours(self) -> float:
        return self.device_count * self.wall_seconds / 3600.0


@dataclass
class CostComparison:
    run: CostReport
    baseline: CostReport
    gloss_forward_reduction: float
    wall_clock_reduction: float


def cost_report(metrics: RunMetrics) -> CostReport:
    return CostReport(
        mode=metrics.mode,
        gloss_forwards=metrics.gloss_forwards,
        context_forwards=metrics.context_forwards,
        wall_seconds=metrics.wall_seconds,
        device_count=metrics.device_count,
    )


def compare_costs(run: RunMetrics, baseline: RunMetrics) -> CostComparison:
    """Cost of ``run`` relative to ``baseline``: reduction = 1 - run/baseline.

    Both runs must come from the same model config, data, and epochs, which
    is what the fingerprint certifies.
    """
    if run.fingerprint != baseline.fingerprint:
        raise ComparisonError(
            f"runs are not comparable: fingerprints {run.fingerprint[:12]}... "
            f"and {baseline.fingerprint[:12]}... differ"
        )
    if baseline.gloss_forwards == 0 or baseline.wall_seconds == 0.0:
        raise ComparisonError("baseline run recorded no work")
    report = cost_report(run)
    base_report = cost_report(baseline)
    gloss_reduction = 1.0 - run.gloss_forwards / baseline.gloss_forwards
    wall_reduction = 1.0 - run.wall_seconds / baseline.wall_seconds
    report.reduction_vs_baseline = gloss_reduction
    return CostComparison(
        run=report,
        baseline=base_report,
        gloss_forward_reduction=gloss_reduction,
        wall_clock_reduction=wall_reduction,
    )


def config_fingerprint(*parts) -> str:
    """Stable hex digest over configs and data descriptors."""
    canonical = json.dumps(parts, sort_keys=True, default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# Metrics logs (line-delimited JSON)
# ---------------------------------------------------------------------------


def save_metrics(path, metrics: RunMetrics) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(
            json.dumps(
                {
                    "kind": "run",
                    "mode": metrics.mode,
                    "fingerprint": metrics.fingerprint,
                    "device_count": metrics.device_count,
                }
            )
            + "\n"
        )
        for r in metrics.records:
            fh.write(
                json.dumps(
                    {
                        "kind": "step",
                        "step": r.step,
                        "epoch": r.epoch,
                        "loss": r.loss,
                        "context_forwards": r.context_forwards,
                        "gloss_forwards": r.gloss_forwards,
                        "elapsed": r.elapsed,
                    }
                )
                + "\n"
            )
        fh.write(json.dumps({"kind": "summary", "wall_seconds": metrics.wall_seconds}) + "\n")


def load_metrics(path) -> RunMetrics:
    metrics: RunMetrics | None = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            record = json.loads(line)
            kind = record.get("kind")
            if kind == "run":
                metrics = RunMetrics(
                    mode=record["mode"],
                    fingerprint=record["fingerprint"],
                    device_count=record["device_count"],
                )
            elif kind == "step":
                if metrics is None:
                    raise ComparisonError(f"{path}:{lineno}: step record before run header")
                metrics.records.append(
                    StepRecord(
                        step=record["step"],
                        epoch=record["epoch"],
                        loss=record["loss"],
                        context_forwards=record["context_forwards"],
                        gloss_forwards=record["gloss_forwards"],
                        elapsed=record["elapsed"],
                    )
                )
            elif kind == "summary":
                if metrics is None:
                    raise ComparisonError(f"{path}:{lineno}: summary before run header")
                metrics.wall_seconds = record["wall_seconds"]
    if metrics is None:
        raise ComparisonError(f"{path}: no run header found")
    return metrics
