"""Scoring predictions against gold relations and building ablation tables."""

from __future__ import annotations

import json
import random
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .corpus import LabelInventory, RelationInstance
from .errors import CorpusSetMismatch, LengthMismatch

MACRO = "Macro Average"
MICRO = "Micro Average"


@dataclass(frozen=True)
class PredictionFile:
    rows: tuple[tuple[int | None, str], ...]

    @property
    def labels(self) -> list[str]:
        return [label for _, label in self.rows]

    @property
    def has_ids(self) -> bool:
        return bool(self.rows) and all(i is not None for i, _ in self.rows)


def read_predictions(path) -> PredictionFile:
    """One prediction per line: either ``label`` or ``id<TAB>label``."""
    rows = []
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if lines and lines[0].strip().lower() in ("id\tlabel", "instance_id\tlabel", "id\tpred", "instance_id\tpred"):
        lines = lines[1:]
    for line in lines:
        if not line.strip():
            continue
        if "\t" in line:
            iid, label = line.split("\t", 1)
            rows.append((int(iid), label))
        else:
            rows.append((None, line))
    return PredictionFile(tuple(rows))


def repair_labels(raw: Sequence[str], inv: LabelInventory, seed: int) -> tuple[list[str], int]:
    """Canonicalize predicted labels; replace anything outside the inventory by a seeded random label."""
    rng = random.Random(seed)
    out, repairs = [], 0
    for value in raw:
        label = inv.canonical(value)
        if label is None:
            label = rng.choice(inv.labels)
            repairs += 1
        out.append(label)
    return out, repairs


@dataclass(frozen=True)
class CorpusScore:
    correct: int | None
    total: int | None
    accuracy: float
    confusion: Mapping[tuple[str, str], int] = field(default_factory=dict)

    @property
    def display(self) -> str:
        return f"{self.accuracy:.2f}"


def score_corpus(gold: Sequence[RelationInstance], pred: PredictionFile | Sequence[str]) -> CorpusScore:
    if isinstance(pred, PredictionFile):
        if len(gold) != len(pred.rows):
            raise LengthMismatch(len(gold), len(pred.rows))
        if pred.has_ids:
            by_id = dict(pred.rows)
            gold_ids = [g.instance_id for g in gold]
            if len(by_id) != len(pred.rows) or set(by_id) != set(gold_ids):
                raise ValueError("prediction ids do not match gold instance ids")
            labels = [by_id[i] for i in gold_ids]
        else:
            labels = pred.labels
    else:
        labels = list(pred)
    if len(gold) != len(labels):
        raise LengthMismatch(len(gold), len(labels))
    confusion = Counter((g.label, p) for g, p in zip(gold, labels))
    correct = sum(n for (g, p), n in confusion.items() if g == p)
    total = len(gold)
    accuracy = 100.0 * correct / total if total else 0.0
    return CorpusScore(correct, total, accuracy, dict(sorted(confusion.items())))


def aggregate(per_corpus: Sequence) -> tuple[float, float | None]:
    """Macro (unweighted mean of accuracies) and micro (pooled) accuracy.

    Accepts ``CorpusScore`` objects or ``(correct, total, accuracy)`` triples.
    Micro is None when instance counts are unknown.
    """
    triples = [(s.correct, s.total, s.accuracy) if isinstance(s, CorpusScore) else tuple(s) for s in per_corpus]
    if not triples:
        raise ValueError("need at least one corpus")
    macro = sum(acc for _, _, acc in triples) / len(triples)
    if any(c is None or t is None for c, t, _ in triples):
        return macro, None
    total = sum(t for _, t, _ in triples)
    micro = 100.0 * sum(c for c, _, _ in triples) / total if total else None
    return macro, micro


@dataclass(frozen=True)
class EvalReport:
    per_corpus: Mapping[str, CorpusScore]
    macro_avg: float
    micro_avg: float | None
    confusion: Mapping[tuple[str, str], int] = field(default_factory=dict)
    repair_seed: int | None = None
    repairs: int = 0

    @classmethod
    def from_scores(cls, scores: Mapping[str, CorpusScore], repair_seed=None, repairs=0) -> "EvalReport":
        macro, micro = aggregate(list(scores.values()))
        pooled = Counter()
        for s in scores.values():
            pooled.update(s.confusion)
        return cls(dict(scores), macro, micro, dict(sorted(pooled.items())), repair_seed, repairs)

    @classmethod
    def from_accuracies(cls, accuracies: Mapping[str, float], micro: float | None = None) -> "EvalReport":
        """Report from published per-corpus accuracies only (no instance counts)."""
        scores = {k: CorpusScore(None, None, float(v)) for k, v in accuracies.items()}
        macro, _ = aggregate(list(scores.values()))
        return cls(scores, macro, micro)

    def to_json(self) -> str:
        payload = {
            "per_corpus": {
                k: {
                    "correct": s.correct,
                    "total": s.total,
                    "accuracy": s.accuracy,
                    "confusion": [[g, p, n] for (g, p), n in s.confusion.items()],
                }
                for k, s in self.per_corpus.items()
            },
            "macro_avg": self.macro_avg,
            "micro_avg": self.micro_avg,
            "confusion": [[g, p, n] for (g, p), n in self.confusion.items()],
            "repair_seed": self.repair_seed,
            "repairs": self.repairs,
        }
        return json.dumps(payload, indent=2, ensure_ascii=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        d = json.loads(text)
        scores = {
            k: CorpusScore(v["correct"], v["total"], v["accuracy"], {(g, p): n for g, p, n in v.get("confusion", [])})
            for k, v in d["per_corpus"].items()
        }
        confusion = {(g, p): n for g, p, n in d.get("confusion", [])}
        return cls(scores, d["macro_avg"], d.get("micro_avg"), confusion, d.get("repair_seed"), d.get("repairs", 0))

    @classmethod
    def merge(cls, reports: Sequence["EvalReport"]) -> "EvalReport":
        scores = {}
        for r in reports:
            overlap = set(scores) & set(r.per_corpus)
            if overlap:
                raise CorpusSetMismatch(f"corpus scored twice: {sorted(overlap)}")
            scores.update(r.per_corpus)
        return cls.from_scores(scores)


@dataclass(frozen=True)
class AblationRow:
    corpus: str
    baseline_acc: float
    ablated_acc: float

    @property
    def gain(self) -> float:
        return self.baseline_acc - self.ablated_acc


def ablation_report(baseline: EvalReport, ablated: EvalReport) -> tuple[list[AblationRow], list[AblationRow]]:
    """Per-corpus gains plus macro/micro rows taken from the aggregated accuracies."""
    if set(baseline.per_corpus) != set(ablated.per_corpus):
        diff = sorted(set(baseline.per_corpus) ^ set(ablated.per_corpus))
        raise CorpusSetMismatch(f"reports cover different corpora: {diff}")
    rows = [
        AblationRow(c, baseline.per_corpus[c].accuracy, ablated.per_corpus[c].accuracy)
        for c in sorted(baseline.per_corpus)
    ]
    aggregates = [AblationRow(MACRO, baseline.macro_avg, ablated.macro_avg)]
    if baseline.micro_avg is not None and ablated.micro_avg is not None:
        aggregates.append(AblationRow(MICRO, baseline.micro_avg, ablated.micro_avg))
    return rows, aggregates


def ablation_table(baseline: EvalReport, ablations: Mapping[str, EvalReport]) -> str:
    """TSV with one abs/gain column pair per ablation, aggregates at the bottom."""
    by_name = {}
    for name, rep in ablations.items():
        rows, aggs = ablation_report(baseline, rep)
        by_name[name] = {r.corpus: r for r in rows + aggs}
    base = {c: s.accuracy for c, s in baseline.per_corpus.items()}
    base[MACRO] = baseline.macro_avg
    if baseline.micro_avg is not None:
        base[MICRO] = baseline.micro_avg
    header = ["corpus", "baseline"]
    for name in ablations:
        header += [f"{name}_abs", f"{name}_gain"]
    lines = ["\t".join(header)]
    for key in sorted(baseline.per_corpus) + [k for k in (MACRO, MICRO) if k in base]:
        cells = [key, f"{base[key]:.2f}"]
        for name in ablations:
            r = by_name[name].get(key)
            cells += [f"{r.ablated_acc:.2f}", f"{r.gain:.2f}"] if r else ["_", "_"]
        lines.append("\t".join(cells))
    return "\n".join(lines) + "\n"


def confusion_to_matrix(confusion: Mapping[tuple[str, str], int], inv: LabelInventory):
    """Counts (rows gold, columns predicted, inventory order) and the row-normalized variant."""
    pos = {label: i for i, label in enumerate(inv.labels)}
    n = len(pos)
    counts = np.zeros((n, n), dtype=np.int64)
    for (g, p), c in confusion.items():
        if g not in pos or p not in pos:
            raise ValueError(f"confusion entry ({g!r}, {p!r}) outside the label inventory")
        counts[pos[g], pos[p]] += c
    sums = counts.sum(axis=1, keepdims=True)
    normalized = np.divide(counts, sums, out=np.zeros((n, n), dtype=np.float64), where=sums > 0)
    return counts, normalized


def matrix_tsv(matrix, inv: LabelInventory, fmt: str = "{}") -> str:
    lines = ["gold\\pred\t" + "\t".join(inv.labels)]
    for label, row in zip(inv.labels, matrix):
        lines.append(label + "\t" + "\t".join(fmt.format(v) for v in row))
    return "\n".join(lines) + "\n"
