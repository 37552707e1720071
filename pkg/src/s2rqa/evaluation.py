"""Scoring quality reports against ground truth."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from . import lexicon
from .execution_model import edge_identity_key
from .mapping_engine import AS, CS, MS, VM
from .quality_report import AnnotatedStep, QualityReport

CATEGORIES = (CS, AS, MS, VM)
TRUTH_FORMAT = "s2rqa-ground-truth"
TRUTH_VERSION = 1


class TruthFormatError(ValueError):
    pass


@dataclass
class Metric:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def undefined(self) -> bool:
        return self.tp + self.fp + self.fn == 0

    @property
    def precision(self) -> float:
        d = self.tp + self.fp
        return self.tp / d if d else 1.0

    @property
    def recall(self) -> float:
        d = self.tp + self.fn
        return self.tp / d if d else 1.0

    @property
    def f1(self) -> float:
        # 2PR/(P+R) written over counts, which stays defined when P = R = 0
        d = 2 * self.tp + self.fp + self.fn
        return 2 * self.tp / d if d else 1.0

    def __add__(self, other: "Metric") -> "Metric":
        return Metric(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)

    def as_dict(self) -> dict:
        return {
            "tp": self.tp, "fp": self.fp, "fn": self.fn,
            "precision": self.precision, "recall": self.recall, "f1": self.f1,
            "undefined": self.undefined,
        }


def metrics_from_counts(predicted: int, correct: int, truth: int) -> Metric:
    """Metric for ``correct`` matches among ``predicted`` items vs ``truth`` items."""
    if not 0 <= correct <= min(predicted, truth):
        raise ValueError("correct must lie between 0 and min(predicted, truth)")
    return Metric(correct, predicted - correct, truth - correct)


@dataclass
class EvalMetrics:
    categories: dict[str, Metric] = field(default_factory=lambda: {c: Metric() for c in CATEGORIES})

    @property
    def overall(self) -> Metric:
        total = Metric()
        for m in self.categories.values():
            total = total + m
        return total

    def as_dict(self) -> dict:
        out = {c: m.as_dict() for c, m in self.categories.items()}
        out["overall"] = self.overall.as_dict()
        return out


# --- ground truth -----------------------------------------------------------

@dataclass
class TruthStep:
    text: str
    label: str
    has_missing_before: bool = False
    missing_edges: list[dict] = field(default_factory=list)


@dataclass
class GroundTruth:
    report_id: str
    app_id: str
    steps: list[TruthStep]

    def missing_edges(self) -> list[dict]:
        return [e for s in self.steps for e in s.missing_edges]


def truth_from_report(qr: QualityReport) -> GroundTruth:
    """Ground truth that agrees exactly with a predicted report."""
    steps: list[TruthStep] = []
    pending: list[dict] = []
    for s in qr.steps:
        if s.kind == "missing":
            pending.extend(s.edges)
        else:
            steps.append(TruthStep(s.text, s.label, s.has_missing_before, pending))
            pending = []
    return GroundTruth(qr.report_id, qr.app_id, steps)


def truth_to_dict(gt: GroundTruth) -> dict:
    return {
        "format": TRUTH_FORMAT,
        "version": TRUTH_VERSION,
        "report_id": gt.report_id,
        "app_id": gt.app_id,
        "steps": [
            {"text": s.text, "label": s.label, "has_missing_before": s.has_missing_before,
             "missing_edges": s.missing_edges}
            for s in gt.steps
        ],
    }


def truth_from_dict(doc: dict, source: str = "<truth>") -> GroundTruth:
    if not isinstance(doc, dict) or doc.get("format") != TRUTH_FORMAT:
        raise TruthFormatError(f"{source}: not a ground-truth file")
    if doc.get("version") != TRUTH_VERSION:
        raise TruthFormatError(f"{source}: unsupported ground-truth version: {doc.get('version')!r}")
    try:
        steps = []
        for i, s in enumerate(doc["steps"]):
            if s["label"] not in (CS, AS, VM):
                raise TruthFormatError(f"{source}: step {i}: label must be CS, AS or VM, got {s['label']!r}")
            missing = list(s.get("missing_edges", []))
            for e in missing:
                edge_identity_key(e)
            steps.append(TruthStep(s["text"], s["label"], bool(s.get("has_missing_before", bool(missing))), missing))
        return GroundTruth(doc["report_id"], doc["app_id"], steps)
    except (KeyError, TypeError) as exc:
        raise TruthFormatError(f"{source}: malformed ground truth: {exc}") from None


def load_ground_truth(path: str | Path) -> GroundTruth:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise TruthFormatError(f"{path}: cannot read ground truth: {exc}") from None
    return truth_from_dict(doc, str(path))


def save_ground_truth(gt: GroundTruth, path: str | Path) -> None:
    Path(path).write_text(json.dumps(truth_to_dict(gt), indent=1, ensure_ascii=False) + "\n", encoding="utf-8")


# --- alignment and scoring --------------------------------------------------

@dataclass(frozen=True)
class Pair:
    predicted: AnnotatedStep | None
    truth: TruthStep | None


def normalize_text(text: str) -> str:
    return " ".join(lexicon.tokenize(text))


def align_steps(predicted: QualityReport, truth: GroundTruth) -> list[Pair]:
    """Pair reported steps with truth steps: equal normalized text first, then order."""
    if predicted.report_id != truth.report_id:
        raise ValueError(f"report id mismatch: {predicted.report_id} vs {truth.report_id}")
    preds = predicted.reported()
    used_p: set[int] = set()
    match: dict[int, int] = {}
    for ti, t in enumerate(truth.steps):
        key = normalize_text(t.text)
        for pi, p in enumerate(preds):
            if pi not in used_p and normalize_text(p.text) == key:
                used_p.add(pi)
                match[ti] = pi
                break
    rest_t = [ti for ti in range(len(truth.steps)) if ti not in match]
    rest_p = [pi for pi in range(len(preds)) if pi not in used_p]
    for ti, pi in zip(rest_t, rest_p):
        match[ti] = pi
        used_p.add(pi)
    pairs = [Pair(preds[match[ti]] if ti in match else None, t) for ti, t in enumerate(truth.steps)]
    pairs += [Pair(p, None) for pi, p in enumerate(preds) if pi not in used_p]
    return pairs


def score_annotations(pairings: Iterable[Pair]) -> EvalMetrics:
    m = EvalMetrics()
    cat = m.categories
    for pair in pairings:
        p, t = pair.predicted, pair.truth
        if p is not None and t is not None:
            if p.label == t.label:
                cat[p.label].tp += 1
            else:
                cat[p.label].fp += 1
                cat[t.label].fn += 1
        elif p is not None:
            cat[p.label].fp += 1
        elif t is not None:
            cat[t.label].fn += 1
        p_ms = p is not None and p.has_missing_before
        t_ms = t is not None and t.has_missing_before
        if p_ms and t_ms:
            cat[MS].tp += 1
        elif p_ms:
            cat[MS].fp += 1
        elif t_ms:
            cat[MS].fn += 1
    return m


def predicted_missing_edges(qr: QualityReport) -> list[dict]:
    return [e for s in qr.missing() for e in s.edges]


@dataclass
class MissingStepOverlap:
    """Interaction-level comparison of two systems' missing steps."""

    both_correct: list = field(default_factory=list)
    only_a_correct: list = field(default_factory=list)
    only_b_correct: list = field(default_factory=list)
    both_missed: list = field(default_factory=list)
    unnecessary_a: list = field(default_factory=list)
    unnecessary_b: list = field(default_factory=list)
    unnecessary_both: list = field(default_factory=list)

    def counts(self) -> dict[str, int]:
        return {k: len(v) for k, v in self.__dict__.items()}


def _counter(edges: Iterable[dict]) -> Counter:
    return Counter(edge_identity_key(e) for e in edges)


def score_missing_steps(predicted: dict[str, list[dict]], truth: dict[str, list[dict]],
                        compare: dict[str, list[dict]] | None = None
                        ) -> tuple[Metric, MissingStepOverlap | None]:
    """Multiset match of missing-step edge identities, report by report.

    With ``compare`` (a second system's missing edges) also returns the
    overlap between the two systems.
    """
    metric = Metric()
    overlap = MissingStepOverlap() if compare is not None else None
    for rid in sorted(set(predicted) | set(truth) | set(compare or {})):
        t = _counter(truth.get(rid, []))
        a = _counter(predicted.get(rid, []))
        hit = a & t
        metric = metric + Metric(sum(hit.values()), sum((a - hit).values()), sum((t - hit).values()))
        if overlap is None:
            continue
        b = _counter(compare.get(rid, []))
        for key in sorted(set(t) | set(a) | set(b)):
            n, na, nb = t[key], min(a[key], t[key]), min(b[key], t[key])
            both = min(na, nb)
            item = (rid, key)
            overlap.both_correct += [item] * both
            overlap.only_a_correct += [item] * (na - both)
            overlap.only_b_correct += [item] * (nb - both)
            overlap.both_missed += [item] * (n - max(na, nb))
            extra_a, extra_b = a[key] - na, b[key] - nb
            shared = min(extra_a, extra_b)
            overlap.unnecessary_both += [item] * shared
            overlap.unnecessary_a += [item] * (extra_a - shared)
            overlap.unnecessary_b += [item] * (extra_b - shared)
    return metric, overlap


@dataclass
class CorpusResult:
    annotations: EvalMetrics
    missing_steps: Metric
    overlap: MissingStepOverlap | None = None


def evaluate_corpus(predicted: Sequence[QualityReport], truth: Sequence[GroundTruth],
                    compare: Sequence[QualityReport] | None = None) -> CorpusResult:
    """Score a corpus; reports are matched by id (errors list unmatched ids)."""
    pred = _by_id(predicted, "predicted")
    gt = _by_id(truth, "truth")
    unmatched = sorted(set(pred) ^ set(gt))
    if unmatched:
        raise ValueError(f"unmatched report ids: {', '.join(unmatched)}")
    pairs: list[Pair] = []
    for rid in sorted(gt):
        pairs += align_steps(pred[rid], gt[rid])
    cmp = None
    if compare is not None:
        other = _by_id(compare, "comparison")
        extra = sorted(set(other) ^ set(gt))
        if extra:
            raise ValueError(f"unmatched report ids in comparison set: {', '.join(extra)}")
        cmp = {rid: predicted_missing_edges(q) for rid, q in other.items()}
    metric, overlap = score_missing_steps(
        {rid: predicted_missing_edges(q) for rid, q in pred.items()},
        {rid: g.missing_edges() for rid, g in gt.items()},
        cmp,
    )
    return CorpusResult(score_annotations(pairs), metric, overlap)


def _by_id(items, what: str) -> dict:
    out = {}
    for item in items:
        if item.report_id in out:
            raise ValueError(f"duplicate {what} report id: {item.report_id}")
        out[item.report_id] = item
    return out


# --- agreement --------------------------------------------------------------

@dataclass(frozen=True)
class Kappa:
    value: float
    undefined: bool
    observed: float
    expected: float

    def __float__(self) -> float:
        return self.value


def cohen_kappa(labels_a: Sequence, labels_b: Sequence) -> Kappa:
    """Cohen's kappa for two parallel label lists.

    When chance agreement is 1 (both raters used one and the same label)
    kappa is 0/0; the result is then flagged undefined with value 1.0 if
    the raters agree completely.
    """
    if len(labels_a) != len(labels_b):
        raise ValueError(f"label lists differ in length: {len(labels_a)} vs {len(labels_b)}")
    n = len(labels_a)
    if n == 0:
        return Kappa(1.0, True, 1.0, 1.0)
    po = sum(x == y for x, y in zip(labels_a, labels_b)) / n
    ca, cb = Counter(labels_a), Counter(labels_b)
    pe = sum(ca[k] * cb[k] for k in ca) / (n * n)
    if pe == 1.0:
        return Kappa(1.0, True, po, pe)
    return Kappa((po - pe) / (1 - pe), False, po, pe)


# --- output -----------------------------------------------------------------

def format_table(result: CorpusResult, title: str = "") -> str:
    rows = [("Category", "TP", "FP", "FN", "Precision", "Recall", "F1")]
    for name, m in list(result.annotations.categories.items()) + [("Overall", result.annotations.overall)]:
        rows.append(_row(name, m))
    rows.append(_row("Missing steps", result.missing_steps))
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    lines = [title] if title else []
    for r in rows:
        lines.append("  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths))))
    return "\n".join(lines) + "\n"


def _row(name: str, m: Metric) -> tuple:
    flag = "*" if m.undefined else ""
    return (name, str(m.tp), str(m.fp), str(m.fn),
            f"{m.precision:.3f}{flag}", f"{m.recall:.3f}{flag}", f"{m.f1:.3f}{flag}")


def metrics_rows(result: CorpusResult, system: str) -> list[dict]:
    out = []
    for name, m in list(result.annotations.categories.items()) + [
        ("overall", result.annotations.overall), ("missing_steps", result.missing_steps)
    ]:
        out.append({"system": system, "category": name, **m.as_dict()})
    return out
