"""Quality reports: annotated steps, missing-step text and serialization."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .execution_model import InteractionEdge, seal, unseal
from .mapping_engine import AS, CS, MS, VM, TraversalResult
from .report_ingest import BugReport
from .s2r_pipeline import IndividualS2R

REPORT_FORMAT = "s2rqa-quality-report"
REPORT_VERSION = 1
LABELS = (CS, AS, VM, MS)


class ReportFileError(ValueError):
    pass


@dataclass
class AnnotatedStep:
    kind: str  # "reported" or "missing"
    label: str
    text: str
    edges: list[dict] = field(default_factory=list)  # edge identities
    position: int = 0
    has_missing_before: bool = False
    s2r_index: int | None = None
    edge_ids: list[int] = field(default_factory=list)
    path_edge: int | None = None

    def __post_init__(self) -> None:
        if (self.kind == "missing") != (self.label == MS):
            raise ValueError(f"{self.kind} step cannot carry label {self.label}")
        if self.kind not in ("reported", "missing") or self.label not in LABELS:
            raise ValueError(f"bad step kind/label: {self.kind}/{self.label}")


@dataclass
class QualityReport:
    report_id: str
    app_id: str
    steps: list[AnnotatedStep]
    diagnostics: list[str] = field(default_factory=list)
    summary: dict[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.summary:
            self.summary = summarize(self.steps)

    def reported(self) -> list[AnnotatedStep]:
        return [s for s in self.steps if s.kind == "reported"]

    def missing(self) -> list[AnnotatedStep]:
        return [s for s in self.steps if s.kind == "missing"]


def summarize(steps: list[AnnotatedStep]) -> dict[str, int]:
    counts = {label: 0 for label in LABELS}
    for s in steps:
        counts[s.label] += 1
    return counts


_TEMPLATES = {
    "tap": "Tap on '{}'",
    "long_tap": "Long-tap on '{}'",
    "type": "Enter text in '{}'",
    "swipe": "Swipe on '{}'",
}


def synthesize_missing_step_text(edge: InteractionEdge) -> str:
    if edge.action == "open_app":
        return "Open the app"
    return _TEMPLATES[edge.action].format(edge.component.label)


def assemble(traversal: TraversalResult, report: BugReport, s2rs: list[IndividualS2R],
             app_id: str) -> QualityReport:
    """Interleave synthesized missing steps with the reported ones."""
    if len(s2rs) != len(traversal.step_mappings):
        raise ValueError(
            f"report {report.id}: {len(s2rs)} S2Rs but {len(traversal.step_mappings)} step mappings"
        )
    steps: list[AnnotatedStep] = []
    for s2r, mapping in zip(s2rs, traversal.step_mappings):
        for edge in mapping.gap_edges_before:
            steps.append(AnnotatedStep(
                "missing", MS, synthesize_missing_step_text(edge), [edge.identity()], len(steps),
                edge_ids=[edge.edge_id], path_edge=edge.edge_id,
            ))
        steps.append(AnnotatedStep(
            "reported",
            mapping.label,
            s2r.text,
            [e.identity() for e in mapping.mapped_edges],
            len(steps),
            has_missing_before=bool(mapping.gap_edges_before),
            s2r_index=s2r.index,
            edge_ids=[e.edge_id for e in mapping.mapped_edges],
            path_edge=mapping.path_edge.edge_id if mapping.path_edge is not None else None,
        ))
    return QualityReport(report.id, app_id, steps, list(traversal.diagnostics))


# --- rendering --------------------------------------------------------------

def render_human(qr: QualityReport) -> str:
    counts = ", ".join(f"{k} {v}" for k, v in qr.summary.items())
    lines = [f"# Quality report for bug report {qr.report_id} (app {qr.app_id})", f"# {counts}"]
    for d in qr.diagnostics:
        lines.append(f"# note: {d}")
    for s in qr.steps:
        marker = "+" if s.kind == "missing" else " "
        lines.append(f"{s.position + 1:>3}. [{s.label}]{marker} {s.text}")
    return "\n".join(lines) + "\n"


def report_to_dict(qr: QualityReport) -> dict:
    return {
        "format": REPORT_FORMAT,
        "version": REPORT_VERSION,
        "report_id": qr.report_id,
        "app_id": qr.app_id,
        "steps": [
            {
                "position": s.position,
                "kind": s.kind,
                "label": s.label,
                "text": s.text,
                "s2r_index": s.s2r_index,
                "has_missing_before": s.has_missing_before,
                "edge_refs": s.edges,
                "edge_ids": s.edge_ids,
                "path_edge": s.path_edge,
            }
            for s in qr.steps
        ],
        "diagnostics": qr.diagnostics,
        "summary": qr.summary,
    }


def render_machine(qr: QualityReport) -> str:
    return json.dumps(seal(report_to_dict(qr)), indent=1, ensure_ascii=False, sort_keys=True) + "\n"


def render(qr: QualityReport, format: str = "human") -> str:
    if format == "human":
        return render_human(qr)
    if format == "machine":
        return render_machine(qr)
    raise ValueError(f"unknown render format: {format}")


def report_from_dict(doc: dict) -> QualityReport:
    if doc.get("format") != REPORT_FORMAT:
        raise ReportFileError(f"not a quality report (format={doc.get('format')!r})")
    if doc.get("version") != REPORT_VERSION:
        raise ReportFileError(f"unsupported quality report version: {doc.get('version')!r}")
    try:
        steps = [
            AnnotatedStep(
                s["kind"], s["label"], s["text"], list(s["edge_refs"]), s["position"],
                bool(s["has_missing_before"]), s["s2r_index"], list(s["edge_ids"]), s["path_edge"],
            )
            for s in doc["steps"]
        ]
        qr = QualityReport(doc["report_id"], doc["app_id"], steps, list(doc["diagnostics"]), dict(doc["summary"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ReportFileError(f"malformed quality report: {exc}") from None
    if [s.position for s in steps] != list(range(len(steps))):
        raise ReportFileError("malformed quality report: step positions must be 0..n-1")
    if qr.summary != summarize(steps):
        raise ReportFileError("malformed quality report: summary does not match the steps")
    return qr


def parse_machine(raw: bytes | str) -> QualityReport:
    if isinstance(raw, str):
        raw = raw.encode("utf-8")
    return report_from_dict(unseal(raw, "quality report", ReportFileError))


def load_machine(path: str | Path) -> QualityReport:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise ReportFileError(f"cannot read quality report {path}: {exc.strerror}") from None
    return parse_machine(raw)
