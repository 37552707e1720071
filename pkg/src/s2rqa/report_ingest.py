"""Bug-report loading and rule-based sentence segmentation."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path


class ReportFormatError(ValueError):
    """Raised for unreadable or malformed bug-report files."""


@dataclass(frozen=True)
class Sentence:
    index: int
    text: str
    origin_span: tuple[int, int]


@dataclass
class BugReport:
    id: str
    title: str
    body: str
    sentences: list[Sentence] = field(default_factory=list)

    def title_sentence(self) -> Sentence | None:
        title = self.title.strip()
        if not title:
            return None
        start = self.title.index(title)
        return Sentence(-1, " ".join(title.split()), (start, start + len(title)))

    def all_sentences(self) -> list[Sentence]:
        """The title (index -1, when present) followed by the body sentences."""
        head = self.title_sentence()
        return ([head] if head else []) + list(self.sentences)


# "1." "2)" "-" "*" "•" "Step 3:" "#4" at the start of a line, followed by content
_MARKER_RE = re.compile(
    r"(?:\d{1,3}[.)]|[-*•+]|step\s*\d+\s*[:.)-]?|#\d+[.:)]?)\s+(?=\S)",
    re.IGNORECASE,
)
_FENCE_RE = re.compile(r"^\s*(```|~~~)")
_STACK_RE = re.compile(
    r"^\s+at\s+[\w.$<>]+\(|^\s*caused by:|^\s*([\w$]+\.)+[\w$]*(Exception|Error)\b"
)
# sentence-final punctuation, optional closing quote/bracket, whitespace, then
# an uppercase letter, digit, or opening quote
_BOUNDARY_RE = re.compile(r"[.!?]+[\"')\]]*(?=\s+[\"'(\[]?[A-Z0-9])")

ABBREVIATIONS = frozenset(
    "e.g i.e etc vs mr mrs ms dr st no fig approx cf al resp ver v".split()
)


def _strip_markers(text: str, start: int) -> int:
    """Offset just past any (possibly nested) enumeration markers."""
    while True:
        m = _MARKER_RE.match(text, start)
        if not m:
            return start
        start = m.end()


def _is_guarded(line: str, end: int) -> bool:
    """True when the period ending at ``end`` belongs to an abbreviation or dotted number."""
    if line[end - 1] != ".":
        return False
    head = line[:end - 1]
    word = re.search(r"(\S+)$", head)
    if not word:
        return False
    token = word.group(1).lower().lstrip("(\"'[")
    if token in ABBREVIATIONS or token.rstrip(".") in ABBREVIATIONS:
        return True
    # single initials ("J. Smith") and dotted numbers ("v1.4. Then")
    if re.fullmatch(r"[a-z]", token):
        return True
    if re.fullmatch(r"v?\d+(\.\d+)+", token):
        return True
    return False


def _split_line(line: str, offset: int) -> list[tuple[int, int]]:
    """Character spans (absolute) of the sentences in one line."""
    spans = []
    start = 0
    for m in _BOUNDARY_RE.finditer(line):
        # the guard looks at the first punctuation char of the run
        first_punct = m.start() + 1
        if _is_guarded(line, first_punct) and m.end() == first_punct:
            continue
        spans.append((start, m.end()))
        start = m.end()
    spans.append((start, len(line)))
    out = []
    for a, b in spans:
        seg = line[a:b]
        if seg.strip():
            lead = len(seg) - len(seg.lstrip())
            trail = len(seg.rstrip())
            out.append((offset + a + lead, offset + a + trail))
    return out


def segment(report_text: str) -> list[Sentence]:
    """Split bug-report text into ordered sentences.

    Every line break ends a sentence. Enumeration markers ("1.", "-",
    "Step 3:") are removed from the sentence text; the span still covers
    them. Fenced code blocks and stack-trace runs pass through as one
    sentence each.
    """
    if not report_text or not report_text.strip():
        return []
    spans: list[tuple[int, int, int]] = []  # (span_start, text_start, end)
    pos = 0
    fence_start: int | None = None
    fence_end = 0
    prev_stack = False
    for raw in report_text.splitlines(keepends=True):
        line = raw.rstrip("\r\n")
        line_start = pos
        pos += len(raw)
        lead = len(line) - len(line.lstrip())
        line_end = line_start + len(line.rstrip())
        if fence_start is not None:
            fence_end = line_end if line.strip() else fence_end
            if _FENCE_RE.match(line):
                spans.append((fence_start, fence_start, fence_end))
                fence_start = None
            continue
        if _FENCE_RE.match(line):
            body = line.strip()
            if len(body) > 3 and body.endswith(body[:3]):
                spans.append((line_start + lead, line_start + lead, line_end))
            else:
                fence_start, fence_end = line_start + lead, line_end
            prev_stack = False
            continue
        if _STACK_RE.match(line):
            if prev_stack:
                s0, t0, _ = spans.pop()
                spans.append((s0, t0, line_end))
            else:
                spans.append((line_start + lead, line_start + lead, line_end))
            prev_stack = True
            continue
        prev_stack = False
        if not line.strip():
            continue
        content = _strip_markers(line, lead)
        for i, (a, b) in enumerate(_split_line(line[content:], line_start + content)):
            text_at = _strip_markers(report_text[:b], a)
            spans.append((line_start + lead if i == 0 else a, text_at, b))
    if fence_start is not None:
        spans.append((fence_start, fence_start, fence_end))

    sentences = []
    for s0, t0, end in spans:
        text = " ".join(report_text[t0:end].split())
        if text:
            sentences.append(Sentence(len(sentences), text, (s0, end)))
    return sentences


def _require(record: dict, name: str, source: str) -> str:
    if name not in record:
        raise ReportFormatError(f"{source}: missing field: {name}")
    value = record[name]
    if not isinstance(value, str):
        raise ReportFormatError(f"{source}: field {name} must be a string")
    return value


def report_from_record(record: dict, source: str = "<record>") -> BugReport:
    if not isinstance(record, dict):
        raise ReportFormatError(f"{source}: report record must be an object")
    rid = _require(record, "id", source)
    title = _require(record, "title", source)
    body = _require(record, "body", source)
    return BugReport(rid, title, body, segment(body))


def load_reports(path: str | Path) -> list[BugReport]:
    """Load every report in a structured file (single record or an array)."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError) as exc:
        raise ReportFormatError(f"{path}: cannot read report: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ReportFormatError(f"{path}: malformed report: {exc}") from exc
    records = data if isinstance(data, list) else [data]
    reports = [report_from_record(r, f"{path}[{i}]") for i, r in enumerate(records)]
    ids = [r.id for r in reports]
    if len(set(ids)) != len(ids):
        raise ReportFormatError(f"{path}: duplicate report ids")
    return reports


def load_report(path: str | Path, format: str | None = None) -> BugReport:
    """Load one bug report.

    ``format`` is ``"plain"`` (the whole file is the body, the filename stem
    is the id) or ``"structured"`` (JSON with ``id``/``title``/``body``).
    When omitted it is inferred from the ``.json`` suffix.
    """
    path = Path(path)
    if format is None:
        format = "structured" if path.suffix.lower() == ".json" else "plain"
    if format == "structured":
        reports = load_reports(path)
        if len(reports) != 1:
            raise ReportFormatError(f"{path}: expected one report, found {len(reports)}")
        return reports[0]
    if format != "plain":
        raise ValueError(f"unknown report format: {format}")
    try:
        body = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ReportFormatError(f"{path}: cannot read report: {exc}") from exc
    return BugReport(path.stem, "", body, segment(body))
