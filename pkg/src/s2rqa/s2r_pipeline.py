"""S2R sentence identification and individual-step extraction."""

from __future__ import annotations

import logging
from dataclasses import dataclass

from . import lexicon
from .llm_gateway import Gateway, GatewayError, split_slots
from .report_ingest import BugReport

log = logging.getLogger(__name__)


class SlotFormatError(ValueError):
    pass


class PipelineError(RuntimeError):
    def __init__(self, report_id: str, cause: Exception):
        super().__init__(f"report {report_id}: {cause}")
        self.report_id = report_id
        self.cause = cause


@dataclass(frozen=True)
class IndividualS2R:
    index: int
    action: str
    object: str
    preposition: str | None = None
    object2: str | None = None
    source_sentence: int = 0

    def formatted(self) -> str:
        slots = [self.action, self.object]
        if self.preposition is not None:
            slots += [self.preposition, self.object2]
        return "".join(f"[{s}]" for s in slots)

    @property
    def text(self) -> str:
        return " ".join(s for s in (self.action, self.object, self.preposition, self.object2) if s)

    def dedup_key(self) -> tuple[str, frozenset[str]]:
        verb = lexicon.verb_class(self.action)
        if verb is None:
            verb = lexicon.base_verb(self.action.split()[0]) or self.action.lower()
        return verb, frozenset(lexicon.content_tokens(self.object))


def parse_slots(formatted: str, index: int = 0, source_sentence: int = 0) -> IndividualS2R:
    """Parse ``[action][object]`` or ``[action][object][prep][object2]``."""
    slots = [s.strip() for s in split_slots(formatted)]
    if len(slots) < 2:
        raise SlotFormatError(f"expected at least 2 bracketed slots: {formatted!r}")
    if len(slots) > 4:
        raise SlotFormatError(f"expected at most 4 bracketed slots: {formatted!r}")
    if not slots[0]:
        raise SlotFormatError(f"empty action: {formatted!r}")
    if not slots[1]:
        raise SlotFormatError(f"empty object: {formatted!r}")
    prep = obj2 = None
    if len(slots) == 3:
        # a lone third slot carries no connective; fold it into the object
        log.warning("3-slot S2R %r: third slot treated as part of the object", formatted)
        slots = [slots[0], f"{slots[1]} {slots[2]}".strip()]
    if len(slots) == 4 and slots[2] and slots[3]:
        prep, obj2 = slots[2], slots[3]
    elif len(slots) == 4 and (slots[2] or slots[3]):
        # only one of preposition/object2 given: keep the text, drop the pairing
        slots = [slots[0], " ".join(s for s in slots[1:] if s)]
    return IndividualS2R(index, slots[0], slots[1], prep, obj2, source_sentence)


def identify_s2r_sentences(report: BugReport, gateway: Gateway) -> set[int]:
    """Indices of sentences that describe reproduction steps (title is -1)."""
    try:
        return gateway.identify(report.all_sentences())
    except GatewayError as exc:
        raise PipelineError(report.id, exc) from exc


def extract_individual_s2rs(report: BugReport, s2r_indices: set[int], gateway: Gateway) -> list[IndividualS2R]:
    """Ordered, de-duplicated individual steps from the given sentences."""
    by_index = {s.index: s for s in report.all_sentences()}
    unknown = set(s2r_indices) - set(by_index)
    if unknown:
        raise ValueError(f"report {report.id}: sentence indices not in report: {sorted(unknown)}")
    # the title (index -1) comes first, matching reading order
    sentences = [by_index[i] for i in sorted(s2r_indices)]
    try:
        rows = gateway.extract(sentences)
    except GatewayError as exc:
        raise PipelineError(report.id, exc) from exc
    parsed: list[IndividualS2R] = []
    for sid, formatted in rows:
        try:
            parsed.append(parse_slots(formatted, len(parsed), sid))
        except SlotFormatError as exc:
            log.warning("report %s: skipped malformed S2R: %s", report.id, exc)
    # order of appearance: sentence order, then the model's order within a sentence
    parsed.sort(key=lambda s: (s.source_sentence, s.index))
    steps: list[IndividualS2R] = []
    seen: set = set()
    for s in parsed:
        key = s.dedup_key()
        if key in seen:
            log.info("report %s: dropped duplicate S2R %s", report.id, s.formatted())
            continue
        seen.add(key)
        steps.append(IndividualS2R(len(steps), s.action, s.object, s.preposition, s.object2, s.source_sentence))
    return steps


def extract_steps(report: BugReport, gateway: Gateway) -> list[IndividualS2R]:
    return extract_individual_s2rs(report, identify_s2r_sentences(report, gateway), gateway)
