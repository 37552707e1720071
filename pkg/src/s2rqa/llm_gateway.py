"""Language-model access for the three S2R tasks.

Every task goes through :meth:`Gateway.complete`, which renders a prompt
template, sends it to a provider and returns the raw text. Two providers
exist: an OpenAI-compatible HTTP endpoint and :class:`MockOracle`, a
deterministic lexical stand-in that answers from the same bindings a real
model would see. Responses from both are read by the same tolerant parsers.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import string
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Mapping

from . import lexicon
from .execution_model import InteractionEdge, ScreenNode

log = logging.getLogger(__name__)

TASKS = ("identify", "extract", "map_gate", "map_list")
DEFAULT_THRESHOLD = 0.5
# score multiplier when the step verb names a different GUI action than the edge
CONFLICT_FACTOR = 0.5


class GatewayError(RuntimeError):
    """Base class for provider and response failures."""


class TransportError(GatewayError):
    """Network-level failure; retried."""


class ProviderError(GatewayError):
    """Authentication, quota or request rejection reported by the provider."""


class ResponseFormatError(GatewayError):
    def __init__(self, message: str, raw_response: str):
        super().__init__(f"{message}; raw response: {raw_response!r}")
        self.raw_response = raw_response


class TemplateError(ValueError):
    pass


class ConfigError(ValueError):
    pass


# --- templates --------------------------------------------------------------

@dataclass(frozen=True)
class PromptTemplate:
    task: str
    template_text: str
    version: str
    strategy: str = "zero_shot"

    def placeholders(self) -> list[str]:
        names = []
        for _, name, _, _ in string.Formatter().parse(self.template_text):
            if name is not None and name not in names:
                names.append(name)
        return names

    def render(self, bindings: Mapping[str, str]) -> str:
        for name in self.placeholders():
            if name not in bindings:
                raise TemplateError(f"unbound placeholder: {{{name}}}")
        return self.template_text.format_map({k: bindings[k] for k in self.placeholders()})


def parse_template(text: str) -> PromptTemplate:
    """Read a template file: ``# key: value`` header lines, then the prompt."""
    meta: dict[str, str] = {}
    lines = text.splitlines()
    i = 0
    while i < len(lines) and lines[i].startswith("#"):
        key, _, value = lines[i][1:].partition(":")
        meta[key.strip()] = value.strip()
        i += 1
    task = meta.get("task")
    if task not in TASKS:
        raise TemplateError(f"template header names an unknown task: {task!r}")
    if not meta.get("version"):
        raise TemplateError("template header lacks a version")
    return PromptTemplate(task, "\n".join(lines[i:]).strip() + "\n", meta["version"], meta.get("strategy", "zero_shot"))


_template_cache: dict[str, PromptTemplate] = {}


def load_template(task: str) -> PromptTemplate:
    if task not in TASKS:
        raise TemplateError(f"unknown task: {task}")
    if task not in _template_cache:
        text = resources.files("s2rqa").joinpath(f"templates/{task}.txt").read_text(encoding="utf-8")
        _template_cache[task] = parse_template(text)
    return _template_cache[task]


# --- configuration ----------------------------------------------------------

@dataclass
class ModelConfig:
    provider: str = "mock_oracle"
    model_name: str = "mock-oracle"
    temperature: float = 0.0
    max_retries: int = 2
    timeout: float = 60.0
    endpoint: str | None = None
    api_key_env: str = "S2RQA_API_KEY"
    threshold: float = DEFAULT_THRESHOLD

    def validate(self) -> None:
        if self.provider not in ("remote_api", "mock_oracle"):
            raise ConfigError(f"unknown provider: {self.provider}")
        if self.temperature != 0:
            raise ConfigError(f"temperature must be exactly 0, got {self.temperature}")
        if not isinstance(self.max_retries, int) or not 0 <= self.max_retries <= 10:
            raise ConfigError(f"max_retries must be an integer in 0..10, got {self.max_retries!r}")
        if not self.timeout or self.timeout <= 0:
            raise ConfigError(f"timeout must be positive, got {self.timeout!r}")
        if not 0 <= self.threshold <= 1:
            raise ConfigError(f"threshold must be in [0, 1], got {self.threshold}")
        if self.provider == "remote_api" and not self.endpoint:
            raise ConfigError("remote_api provider needs an endpoint URL")


@dataclass(frozen=True)
class GateAnswer:
    maps: bool
    raw_response: str


@dataclass(frozen=True)
class ListAnswer:
    edge_ids: list[int]
    dropped: list[int]
    raw_response: str


# --- bindings ---------------------------------------------------------------

@dataclass(frozen=True)
class InteractionInfo:
    """The metadata of one outgoing interaction, as shown to the model."""

    edge_id: int
    action: str
    component_type: str
    resource_id: str = ""
    text: str = ""
    description: str = ""

    @classmethod
    def from_edge(cls, edge: InteractionEdge) -> "InteractionInfo":
        c = edge.component
        return cls(edge.edge_id, edge.action, c.component_type, c.resource_id or "", c.text or "", c.description or "")


def _esc(value: str) -> str:
    # field separators inside values would break the line format
    return " ".join(value.split()).replace("|", "/")


def render_interaction(info: InteractionInfo) -> str:
    return (
        f"[{info.edge_id}] action: {info.action} | component: {_esc(info.component_type)}"
        f" | id: {_esc(info.resource_id)} | text: {_esc(info.text)} | description: {_esc(info.description)}"
    )


_INTERACTION_RE = re.compile(r"^\[(\d+)\]\s+(.*)$")


def parse_interaction(line: str) -> InteractionInfo | None:
    m = _INTERACTION_RE.match(line.strip())
    if not m:
        return None
    fields: dict[str, str] = {}
    for part in m.group(2).split(" | "):
        key, _, value = part.partition(":")
        fields[key.strip()] = value.strip()
    return InteractionInfo(
        int(m.group(1)),
        fields.get("action", ""),
        fields.get("component", ""),
        fields.get("id", ""),
        fields.get("text", ""),
        fields.get("description", ""),
    )


def render_interactions(edges: Iterable[InteractionEdge]) -> str:
    return "\n".join(render_interaction(InteractionInfo.from_edge(e)) for e in edges)


def describe_screen(node: ScreenNode) -> str:
    if node.is_start:
        return "the device home screen, before the app is launched"
    labels: list[str] = []

    def walk(comps) -> None:
        for c in comps:
            if c.text or c.description:
                labels.append(f"{c.component_type} '{_esc(c.text or c.description)}'")
            walk(c.children)

    walk(node.component_tree)
    head = node.activity_name or "unnamed screen"
    return f"{head}; components: {', '.join(labels) if labels else 'none with labels'}"


def render_sentences(sentences: Iterable) -> str:
    return "\n".join(f"{s.index}: {s.text}" for s in sentences)


_SENTENCE_LINE_RE = re.compile(r"^\s*(-?\d+)\s*[:.)]\s*(.*)$")


def _sentence_lines(binding: str) -> list[tuple[int, str]]:
    out = []
    for line in binding.splitlines():
        m = _SENTENCE_LINE_RE.match(line)
        if m:
            out.append((int(m.group(1)), m.group(2)))
    return out


_SLOT_RE = re.compile(r"\[([^\[\]]*)\]")


def split_slots(formatted: str) -> list[str]:
    """Bracketed slot contents of ``[a][b]...`` in order (untrimmed)."""
    return _SLOT_RE.findall(formatted)


# --- mock oracle ------------------------------------------------------------

_BE_VERBS = frozenset("is are was were be been being get gets got".split())
_PLAIN_WORD = re.compile(r"^[A-Za-z][A-Za-z'-]*$")
_CLAUSE_SPLIT = re.compile(r"[,;:]|\b(?:and|then|after that|afterwards)\b", re.IGNORECASE)
_QUOTES = "'\"‘’“”`"
_QUOTE_RE = re.compile(rf"(?<![\w])[{_QUOTES}]+|[{_QUOTES}]+(?![\w])")


def _words(text: str) -> list[str]:
    return [w.strip(".,;:!?()[]") for w in text.split()]


def _find_verb(words: list[str]) -> tuple[int, int] | None:
    """(start, end) word span of the first active lexicon verb, or None."""
    for i, w in enumerate(words):
        if not _PLAIN_WORD.match(w):
            continue
        prev = words[i - 1].lower() if i else ""
        if prev in lexicon.MODALS:
            continue
        pair = " ".join(words[i:i + 2]).lower().replace("-", " ")
        if pair in lexicon.PHRASE_CLASS and prev not in _BE_VERBS:
            return i, i + 2
        base = lexicon.base_verb(w)
        if base is None and "-" in w:
            base = lexicon.base_verb(w.rsplit("-", 1)[1])  # "long-pressed"
        if base is None:
            continue
        if prev in _BE_VERBS and w.lower().endswith("ed"):
            continue  # passive: "the button is clicked"
        return i, i + 1
    return None


def is_action_sentence(text: str) -> bool:
    """Mock identification rule: an active action verb from the lexicon."""
    return _find_verb(_words(text)) is not None


def _clean(words: list[str]) -> str:
    text = _QUOTE_RE.sub("", " ".join(words))
    return " ".join(text.split()).strip(" .,;:!?")


def extract_clause_slots(clause: str) -> list[str] | None:
    """Mock extraction of one clause into [action, object, (prep, object2)]."""
    words = [w for w in _words(clause) if w]
    span = _find_verb(words)
    if span is None:
        return None
    action = " ".join(words[span[0]:span[1]])
    rest = words[span[1]:]
    while rest and rest[0].lower() in lexicon.PREPOSITIONS:
        rest = rest[1:]
    for j in range(1, len(rest) - 1):
        if rest[j].lower() in lexicon.PREPOSITIONS:
            obj, prep, obj2 = _clean(rest[:j]), rest[j].lower(), _clean(rest[j + 1:])
            if obj and obj2:
                return [action, obj, prep, obj2]
            break
    if rest and rest[-1].lower() in lexicon.PREPOSITIONS:
        rest = rest[:-1]
    obj = _clean(rest)
    return [action, obj] if obj else None


def format_slots(slots: list[str]) -> str:
    return "".join(f"[{s}]" for s in slots)


def _resource_tokens(resource_id: str) -> set[str]:
    if ":id/" in resource_id:
        resource_id = resource_id.split(":id/", 1)[1]
    elif "/" in resource_id:
        resource_id = resource_id.rsplit("/", 1)[1]
    return lexicon.content_tokens(resource_id.replace("_", " "))


def _s2r_parts(s2r_text: str) -> tuple[str, set[str]]:
    slots = [s.strip() for s in split_slots(s2r_text)]
    if len(slots) >= 2:
        action, objects = slots[0], slots[1] + " " + (slots[3] if len(slots) >= 4 else "")
    else:
        words = s2r_text.split()
        if words and lexicon.base_verb(words[0]):
            action, objects = words[0], " ".join(words[1:])
        else:
            action, objects = "", s2r_text
    return action, lexicon.content_tokens(objects)


def mock_match_score(s2r_text: str, interaction) -> float:
    """Overlap coefficient of object words vs component words, times an action factor.

    ``interaction`` is an :class:`InteractionInfo`, an
    :class:`~s2rqa.execution_model.InteractionEdge`, or a mapping with
    ``action``/``text``/``description``/``resource_id`` keys.
    """
    if isinstance(interaction, InteractionEdge):
        interaction = InteractionInfo.from_edge(interaction)
    elif isinstance(interaction, Mapping):
        interaction = InteractionInfo(
            -1,
            interaction.get("action", ""),
            interaction.get("component_type", ""),
            interaction.get("resource_id") or "",
            interaction.get("text") or "",
            interaction.get("description") or "",
        )
    action, s = _s2r_parts(s2r_text)
    e = (
        lexicon.content_tokens(interaction.text)
        | lexicon.content_tokens(interaction.description)
        | _resource_tokens(interaction.resource_id)
    )
    if not s or not e:
        return 0.0
    overlap = len(s & e) / min(len(s), len(e))
    cls = lexicon.verb_class(action) if action else None
    if cls is not None and interaction.action not in lexicon.ACTION_CLASSES[cls]:
        overlap *= CONFLICT_FACTOR
    return overlap


class MockOracle:
    """Deterministic offline provider answering from the prompt bindings."""

    name = "mock_oracle"

    def __init__(self, threshold: float = DEFAULT_THRESHOLD):
        self.threshold = threshold

    def respond(self, template: PromptTemplate, bindings: Mapping[str, str], prompt: str) -> str:
        handler = getattr(self, "_" + template.task)
        return handler(bindings)

    def _identify(self, b: Mapping[str, str]) -> str:
        rows = _sentence_lines(b["sentences"])
        return "\n".join(f"{i}: {'yes' if is_action_sentence(t) else 'no'}" for i, t in rows)

    def _extract(self, b: Mapping[str, str]) -> str:
        out = []
        for i, text in _sentence_lines(b["sentences"]):
            for clause in _CLAUSE_SPLIT.split(text):
                slots = extract_clause_slots(clause)
                if slots:
                    out.append(f"{i}: {format_slots(slots)}")
        return "\n".join(out) if out else "NONE"

    def _matches(self, b: Mapping[str, str]) -> list[int]:
        hits = []
        for line in b["interactions"].splitlines():
            info = parse_interaction(line)
            if info is not None and mock_match_score(b["s2r"], info) >= self.threshold:
                hits.append(info.edge_id)
        return hits

    def _map_gate(self, b: Mapping[str, str]) -> str:
        return "yes" if self._matches(b) else "no"

    def _map_list(self, b: Mapping[str, str]) -> str:
        return ", ".join(str(i) for i in self._matches(b))


# --- remote provider --------------------------------------------------------

Transport = Callable[[str, bytes, dict, float], tuple[int, bytes]]


def urllib_transport(url: str, body: bytes, headers: dict, timeout: float) -> tuple[int, bytes]:
    req = urllib.request.Request(url, data=body, headers=headers, method="POST")
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            return resp.status, resp.read()
    except urllib.error.HTTPError as exc:
        return exc.code, exc.read()
    except (urllib.error.URLError, TimeoutError, ConnectionError) as exc:
        raise TransportError(f"request to {url} failed: {exc}") from exc


class RemoteProvider:
    """OpenAI-compatible chat-completions endpoint."""

    name = "remote_api"

    def __init__(self, config: ModelConfig, transport: Transport | None = None):
        self.config = config
        self.transport = transport or urllib_transport

    def respond(self, template: PromptTemplate, bindings: Mapping[str, str], prompt: str) -> str:
        key = os.environ.get(self.config.api_key_env)
        if not key:
            raise ProviderError(f"missing API key: set the {self.config.api_key_env} environment variable")
        body = json.dumps({
            "model": self.config.model_name,
            "temperature": 0,
            "messages": [{"role": "user", "content": prompt}],
        }).encode("utf-8")
        headers = {"Content-Type": "application/json", "Authorization": f"Bearer {key}"}
        url = self.config.endpoint.rstrip("/") + "/chat/completions"
        status, raw = self.transport(url, body, headers, self.config.timeout)
        if status >= 500:
            raise TransportError(f"provider returned HTTP {status}")
        try:
            payload = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            payload = None
        if status != 200:
            message = payload.get("error", {}).get("message") if isinstance(payload, dict) and isinstance(payload.get("error"), dict) else None
            raise ProviderError(f"provider returned HTTP {status}: {message or raw[:200].decode('utf-8', 'replace')}")
        try:
            return payload["choices"][0]["message"]["content"] or ""
        except (TypeError, KeyError, IndexError):
            raise ProviderError(f"unexpected provider response: {raw[:200].decode('utf-8', 'replace')}") from None


# --- gateway ----------------------------------------------------------------

def make_provider(config: ModelConfig, transport: Transport | None = None):
    if config.provider == "mock_oracle":
        return MockOracle(config.threshold)
    return RemoteProvider(config, transport)


@dataclass
class Gateway:
    """Thread-safe front end shared by all reports of a run."""

    config: ModelConfig = field(default_factory=ModelConfig)
    provider: object | None = None
    audit_log: str | Path | None = None
    sleep: Callable[[float], None] = time.sleep

    def __post_init__(self) -> None:
        self.config.validate()
        if self.provider is None:
            self.provider = make_provider(self.config)
        self._lock = threading.Lock()
        self.call_counts = {t: 0 for t in TASKS}

    def complete(self, template: PromptTemplate, bindings: Mapping[str, str]) -> str:
        prompt = template.render(bindings)
        attempts = self.config.max_retries + 1
        for attempt in range(1, attempts + 1):
            try:
                response = self.provider.respond(template, bindings, prompt)
                break
            except TransportError as exc:
                if attempt == attempts:
                    raise TransportError(f"{exc} (gave up after {attempts} attempts)") from exc
                log.warning("%s call failed (attempt %d/%d): %s", template.task, attempt, attempts, exc)
                self.sleep(min(2.0 ** (attempt - 1), 8.0) if self.provider.name == "remote_api" else 0)
        with self._lock:
            self.call_counts[template.task] += 1
            if self.audit_log is not None:
                record = {
                    "timestamp": datetime.now(timezone.utc).isoformat(timespec="milliseconds"),
                    "task": template.task,
                    "template_version": template.version,
                    "prompt_hash": hashlib.sha256(prompt.encode("utf-8")).hexdigest(),
                    "response": response,
                }
                with open(self.audit_log, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(record, ensure_ascii=False) + "\n")
        return response

    # task helpers

    def identify(self, sentences: list) -> set[int]:
        if not sentences:
            return set()
        raw = self.complete(load_template("identify"), {"sentences": render_sentences(sentences)})
        return parse_identify(raw, [s.index for s in sentences])

    def extract(self, sentences: list) -> list[tuple[int, str]]:
        if not sentences:
            return []
        raw = self.complete(load_template("extract"), {"sentences": render_sentences(sentences)})
        return parse_extract(raw, [s.index for s in sentences])

    def map_gate(self, s2r: str, node: ScreenNode, edges: list[InteractionEdge]) -> GateAnswer:
        raw = self.complete(load_template("map_gate"), self._map_bindings(s2r, node, edges))
        return parse_gate(raw)

    def map_list(self, s2r: str, node: ScreenNode, edges: list[InteractionEdge]) -> ListAnswer:
        raw = self.complete(load_template("map_list"), self._map_bindings(s2r, node, edges))
        return parse_list(raw, [e.edge_id for e in edges])

    @staticmethod
    def _map_bindings(s2r: str, node: ScreenNode, edges: list[InteractionEdge]) -> dict[str, str]:
        return {"screen": describe_screen(node), "s2r": s2r, "interactions": render_interactions(edges)}


def complete(template: PromptTemplate, bindings: Mapping[str, str], config: ModelConfig,
             provider=None) -> str:
    """One-off completion without a long-lived gateway."""
    return Gateway(config, provider).complete(template, bindings)


# --- response parsers -------------------------------------------------------

_YESNO_LINE = re.compile(r"^[^\w-]*(-?\d+)\s*[:.)\]-]\s*\W*(yes|no)\b", re.IGNORECASE)
_EXTRACT_LINE = re.compile(r"^[^\w\[-]*(-?\d+)\s*[:.)\]-]\s*((?:\[[^\[\]]*\]\s*){2,4})")


def parse_identify(raw: str, indices: list[int]) -> set[int]:
    answers: dict[int, bool] = {}
    for line in raw.splitlines():
        m = _YESNO_LINE.match(line)
        if m and int(m.group(1)) in indices:
            answers.setdefault(int(m.group(1)), m.group(2).lower() == "yes")
    if not answers:
        raise ResponseFormatError("no '<id>: yes|no' lines in identification response", raw)
    missing = [i for i in indices if i not in answers]
    if missing:
        log.warning("identification response skipped sentences %s; treating them as non-S2R", missing)
    return {i for i, yes in answers.items() if yes}


def parse_extract(raw: str, indices: list[int]) -> list[tuple[int, str]]:
    out = []
    for line in raw.splitlines():
        m = _EXTRACT_LINE.match(line)
        if not m:
            continue
        sid = int(m.group(1))
        if sid not in indices:
            log.warning("extraction response names unknown sentence %d; dropped", sid)
            continue
        out.append((sid, m.group(2).strip()))
    if not out and raw.strip().strip(".").upper() != "NONE":
        raise ResponseFormatError("no '<id>: [action][object]...' lines in extraction response", raw)
    return out


def parse_gate(raw: str) -> GateAnswer:
    word = raw.strip().strip(".!\"'`*").lower()
    if word in ("yes", "no"):
        return GateAnswer(word == "yes", raw)
    log.warning("unparseable yes/no answer %r; treating as no", raw[:80])
    return GateAnswer(False, raw)


def parse_list(raw: str, offered: list[int]) -> ListAnswer:
    ids, dropped = [], []
    for tok in re.findall(r"\b\d+\b", raw):
        n = int(tok)
        if n in offered:
            if n not in ids:
                ids.append(n)
        elif n not in dropped:
            dropped.append(n)
    if dropped:
        log.warning("dropped interaction ids not on this screen: %s", dropped)
    return ListAnswer(sorted(ids), dropped, raw)
