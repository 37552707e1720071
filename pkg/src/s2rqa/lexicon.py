"""Shared word lists: action-verb classes, stop words and tokenization.

The verb classes drive three things: which sentences the offline oracle
treats as reproduction steps, which GUI actions a step verb is compatible
with, and the de-duplication key for extracted steps.
"""

from __future__ import annotations

import re

# verb class -> GUI actions it is compatible with
ACTION_CLASSES: dict[str, frozenset[str]] = {
    "tap": frozenset({"tap"}),
    "long_tap": frozenset({"long_tap"}),
    "type": frozenset({"type"}),
    "swipe": frozenset({"swipe"}),
    "open": frozenset({"open_app", "tap"}),
}

VERB_CLASS: dict[str, str] = {}
for _cls, _verbs in {
    "tap": "tap click press select touch choose check uncheck toggle hit push",
    "long_tap": "hold",
    "type": "type enter input fill write insert",
    "swipe": "swipe scroll drag fling slide",
    "open": "open launch start run",
}.items():
    for _v in _verbs.split():
        VERB_CLASS[_v] = _cls

# two-word verbs, matched on the normalized (lowercase, hyphen-free) phrase
PHRASE_CLASS: dict[str, str] = {
    "long tap": "long_tap",
    "long press": "long_tap",
    "long click": "long_tap",
    "double tap": "tap",
    "fill in": "type",
    "type in": "type",
    "scroll down": "swipe",
    "scroll up": "swipe",
}

# verbs that mark a sentence as describing a user action even when they
# carry no GUI action class of their own
OTHER_ACTION_VERBS = frozenset(
    """
    navigate go add create delete remove change edit set close rotate give
    turn enable disable switch save log sign install restart return visit
    move clear search upload download share pick mark rename update login
    reopen exit quit leave refresh reload use
    """.split()
)

ACTION_VERBS = frozenset(VERB_CLASS) | OTHER_ACTION_VERBS

MODALS = frozenset(
    "should would could must might may will shall can't cannot won't doesn't don't didn't not never supposed expected".split()
)

PREPOSITIONS = frozenset(
    "on in for to into from with at onto under inside within via using".split()
)

# particles dropped when they directly follow the verb ("tap on X" -> object X)
VERB_PARTICLES = frozenset({"on", "to", "into", "onto"})

STOPWORDS = frozenset(
    """
    a an the this that these those my your his her its our their some any all
    and or but of to in on at for from with into onto by as is are was were be
    been being it i me we you he she they them then there here up out so if
    when while just also very please e g eg ie etc
    """.split()
)

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str | None) -> list[str]:
    """Lowercase alphanumeric tokens; identifiers like ``add_service`` split on ``_``."""
    if not text:
        return []
    # split camelCase before lowering so "oilChange" -> "oil change"
    text = re.sub(r"(?<=[a-z])(?=[A-Z])", " ", text)
    return _TOKEN_RE.findall(text.lower())


def content_tokens(text: str | None) -> set[str]:
    return {t for t in tokenize(text) if t not in STOPWORDS and len(t) > 1}


def base_verb(word: str) -> str | None:
    """Map an inflected verb form onto a lexicon entry, or None."""
    w = word.lower().strip(".,;:!?'\"")
    if w in ACTION_VERBS:
        return w
    candidates = []
    if w.endswith("ied"):
        candidates.append(w[:-3] + "y")
    if w.endswith("ed"):
        candidates += [w[:-2], w[:-1]]
        if len(w) > 4 and w[-3] == w[-4]:
            candidates.append(w[:-3])  # tapped -> tap
    if w.endswith("ing"):
        candidates += [w[:-3], w[:-3] + "e"]
        if len(w) > 5 and w[-4] == w[-5]:
            candidates.append(w[:-4])
    if w.endswith("es"):
        candidates.append(w[:-2])
    if w.endswith("s"):
        candidates.append(w[:-1])
    for c in candidates:
        if c in ACTION_VERBS:
            return c
    return None


def verb_class(action: str) -> str | None:
    """Action-synonym class of a step verb phrase ("Long-press" -> "long_tap")."""
    phrase = " ".join(tokenize(action.replace("-", " ")))
    if phrase in PHRASE_CLASS:
        return PHRASE_CLASS[phrase]
    words = phrase.split()
    if len(words) >= 2:
        first_two = " ".join(words[:2])
        if first_two in PHRASE_CLASS:
            return PHRASE_CLASS[first_two]
        # "long tapped" -> long_tap
        base = base_verb(words[1])
        if words[0] == "long" and base in ("tap", "press", "click"):
            return "long_tap"
    for w in words:
        base = base_verb(w)
        if base is not None:
            return VERB_CLASS.get(base)
    return None
