import json

import pytest
from hypothesis import given, settings, strategies as st

from s2rqa.report_ingest import BugReport, ReportFormatError, load_report, load_reports, segment


def texts(text):
    return [s.text for s in segment(text)]


def test_two_terminal_periods():
    assert texts("Open the app. Tap Save.") == ["Open the app.", "Tap Save."]


def test_list_items_are_sentences():
    body = "1. Change the phone setting\n2. Open Mileage Tracker"
    sents = segment(body)
    assert [s.text for s in sents] == ["Change the phone setting", "Open Mileage Tracker"]
    # the span still covers the marker
    assert body[slice(*sents[0].origin_span)] == "1. Change the phone setting"
    assert body[slice(*sents[1].origin_span)] == "2. Open Mileage Tracker"


def test_dotted_version_does_not_split():
    assert texts("Version 1.4.1 crashes.") == ["Version 1.4.1 crashes."]


@pytest.mark.parametrize("marker", ["- ", "* ", "• ", "Step 3: ", "3) ", "#4 "])
def test_other_markers(marker):
    assert texts(f"{marker}Tap Save") == ["Tap Save"]


def test_abbreviation_guard():
    assert texts("Tap a field, e.g. Title. Then save.") == ["Tap a field, e.g. Title.", "Then save."]


def test_lowercase_after_period_does_not_split():
    assert texts("Go to settings. then tap OK") == ["Go to settings. then tap OK"]


def test_empty_input():
    assert segment("") == []
    assert segment("  \n\t\n") == []


def test_code_block_is_one_sentence():
    body = "Tap Save.\n```\nval x = 1. Foo\nbar()\n```\nIt crashes."
    out = texts(body)
    assert out[0] == "Tap Save."
    assert out[1].startswith("```") and out[1].endswith("```")
    assert out[2] == "It crashes."


def test_stack_trace_is_one_sentence():
    body = (
        "It crashes.\n"
        "java.lang.NullPointerException: boom\n"
        "    at com.example.Foo.bar(Foo.java:10)\n"
        "    at com.example.Foo.baz(Foo.java:20)\n"
        "Please fix."
    )
    out = texts(body)
    assert len(out) == 3
    assert out[1].startswith("java.lang.NullPointerException") and out[1].endswith("(Foo.java:20)")


def test_plain_report_uses_stem(tmp_path):
    p = tmp_path / "bug65.txt"
    p.write_text("Open the app.\nTap Save.", encoding="utf-8")
    r = load_report(p)
    assert r.id == "bug65"
    assert [s.text for s in r.sentences] == ["Open the app.", "Tap Save."]


def test_structured_missing_body(tmp_path):
    p = tmp_path / "r.json"
    p.write_text(json.dumps({"id": "x", "title": "t"}), encoding="utf-8")
    with pytest.raises(ReportFormatError, match="missing field: body"):
        load_report(p)


def test_structured_array_and_duplicates(tmp_path):
    p = tmp_path / "many.json"
    recs = [{"id": "a", "title": "", "body": "Tap Save."}, {"id": "b", "title": "T", "body": "x"}]
    p.write_text(json.dumps(recs), encoding="utf-8")
    assert [r.id for r in load_reports(p)] == ["a", "b"]
    p.write_text(json.dumps(recs + recs[:1]), encoding="utf-8")
    with pytest.raises(ReportFormatError, match="duplicate"):
        load_reports(p)


def test_malformed_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json", encoding="utf-8")
    with pytest.raises(ReportFormatError, match="malformed"):
        load_report(p)


def test_title_is_sentence_minus_one():
    r = BugReport("x", "  Crash when saving  ", "Tap Save.", segment("Tap Save."))
    allsents = r.all_sentences()
    assert allsents[0].index == -1 and allsents[0].text == "Crash when saving"
    assert [s.index for s in allsents[1:]] == [0]


def test_intervals_report_sentences(fixtures_dir):
    r = load_report(fixtures_dir / "reports" / "mileage-intervals.json")
    got = [s.text for s in r.sentences]
    for step in [
        "Change the phone setting.",
        "Open Mileage Tracker.",
        "Navigate to the 'Service Intervals' screen.",
        "Tap on 'Add Service Interval'.",
        "I entered the information for my next oil change.",
        "I added a second service my yearly State Inspection.",
    ]:
        assert step in got
    assert len(got) >= 6


_alphabet = st.sampled_from(list("abcXYZ019 .!?-*:\n\t'\"()e.g") + ["1. ", "- ", "Step 2: ", "```", "v1.2. ", "\n\n"])
report_text = st.lists(_alphabet, max_size=60).map("".join)


@settings(max_examples=400)
@given(report_text)
def test_spans_ordered_and_disjoint(text):
    sents = segment(text)
    total = 0
    prev_end = 0
    for i, s in enumerate(sents):
        a, b = s.origin_span
        assert s.index == i
        assert s.text and s.text == s.text.strip()
        assert prev_end <= a < b <= len(text)
        prev_end = b
        total += b - a
        # markers are stripped, but the text is recoverable from the span
        assert s.text.split()[0] in text[a:b]
    assert total <= len(text)


@settings(max_examples=400)
@given(report_text)
def test_segment_idempotent(text):
    first = [s.text for s in segment(text)]
    again = [s.text for s in segment("\n".join(first))]
    assert again == first
