"""Translation table semantics and language isolation from shared state."""

from datacube import localization as loc
from datacube import protocol as proto
from helpers import Loop

FIXTURE = "\n".join([
    "# ui labels",
    "menu.snapshot\ten\tSnapshot",
    "menu.snapshot\tja\tスナップショット",
    "menu.filter\ten\tFilter",
    "menu.filter\tja\tフィルター",
    "",
    "axis.glucose\ten\tGlucose",
])


def test_lookup_both_languages():
    t = loc.parse_table(FIXTURE)
    assert t.translate("menu.snapshot", "en") == "Snapshot"
    assert t.translate("menu.snapshot", "ja") == "スナップショット"
    assert t.translate("menu.filter", "ja") == "フィルター"


def test_fallback_to_english_records_diagnostic():
    t = loc.parse_table(FIXTURE)
    assert t.translate("axis.glucose", "ja") == "Glucose"
    assert loc.MissingTranslation("axis.glucose", "ja") in t.diagnostics


def test_unknown_key_returns_key():
    t = loc.parse_table(FIXTURE)
    assert t.translate("menu.nonexistent", "en") == "menu.nonexistent"
    assert loc.MissingTranslation("menu.nonexistent", "en") in t.diagnostics


def test_completeness_flags_each_hole():
    t = loc.parse_table(FIXTURE)
    assert t.completeness_check() == [("axis.glucose", "ja")]
    t.add("axis.glucose", "ja", "血糖値")
    assert t.completeness_check() == []


def test_completeness_covers_added_language():
    t = loc.parse_table(FIXTURE)
    t.add("menu.snapshot", "de", "Schnappschuss")
    missing = t.completeness_check()
    assert ("menu.filter", "de") in missing
    assert ("axis.glucose", "de") in missing
    assert ("menu.snapshot", "de") not in missing


def test_bundled_table_is_complete():
    t = loc.bundled_table()
    assert t.keys  # nonempty
    assert {"en", "ja"} <= t.languages
    assert t.completeness_check() == []


def test_provider_consulted_once_then_cached():
    t = loc.parse_table(FIXTURE)
    calls = []

    def provider(key, lang):
        calls.append((key, lang))
        return f"[{lang}] {key}"

    t.register_provider(provider)
    assert t.translate("axis.glucose", "fr") == "[fr] axis.glucose"
    assert t.translate("axis.glucose", "fr") == "[fr] axis.glucose"
    assert calls == [("axis.glucose", "fr")]
    assert "fr" in t.languages


def test_provider_failure_falls_back():
    t = loc.parse_table(FIXTURE)

    def broken(key, lang):
        raise RuntimeError("offline")

    t.register_provider(broken)
    assert t.translate("axis.glucose", "ja") == "Glucose"


def test_provider_none_means_miss():
    t = loc.parse_table(FIXTURE)
    t.register_provider(lambda key, lang: None)
    assert t.translate("menu.filter", "fr") == "Filter"


def test_parse_rejects_malformed_line():
    import pytest
    with pytest.raises(ValueError, match="line 2"):
        loc.parse_table("a\ten\tA\nbroken line\n")


def test_language_choice_never_reaches_shared_state():
    """Two clients running the same ops in different languages stay identical."""
    loop = Loop()
    conn_a, a = loop.add_client()
    conn_b, b = loop.add_client()
    a.set_language("en")
    b.set_language("ja")
    table = loc.bundled_table()
    for conn, core in ((conn_a, a), (conn_b, b)):
        # rendering labels is a local act; it must not generate traffic
        table.translate("menu.snapshot", core.local_prefs.language)
        loop.submit(conn, proto.WatchlistAdd("p1"))
    assert len(loop.digests()) == 1
    wire = proto.canonical_json(proto.state_to_wire(loop.server.state))
    assert "language" not in wire
    assert "ja" not in wire
