"""Per-client text translation.

Every user-facing label goes through a translation table keyed by
(text key, language). English is the reference language; lookups fall back
key -> en -> the key itself. The language choice is strictly local to one
client and never enters shared session state.
"""

from __future__ import annotations

import threading
from importlib import resources
from typing import Callable, Iterable, NamedTuple, Optional

REFERENCE_LANGUAGE = "en"

# Optional source for table misses, e.g. an online translation service.
TranslationProvider = Callable[[str, str], Optional[str]]


class MissingTranslation(NamedTuple):
    key: str
    language: str


class TranslationTable:
    def __init__(self, languages: Iterable[str] = ("en", "ja")):
        self.languages: set[str] = set(languages) | {REFERENCE_LANGUAGE}
        self._entries: dict[tuple[str, str], str] = {}
        self._provider: Optional[TranslationProvider] = None
        self._lock = threading.Lock()
        self.diagnostics: list[MissingTranslation] = []

    def add(self, key: str, language: str, text: str) -> None:
        with self._lock:
            self.languages.add(language)
            self._entries[(key, language)] = text

    @property
    def keys(self) -> set[str]:
        return {k for (k, lang) in self._entries if lang == REFERENCE_LANGUAGE}

    def register_provider(self, provider: TranslationProvider) -> None:
        """Consult `provider` on table misses; successful results are cached."""
        self._provider = provider

    def translate(self, key: str, language: str) -> str:
        """Total lookup: never raises, worst case returns the key itself."""
        hit = self._entries.get((key, language))
        if hit is not None:
            return hit
        if self._provider is not None:
            try:
                provided = self._provider(key, language)
            except Exception:
                provided = None
            if provided is not None:
                with self._lock:
                    self.languages.add(language)
                    self._entries[(key, language)] = provided
                return provided
        fallback = self._entries.get((key, REFERENCE_LANGUAGE))
        if fallback is not None:
            if language != REFERENCE_LANGUAGE:
                self.diagnostics.append(MissingTranslation(key, language))
            return fallback
        self.diagnostics.append(MissingTranslation(key, language))
        return key

    def completeness_check(self) -> list[tuple[str, str]]:
        """Every (key, language) pair absent across the supported languages."""
        missing = []
        for key in sorted(self.keys):
            for lang in sorted(self.languages):
                if (key, lang) not in self._entries:
                    missing.append((key, lang))
        return missing


def parse_table(text: str, languages: Iterable[str] = ()) -> TranslationTable:
    """Parse the tab-separated table format: `key<TAB>lang<TAB>text` per line.

    Blank lines and lines starting with `#` are skipped.
    """
    table = TranslationTable(languages or ("en", "ja"))
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ValueError(f"line {line_no}: expected key<TAB>lang<TAB>text, got {line!r}")
        key, lang, value = parts
        table.add(key, lang, value)
    return table


def load_table(path: str) -> TranslationTable:
    with open(path, encoding="utf-8") as f:
        return parse_table(f.read())


def bundled_table() -> TranslationTable:
    """The table shipped with the package, covering all UI keys in en + ja."""
    text = resources.files("datacube").joinpath("data/strings.tsv").read_text("utf-8")
    return parse_table(text)
