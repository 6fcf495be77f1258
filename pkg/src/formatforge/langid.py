"""Dependency-free language identification for the five supported languages.

Strategy (deterministic, documented):

1. Any kana character marks the text as Japanese; Japanese also claims the
   CJK ideographs in that case.
2. With no kana present, CJK ideographs score for Chinese.
3. Latin-script languages (English, Spanish, French) are scored by counting
   word tokens that appear in a small per-language stopword table.
4. The detected language is the unique highest scorer; a tie or an all-zero
   score yields ``None`` (no plurality winner).

Adequate for well-formed single-language responses; a response mixing
languages passes only if the requested language still wins the plurality.
"""

from __future__ import annotations

import re

SUPPORTED_LANGUAGES = ("English", "Spanish", "French", "Chinese", "Japanese")

_WORD_RE = re.compile(r"[^\W\d_]+", re.UNICODE)

_KANA_RANGES = ((0x3040, 0x309F), (0x30A0, 0x30FF))
_IDEOGRAPH_RANGES = ((0x4E00, 0x9FFF), (0x3400, 0x4DBF))

STOPWORDS: dict[str, frozenset[str]] = {
    "English": frozenset(
        """the and of to in is are was were be been this that these those it its
        with for not have has had will would can could should there here what
        which who when where why how all any some more most other such only
        about into than then you your they them their we our from has does did
        also just very much own same each both during after before while"""
        .split()
    ),
    "Spanish": frozenset(
        """el la los las un una unos unas y o pero si de del al en con por para
        como que es son era eran ser estar esta estan fue han ha hay lo le les
        se su sus mi tu te me nos yo ella ellos ellas usted no muy mas tambien
        cuando donde porque sobre entre hasta desde este esos esas todo todos
        pregunta respuesta facil sencilla puntos principales"""
        .split()
    ),
    "French": frozenset(
        """le la les un une des du et ou mais si aux dans sur pour par avec
        sans comme que qui quoi est sont etait etaient etre avoir ont il elle
        ils elles nous vous je tu on ne pas plus tres aussi quand parce cette
        ce ces son sa ses leur leurs voici reponse question facile simple
        points essentiels elle couvre lire tous"""
        .split()
    ),
}


def _count_in_ranges(text: str, ranges: tuple[tuple[int, int], ...]) -> int:
    total = 0
    for ch in text:
        code = ord(ch)
        for lo, hi in ranges:
            if lo <= code <= hi:
                total += 1
                break
    return total


def _strip_accents(token: str) -> str:
    # Keeps the tables ASCII; NFD decomposition then combining-mark removal.
    import unicodedata

    decomposed = unicodedata.normalize("NFD", token)
    return "".join(ch for ch in decomposed if not unicodedata.combining(ch))


def language_scores(text: str) -> dict[str, int]:
    """Per-language evidence counts used by :func:`detect_language`."""
    kana = _count_in_ranges(text, _KANA_RANGES)
    ideographs = _count_in_ranges(text, _IDEOGRAPH_RANGES)
    scores = {
        "Japanese": kana + (ideographs if kana else 0),
        "Chinese": ideographs if kana == 0 else 0,
        "English": 0,
        "Spanish": 0,
        "French": 0,
    }
    tokens = [_strip_accents(tok.lower()) for tok in _WORD_RE.findall(text)]
    for token in tokens:
        for language, table in STOPWORDS.items():
            if token in table:
                scores[language] += 1
    return scores


def detect_language(text: str) -> str | None:
    """Unique plurality winner over :func:`language_scores`, else ``None``."""
    scores = language_scores(text)
    best = max(scores.values())
    if best == 0:
        return None
    winners = [lang for lang, score in scores.items() if score == best]
    if len(winners) != 1:
        return None
    return winners[0]
