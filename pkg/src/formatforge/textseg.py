"""Deterministic text segmentation rules shared by all checkers.

The rules are intentionally simple and fixed so that verdicts are
reproducible across runs and platforms:

- words are Unicode-whitespace-separated tokens (``str.split()``, no
  punctuation stripping);
- paragraphs are maximal blocks of non-blank lines (a blank line is a
  line that is empty or whitespace-only);
- sentences end at '.', '!' or '?' followed by whitespace or end of
  text, with a short fixed abbreviation list suppressing splits, and at
  the fullwidth terminators '。', '！', '？' unconditionally
  (CJK text does not put spaces after them).
"""

from __future__ import annotations

# Abbreviations whose trailing '.' never ends a sentence.
ABBREVIATIONS = ("e.g.", "i.e.", "Mr.", "Dr.", "etc.")

_ASCII_TERMINALS = ".!?"
_FULLWIDTH_TERMINALS = "。！？"  # 。！？


def words(text: str) -> list[str]:
    """Whitespace tokens of ``text``."""
    return text.split()


def word_count(text: str) -> int:
    return len(text.split())


def paragraphs(text: str) -> list[str]:
    """Blank-line-separated blocks, in order, with inner newlines kept."""
    blocks: list[str] = []
    current: list[str] = []
    for line in text.splitlines():
        if line.strip():
            current.append(line)
        elif current:
            blocks.append("\n".join(current))
            current = []
    if current:
        blocks.append("\n".join(current))
    return blocks


def _is_abbreviation(text: str, dot_index: int) -> bool:
    head = text[: dot_index + 1].lower()
    return any(head.endswith(abbr.lower()) for abbr in ABBREVIATIONS)


def sentences(text: str) -> list[str]:
    """Split ``text`` into sentences under the fixed terminator rule.

    A trailing fragment without a terminator counts as a sentence, so
    counting stays meaningful for responses that stop abruptly.
    """
    out: list[str] = []
    start = 0
    n = len(text)
    for i, ch in enumerate(text):
        split_here = False
        if ch in _FULLWIDTH_TERMINALS:
            split_here = True
        elif ch in _ASCII_TERMINALS and (i + 1 == n or text[i + 1].isspace()):
            split_here = not (ch == "." and _is_abbreviation(text, i))
        if split_here:
            segment = text[start : i + 1].strip()
            if segment:
                out.append(segment)
            start = i + 1
    tail = text[start:].strip()
    if tail:
        out.append(tail)
    return out


def sentences_per_paragraph(text: str) -> list[int]:
    return [len(sentences(block)) for block in paragraphs(text)]
