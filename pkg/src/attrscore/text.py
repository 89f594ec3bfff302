"""Small text helpers shared by metrics, grounding, and the mock provider."""

from __future__ import annotations

import re

_WORD_RE = re.compile(r"[^\W_]+", re.UNICODE)
_SENTENCE_SPLIT_RE = re.compile(r"(?<=[.!?])\s+|\n+")


def words(text: str) -> list[str]:
    """Lowercased alphanumeric runs."""
    return _WORD_RE.findall(text.lower())


def jaccard_words(a: str, b: str) -> float:
    """Word-set Jaccard overlap; two empty sets count as identical."""
    wa, wb = set(words(a)), set(words(b))
    if not wa and not wb:
        return 1.0
    if not wa or not wb:
        return 0.0
    return len(wa & wb) / len(wa | wb)


def split_sentences(text: str) -> list[str]:
    """Split on sentence punctuation and newlines; pieces stay verbatim
    substrings of the input (modulo stripped edges)."""
    return [p.strip() for p in _SENTENCE_SPLIT_RE.split(text) if p.strip()]


def _collapse(text: str) -> tuple[str, list[int]]:
    """Collapse whitespace runs to single spaces.

    Returns the collapsed string and, per collapsed character, the index of
    the corresponding character in the original text (whitespace runs map to
    their first character).
    """
    out: list[str] = []
    positions: list[int] = []
    in_ws = False
    for i, ch in enumerate(text):
        if ch.isspace():
            if not in_ws:
                out.append(" ")
                positions.append(i)
                in_ws = True
        else:
            out.append(ch)
            positions.append(i)
            in_ws = False
    return "".join(out), positions


def normalized_find(document: str, span: str) -> tuple[int, int] | None:
    """Locate ``span`` in ``document`` under whitespace normalization.

    Runs of whitespace compare equal to a single space; case is preserved.
    Returns (start, end) character offsets into the *original* document
    (end exclusive) for the first occurrence, or None.
    """
    doc_norm, positions = _collapse(document)
    span_norm, _ = _collapse(span)
    span_norm = span_norm.strip()
    if not span_norm:
        return None
    idx = doc_norm.find(span_norm)
    if idx < 0:
        return None
    start = positions[idx]
    last = idx + len(span_norm) - 1
    last_orig = positions[last]
    # a collapsed whitespace char maps to the first char of its run; the
    # match still ends at that single character in the original text
    return start, last_orig + 1
