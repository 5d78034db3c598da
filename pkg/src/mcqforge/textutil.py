"""Lexical helpers: tokenization, stopword filtering, overlap scoring,
and paragraph segmentation with character spans.

The overlap metric is a set-based token F1 over lowercased content tokens.
It is deliberately transparent so evidence verdicts stay auditable, and it
is monotone: adding a token that increases the intersection never lowers
the score.
"""

from __future__ import annotations

import re

_TOKEN_RE = re.compile(r"[0-9A-Za-z_°µ%]+")

# Minimal English stopword list; enough to keep overlap scores from being
# dominated by function words without dragging in an NLP dependency.
STOPWORDS = frozenset(
    """a an and are as at be been but by for from had has have if in into is it
    its not of on or so such that the their then there these this those to was
    were which while will with we our they he she you your i
    """.split()
)


def tokenize(text: str) -> list[str]:
    """Lowercased word tokens in order of appearance."""
    return [t.lower() for t in _TOKEN_RE.findall(text)]


def content_tokens(text: str) -> set[str]:
    """Token set with stopwords removed."""
    return {t for t in tokenize(text) if t not in STOPWORDS}


def token_f1(a: str, b: str) -> float:
    """Set-based F1 between the content tokens of two strings, in [0, 1].

    Both empty counts as full overlap (nothing to distinguish); exactly one
    empty counts as none.
    """
    ta, tb = content_tokens(a), content_tokens(b)
    if not ta and not tb:
        return 1.0
    if not ta or not tb:
        return 0.0
    inter = len(ta & tb)
    if inter == 0:
        return 0.0
    precision = inter / len(tb)
    recall = inter / len(ta)
    return 2 * precision * recall / (precision + recall)


def paragraph_spans(body_text: str) -> list[tuple[int, int]]:
    """(start, end) character spans of blank-line-separated paragraphs.

    Spans slice body_text exactly: body_text[start:end] is the paragraph
    with edge whitespace stripped but interior newlines intact.
    """
    spans: list[tuple[int, int]] = []
    pos = 0
    for block in re.split(r"\n\s*\n", body_text):
        idx = body_text.index(block, pos)
        stripped = block.strip()
        if stripped:
            lead = len(block) - len(block.lstrip())
            start = idx + lead
            spans.append((start, start + len(stripped)))
        pos = idx + len(block)
    return spans


def slice_span(body_text: str, span: tuple[int, int]) -> str:
    return body_text[span[0] : span[1]]
