"""Prompt templates and output contracts for the agent roles.

Each role has a template producing the user message and a parser that
turns the model's reply back into typed data. Parsers are deliberately
forgiving about bullets and numbering but strict about the fields they
need; callers decide how many repair attempts a parse failure is worth.
"""

from __future__ import annotations

import re

from .errors import ExtractionError, MalformedRewriteError

TAG_VALUES = ("S", "P", "Pe", "Pr", "E")

CHAIN_EXTRACTOR_TEMPLATE = """You are analyzing a scientific figure from a research paper.

Caption:
{caption}

Surrounding text:
{context}

Derive the most comprehensive reasoning chain that this figure supports,
as ordered steps over these components: Structure (S), Property (P),
Performance (Pe), Processing (Pr), Environment (E). The chain must end at
a Performance (Pe) step.

Output one step per line, in order, formatted exactly as:
TAG: statement
where TAG is one of S, P, Pe, Pr, E. No other text."""

QUESTION_WRITER_TEMPLATE = """Write one {task} multiple-choice question grounded in this figure.

Caption:
{caption}

Reasoning chain (in order):
{chain}

The question must require reading the figure and must target the chain's
structure-to-performance relation in the {task} mode. Provide exactly one
correct answer and at least three plausible, mutually distinct distractors.

Output format, one field per line:
STEM: <the question>
CORRECT: <the correct answer>
DISTRACTOR: <a distractor>
DISTRACTOR: <a distractor>
DISTRACTOR: <a distractor>"""

EVALUATOR_SUFFIX = ('Think step by step, then state your final choice as '
                    '"the answer is N" where N is the option number.')

TEXT_ONLY_EVAL_TEMPLATE = """Answer this multiple-choice question. No figure is provided.

{stem}

Options:
{options}

""" + EVALUATOR_SUFFIX

CAPTION_ONLY_EVAL_TEMPLATE = """Answer this multiple-choice question. No figure is provided,
but its caption is.

Caption:
{caption}

{stem}

Options:
{options}

""" + EVALUATOR_SUFFIX

REPROMPT_SUFFIX = ('\n\nYour previous reply did not state a final choice. Reply again and '
                   'end with "the answer is N".')

REFLECTOR_TEMPLATE = """A model answered the following question correctly without seeing
the figure ({mode} inputs only). Its reasoning was:

{cot}

In one imperative sentence, state which textual cue enabled the answer,
so a rewriter can remove that cue."""

REWRITER_TEMPLATE = """Rewrite this multiple-choice question to remove a shortcut.

Shortcut strategy to invalidate:
{strategy}

Current question:
STEM: {stem}
{options}

Rules: {rules}
Keep exactly one correct answer with the same meaning as option {answer_index}.

Output format, one field per line:
STEM: <the rewritten question>
CORRECT: <the rewritten correct answer>
{distractor_lines}"""

REWRITE_RULES = {
    "text_only": ("preserve the scientific question being asked; remove give-away wording "
                  "from the stem and options"),
    "caption_only": ("the question may be restructured, but it must still test the same "
                     "reasoning chain from structure to performance and must not be "
                     "answerable from the caption alone"),
}

CHECKER_TEMPLATE = """Compare two versions of a multiple-choice question.

ORIGINAL STEM: {orig_stem}
ORIGINAL CORRECT: {orig_correct}

REWRITTEN STEM: {new_stem}
REWRITTEN CORRECT: {new_correct}

{criterion}

Reply with exactly one line: PASS, or FAIL: <short reason>."""

CHECKER_CRITERIA = {
    "text_only": ("Decide whether the rewritten correct answer is semantically equivalent "
                  "to the original and the stem still asks the same scientific question."),
    "caption_only": ("Decide whether the rewritten question and answer still instantiate "
                     "the same structure-to-performance reasoning chain:\n{chain}"),
}


# --------------------------------------------------------------------------
# Parsers
# --------------------------------------------------------------------------

_BULLET_RE = re.compile(r"^\s*(?:[-*•]|\d+[.)])\s*")
_TAGGED_LINE_RE = re.compile(r"^(S|P|Pe|Pr|E)\s*:\s*(.+)$", re.IGNORECASE)
_TRAILING_TAG_RE = re.compile(r"^(.*\S)\s*\((S|P|Pe|Pr|E)\)\s*[.;]?\s*$", re.IGNORECASE)

_CANON_TAG = {t.lower(): t for t in TAG_VALUES}


def parse_chain_steps(text: str) -> list[tuple[str | None, str]]:
    """Parse extractor output into (tag | None, statement) pairs.

    Accepts "TAG: statement" lines and the trailing "(TAG)" idiom; bullets
    and numbering are stripped. Raises when no step can be read at all.
    """
    steps: list[tuple[str | None, str]] = []
    for line in text.splitlines():
        line = _BULLET_RE.sub("", line.strip())
        if not line:
            continue
        m = _TAGGED_LINE_RE.match(line)
        if m:
            steps.append((_CANON_TAG[m.group(1).lower()], m.group(2).strip()))
            continue
        m = _TRAILING_TAG_RE.match(line)
        if m:
            steps.append((_CANON_TAG[m.group(2).lower()], m.group(1).strip()))
            continue
        steps.append((None, line))
    if not steps:
        raise ExtractionError("no reasoning steps found in output", text)
    return steps


_FIELD_RE = re.compile(r"^(STEM|CORRECT|DISTRACTOR)\s*:\s*(.*)$", re.IGNORECASE)


def parse_draft(text: str) -> tuple[str, str, list[str]]:
    """Parse STEM/CORRECT/DISTRACTOR fields. Returns (stem, correct, distractors)."""
    stem = None
    correct = None
    distractors: list[str] = []
    for line in text.splitlines():
        m = _FIELD_RE.match(line.strip())
        if not m:
            continue
        key, value = m.group(1).upper(), m.group(2).strip()
        if key == "STEM":
            stem = value
        elif key == "CORRECT":
            correct = value
        elif value:
            distractors.append(value)
    if not stem or not correct:
        raise ExtractionError("draft output missing STEM or CORRECT field", text)
    return stem, correct, distractors


def parse_rewrite(text: str) -> tuple[str, str, list[str]]:
    """Same field contract as a draft, but failures are rewrite-attempt errors."""
    try:
        return parse_draft(text)
    except ExtractionError as e:
        raise MalformedRewriteError(str(e), text)


_CHECKER_RE = re.compile(r"^\s*(PASS|FAIL)\s*(?::\s*(.*))?\s*$", re.IGNORECASE)


def parse_checker(text: str) -> tuple[bool, str]:
    """Parse a PASS/FAIL verdict line. Returns (passed, reason)."""
    for line in text.splitlines():
        m = _CHECKER_RE.match(line)
        if m:
            passed = m.group(1).upper() == "PASS"
            return passed, (m.group(2) or "").strip()
    raise ExtractionError("checker output carries no PASS/FAIL verdict", text)


def render_options(options) -> str:
    return "\n".join(f"{i}. {opt}" for i, opt in enumerate(options, start=1))
