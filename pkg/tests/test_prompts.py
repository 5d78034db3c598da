import pytest

from mcqforge.errors import ExtractionError, MalformedRewriteError
from mcqforge.prompts import (
    parse_chain_steps,
    parse_checker,
    parse_draft,
    parse_rewrite,
    render_options,
)


def test_parse_chain_steps_tagged_lines():
    out = "E: applied field\nS: split satellites\nPe: doubled intensity"
    assert parse_chain_steps(out) == [("E", "applied field"), ("S", "split satellites"),
                                      ("Pe", "doubled intensity")]


def test_parse_chain_steps_trailing_parenthetical():
    out = "1. 10 T magnetic field (E)\n2. doubling the peak intensity (Pe)"
    assert parse_chain_steps(out) == [("E", "10 T magnetic field"),
                                      ("Pe", "doubling the peak intensity")]


def test_parse_chain_steps_bullets_and_untagged():
    out = "- S: grain refinement\n* some untagged statement\n"
    assert parse_chain_steps(out) == [("S", "grain refinement"),
                                      (None, "some untagged statement")]


def test_parse_chain_steps_case_insensitive_tags():
    assert parse_chain_steps("pe: outcome")[0][0] == "Pe"
    assert parse_chain_steps("pr: anneal")[0][0] == "Pr"


def test_parse_chain_steps_empty_raises():
    with pytest.raises(ExtractionError):
        parse_chain_steps("\n  \n")


def test_parse_draft_fields():
    out = ("STEM: What changes?\nCORRECT: intensity doubles\n"
           "DISTRACTOR: it halves\nDISTRACTOR: nothing\nDISTRACTOR: it vanishes")
    stem, correct, distractors = parse_draft(out)
    assert stem == "What changes?"
    assert correct == "intensity doubles"
    assert distractors == ["it halves", "nothing", "it vanishes"]


def test_parse_draft_missing_stem():
    with pytest.raises(ExtractionError):
        parse_draft("CORRECT: x\nDISTRACTOR: y")


def test_parse_rewrite_wraps_as_malformed():
    with pytest.raises(MalformedRewriteError):
        parse_rewrite("no fields at all")


def test_parse_checker_pass_and_fail():
    assert parse_checker("PASS") == (True, "")
    assert parse_checker("FAIL: answer divergence") == (False, "answer divergence")
    assert parse_checker("thinking...\npass\n") == (True, "")
    with pytest.raises(ExtractionError):
        parse_checker("maybe?")


def test_render_options_numbering():
    assert render_options(["a", "b", "c"]) == "1. a\n2. b\n3. c"
