import json

import pytest

from conftest import make_verified_chain
from mcqforge.chains import (
    ComponentTag,
    ReasoningChain,
    ReasoningStep,
    TermLexicon,
    chain_from_json,
    chain_to_json,
    default_lexicon_path,
    extract_chain,
    load_lexicon,
    validate_chain,
    verify_chain,
    verify_step,
)
from mcqforge.corpus import ContextSnippet, FigureAsset
from mcqforge.errors import ExtractionError, PreconditionError, ValidationError
from mcqforge.gateway import Gateway, ScriptedBackend
from mcqforge.textutil import paragraph_spans, slice_span, token_f1


def figure(caption="A test caption.", figure_id="fig1"):
    return FigureAsset(figure_id=figure_id, image_path="images/x.png",
                       content_hash="0" * 64, caption=caption)


def snippets(*texts):
    return tuple(ContextSnippet(text=t, char_span=(0, len(t)), distance=0) for t in texts)


def gateway_for(script):
    return Gateway(ScriptedBackend({"chain_extractor": script}))


EXEMPLAR_BODY = """Background on multiferroic compounds and their ordering.

We applied a 10 T magnetic field to the sample during the scattering runs.

Under the field we observed the collapse of the split magnetic Bragg satellites into a single peak.

This signals suppression of the spin-cycloid and emergence of a collinear antiferromagnetic state.

The result is a redistribution of the total magnetic scattering into one commensurate reflection, doubling the peak intensity.

Unrelated closing paragraph about acknowledgements and funding.
"""

EXEMPLAR_SCRIPT = """E: 10 T magnetic field
S: collapse of the split magnetic Bragg satellites into a single peak
P: suppression of the spin-cycloid and emergence of a collinear antiferromagnetic state
Pe: redistribution of the total magnetic scattering into one commensurate reflection, doubling the peak intensity"""


def test_extract_exemplar_chain_valid():
    lexicon = load_lexicon(default_lexicon_path())
    chain = extract_chain(figure(), snippets("context about the field experiment"),
                          EXEMPLAR_BODY, lexicon, gateway_for(EXEMPLAR_SCRIPT))
    assert [s.component for s in chain.steps] == [ComponentTag.E, ComponentTag.S,
                                                  ComponentTag.P, ComponentTag.Pe]
    chain = verify_chain(chain, EXEMPLAR_BODY)
    assert validate_chain(chain) == []
    for step in chain.steps:
        assert step.verified
        span, score = step.evidence[0]
        assert EXEMPLAR_BODY[span[0]:span[1]] == slice_span(EXEMPLAR_BODY, span)
        assert score >= 0.35


def test_extract_requires_caption_and_context():
    lexicon = load_lexicon(default_lexicon_path())
    with pytest.raises(PreconditionError):
        extract_chain(figure(caption="  "), snippets("x"), "body", lexicon,
                      gateway_for("S: a\nPe: b"))
    with pytest.raises(PreconditionError):
        extract_chain(figure(), (), "body", lexicon, gateway_for("S: a\nPe: b"))


def test_extract_repairs_unparseable_output_once():
    calls = {"n": 0}

    def script(request):
        calls["n"] += 1
        if calls["n"] == 1:
            return "zzz qqq www"  # untaggable: no tags, no lexicon terms
        return "S: grain boundary\nPe: strength rises"

    lexicon = load_lexicon(default_lexicon_path())
    chain = extract_chain(figure(), snippets("ctx"), "body", lexicon, gateway_for(script))
    assert calls["n"] == 2
    assert [s.component.value for s in chain.steps] == ["S", "Pe"]


def test_extract_fails_after_repair_budget():
    backend = ScriptedBackend({"chain_extractor": "zzz qqq"})
    lexicon = load_lexicon(default_lexicon_path())
    with pytest.raises(ExtractionError) as e:
        extract_chain(figure(), snippets("ctx"), "body", lexicon, Gateway(backend))
    assert backend.calls_for("chain_extractor") == 3  # initial + 2 repairs
    assert "zzz" in e.value.raw_output


def test_untagged_statements_take_lexicon_tags():
    # every content noun of each statement sits under one component
    script = ("grain boundary and lattice distortion\n"
              "conductivity and mobility rise\n"
              "efficiency and capacity improve")
    lexicon = load_lexicon(default_lexicon_path())
    chain = extract_chain(figure(), snippets("ctx"), "body", lexicon, gateway_for(script))
    got = [s.component.value for s in chain.steps]
    # independent hand lookup against the packaged lexicon
    hand = {"grain": "S", "boundary": "S", "lattice": "S",
            "conductivity": "P", "mobility": "P",
            "efficiency": "Pe", "capacity": "Pe"}
    expected = []
    for line in script.splitlines():
        votes = [hand[w] for w in line.split() if w in hand]
        assert len(set(votes)) == 1
        expected.append(votes[0])
    assert got == expected


def test_lexicon_tie_breaks_in_tag_order():
    lex = TermLexicon(version="t", terms={"lattice": ComponentTag.S,
                                          "annealing": ComponentTag.Pr})
    assert lex.assign_tag("lattice annealing") == ComponentTag.S
    assert lex.assign_tag("nothing known") is None


def test_lexicon_multiword_term():
    lex = TermLexicon(version="t", terms={"magnetic field": ComponentTag.E})
    assert lex.assign_tag("a strong magnetic field was applied") == ComponentTag.E
    assert lex.assign_tag("magnetic moments in zero field order") is None


# --------------------------------------------------------------------------
# verification
# --------------------------------------------------------------------------


def test_verify_verbatim_statement_scores_one():
    body = "Filler paragraph first.\n\nThe doubled peak intensity persists at low temperature.\n"
    step = ReasoningStep(index=1, component=ComponentTag.Pe,
                         statement="The doubled peak intensity persists at low temperature.")
    out = verify_step(step, body)
    assert out.verified
    assert out.evidence[0][1] == 1.0
    span = out.evidence[0][0]
    assert body[span[0]:span[1]] == "The doubled peak intensity persists at low temperature."


def test_verify_disjoint_statement_unverified_empty_evidence():
    body = "Only chemistry words here: solvent, reflux, titration.\n"
    step = ReasoningStep(index=1, component=ComponentTag.S, statement="zebra quantum xylophone")
    out = verify_step(step, body)
    assert not out.verified
    assert out.evidence == ()


def test_verify_threshold_boundary():
    body = "alpha beta gamma delta\n\ncompletely different words\n"
    step = ReasoningStep(index=1, component=ComponentTag.S, statement="alpha beta zzz qqq")
    out = verify_step(step, body, theta=0.5)
    # F1 vs first paragraph: inter 2, p 2/4, r 2/4 -> 0.5 exactly: verified at theta=0.5
    assert out.evidence[0][1] == pytest.approx(0.5)
    assert out.verified
    assert not verify_step(step, body, theta=0.51).verified


def test_verify_deterministic():
    body = EXEMPLAR_BODY
    step = ReasoningStep(index=1, component=ComponentTag.S,
                         statement="split magnetic satellites collapse")
    assert verify_step(step, body) == verify_step(step, body)


def test_verify_top_k_matches_brute_force_all_pairs():
    paragraphs = [
        "grain growth accelerates at high temperature",
        "the lattice constant shrinks under pressure",
        "peak intensity doubles when satellites collapse",
        "conductivity rises with carrier mobility",
        "the sample was annealed in vacuum overnight",
    ]
    body = "\n\n".join(paragraphs) + "\n"
    statements = [
        "grain growth at temperature",
        "lattice constant under pressure",
        "satellites collapse into one peak",
        "carrier mobility and conductivity",
        "annealed in vacuum",
        "peak intensity doubles",
        "growth of grains",
        "pressure shrinks the lattice",
        "vacuum overnight anneal",
        "intensity of the doubled peak",
    ]
    spans = paragraph_spans(body)
    for text in statements:
        step = ReasoningStep(index=1, component=ComponentTag.S, statement=text)
        got = verify_step(step, body, top_k=3).evidence
        # exhaustive all-pairs oracle with the same tie rule
        scored = [(span, token_f1(text, slice_span(body, span))) for span in spans]
        scored = [(span, s) for span, s in scored if s > 0]
        scored.sort(key=lambda pair: (-pair[1], pair[0][0]))
        assert got == tuple(scored[:3])


# --------------------------------------------------------------------------
# validation and round-trip
# --------------------------------------------------------------------------


def test_validate_rejects_p_terminal():
    chain = make_verified_chain(statements=[("E", "field applied"), ("P", "state changes")])
    violations = validate_chain(chain)
    assert any("terminal not Pe" in v for v in violations)


def test_validate_rejects_short_chain():
    chain = make_verified_chain(statements=[("Pe", "outcome improves")])
    assert any("length < 2" in v for v in validate_chain(chain))


def test_validate_names_unverified_step():
    good = make_verified_chain()
    bad_step = ReasoningStep(index=2, component=ComponentTag.S,
                             statement="unsupported claim", verified=False)
    chain = ReasoningChain(figure_id="f", steps=(good.steps[0], bad_step, good.steps[2]),
                           lexicon_version="t")
    assert "unverified step 2" in validate_chain(chain)


def test_validate_ok_round_trips_through_serialization():
    chain = make_verified_chain()
    assert validate_chain(chain) == []
    back = chain_from_json(json.loads(json.dumps(chain_to_json(chain))))
    assert validate_chain(back) == []
    assert back.chain_id == chain.chain_id
    assert back == chain


def test_step_statement_must_be_non_empty():
    with pytest.raises(PreconditionError):
        ReasoningStep(index=1, component=ComponentTag.S, statement="   ")


def test_default_lexicon_loads():
    lexicon = load_lexicon(default_lexicon_path())
    assert lexicon.version == "matonto-flat-1"
    assert len(lexicon.terms) >= 60
    assert lexicon.terms["lattice"] == ComponentTag.S
    assert lexicon.terms["temperature"] == ComponentTag.E


def test_lexicon_requires_header(tmp_path):
    path = tmp_path / "lex.jsonl"
    path.write_text('{"term": "x", "tag": "S"}\n', encoding="utf-8")
    with pytest.raises(ValidationError):
        load_lexicon(path)
