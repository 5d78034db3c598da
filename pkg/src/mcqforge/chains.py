"""Reasoning-chain extraction and evidence verification.

A chain is an ordered list of typed steps over the five materials
components (Structure, Property, Performance, Processing, Environment).
Every step must be grounded in the paper body by lexical-overlap evidence,
and every chain must terminate at a Performance step. Chains that fail
validation are quarantined with their violations, never dropped silently.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Sequence

from .errors import ExtractionError, PreconditionError, ValidationError
from .gateway import Gateway
from .prompts import CHAIN_EXTRACTOR_TEMPLATE, parse_chain_steps
from .textutil import content_tokens, paragraph_spans, slice_span, token_f1

log = logging.getLogger(__name__)

DEFAULT_THETA = 0.35
DEFAULT_TOP_K = 3
REPAIR_ATTEMPTS = 2  # re-prompts after an unparseable extraction


class ComponentTag(str, Enum):
    S = "S"    # Structure
    P = "P"    # Property
    Pe = "Pe"  # Performance
    Pr = "Pr"  # Processing
    E = "E"    # Environment


@dataclass(frozen=True)
class ReasoningStep:
    index: int
    component: ComponentTag
    statement: str
    evidence: tuple[tuple[tuple[int, int], float], ...] = ()  # (char_span, overlap)
    verified: bool = False

    def __post_init__(self):
        if not self.statement.strip():
            raise PreconditionError("step statement must be non-empty")


@dataclass(frozen=True)
class ReasoningChain:
    figure_id: str
    steps: tuple[ReasoningStep, ...]
    lexicon_version: str

    @property
    def chain_id(self) -> str:
        payload = json.dumps(
            [self.figure_id, self.lexicon_version,
             [[s.component.value, s.statement] for s in self.steps]],
            sort_keys=True, separators=(",", ":"), ensure_ascii=False)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]

    def terminal(self) -> ReasoningStep:
        return self.steps[-1]

    def statements_for(self, tag: ComponentTag) -> list[str]:
        return [s.statement for s in self.steps if s.component == tag]

    def summary(self) -> str:
        return " -> ".join(f"{s.statement} ({s.component.value})" for s in self.steps)


# --------------------------------------------------------------------------
# Term lexicon (flat term -> component-tag mapping)
# --------------------------------------------------------------------------


@dataclass
class TermLexicon:
    version: str
    terms: dict[str, ComponentTag]  # lowercase term -> tag

    def assign_tag(self, statement: str) -> ComponentTag | None:
        """Majority vote of matched lexicon terms; ties break in tag order."""
        counts = {tag: 0 for tag in ComponentTag}
        toks = content_tokens(statement)
        for term, tag in self.terms.items():
            term_parts = term.split()
            if len(term_parts) == 1:
                if term in toks:
                    counts[tag] += 1
            elif term in statement.lower():
                counts[tag] += 1
        best = max(counts.values())
        if best == 0:
            return None
        for tag in ComponentTag:  # deterministic tie-break
            if counts[tag] == best:
                return tag
        return None


def load_lexicon(path: str | Path) -> TermLexicon:
    """Lexicon file: JSONL with a {"kind": "lexicon", "version": …} header."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ValidationError(f"empty lexicon file: {path}")
    header = json.loads(lines[0])
    if header.get("kind") != "lexicon" or "version" not in header:
        raise ValidationError(f"lexicon file missing versioned header: {path}")
    terms: dict[str, ComponentTag] = {}
    for n, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        obj = json.loads(line)
        try:
            terms[obj["term"].lower()] = ComponentTag(obj["tag"])
        except (KeyError, ValueError) as e:
            raise ValidationError(f"bad lexicon entry at {path}:{n}: {e}")
    return TermLexicon(version=str(header["version"]), terms=terms)


def default_lexicon_path() -> Path:
    return Path(__file__).parent / "data" / "components.lexicon"


# --------------------------------------------------------------------------
# Operations
# --------------------------------------------------------------------------


def extract_chain(figure, context: Sequence, body_text: str, lexicon: TermLexicon,
                  gateway: Gateway) -> ReasoningChain:
    """Ask the extractor role for a chain; repair unparseable output twice.

    Tags in the model output win; untagged statements fall back to the
    lexicon's term mapping. A statement neither tagged nor mappable is a
    parse failure and burns a repair attempt.
    """
    if not figure.caption.strip():
        raise PreconditionError("figure caption required for chain extraction")
    if not context:
        raise PreconditionError("at least one context snippet required")
    context_text = "\n\n".join(s.text for s in context)
    prompt = CHAIN_EXTRACTOR_TEMPLATE.format(caption=figure.caption, context=context_text)
    messages = [("user", prompt)]
    last_error = None
    for attempt in range(1 + REPAIR_ATTEMPTS):
        response = gateway.chat("chain_extractor", messages)
        try:
            parsed = parse_chain_steps(response.text)
            steps = []
            for i, (tag, statement) in enumerate(parsed, start=1):
                if tag is None:
                    assigned = lexicon.assign_tag(statement)
                    if assigned is None:
                        raise ExtractionError(
                            f"step {i} has no component tag and no lexicon term matches",
                            response.text)
                    component = assigned
                else:
                    component = ComponentTag(tag)
                steps.append(ReasoningStep(index=i, component=component, statement=statement))
            return ReasoningChain(figure_id=figure.figure_id, steps=tuple(steps),
                                  lexicon_version=lexicon.version)
        except ExtractionError as e:
            last_error = e
            log.warning("chain extraction parse failure (attempt %d): %s", attempt + 1, e)
            messages = [
                ("user", prompt),
                ("assistant", response.text),
                ("user", f"That output was unusable ({e}). Re-emit the chain, one "
                         "'TAG: statement' line per step, nothing else."),
            ]
    raise last_error


def verify_step(step: ReasoningStep, body_text: str, theta: float = DEFAULT_THETA,
                top_k: int = DEFAULT_TOP_K) -> ReasoningStep:
    """Attach top-k body paragraphs by token F1 and set the verdict.

    Zero-overlap spans are not evidence; a statement sharing no content
    tokens with the body comes back unverified with empty evidence.
    """
    if not body_text.strip():
        raise PreconditionError("body_text must be non-empty")
    spans = paragraph_spans(body_text)
    scored = []
    for span in spans:
        score = token_f1(step.statement, slice_span(body_text, span))
        if score > 0.0:
            scored.append((span, score))
    scored.sort(key=lambda pair: (-pair[1], pair[0][0]))
    evidence = tuple(scored[:top_k])
    verified = bool(evidence) and evidence[0][1] >= theta
    return replace(step, evidence=evidence, verified=verified)


def verify_chain(chain: ReasoningChain, body_text: str, theta: float = DEFAULT_THETA,
                 top_k: int = DEFAULT_TOP_K) -> ReasoningChain:
    return replace(chain, steps=tuple(
        verify_step(s, body_text, theta, top_k) for s in chain.steps))


def validate_chain(chain: ReasoningChain) -> list[str]:
    """Return invariant violations; an empty list means the chain is ok."""
    violations = []
    if len(chain.steps) < 2:
        violations.append(f"length < 2 (got {len(chain.steps)})")
    if chain.steps and chain.steps[-1].component != ComponentTag.Pe:
        violations.append(f"terminal not Pe (got {chain.steps[-1].component.value})")
    for step in chain.steps:
        if not step.verified:
            violations.append(f"unverified step {step.index}")
    return violations


# --------------------------------------------------------------------------
# Serialization (chain store keeps one record per figure)
# --------------------------------------------------------------------------


def chain_to_json(chain: ReasoningChain) -> dict:
    return {
        "chain_id": chain.chain_id,
        "figure_id": chain.figure_id,
        "lexicon_version": chain.lexicon_version,
        "steps": [
            {
                "index": s.index,
                "component": s.component.value,
                "statement": s.statement,
                "evidence": [[list(span), score] for span, score in s.evidence],
                "verified": s.verified,
            }
            for s in chain.steps
        ],
    }


def chain_from_json(obj: dict) -> ReasoningChain:
    return ReasoningChain(
        figure_id=obj["figure_id"],
        lexicon_version=obj["lexicon_version"],
        steps=tuple(
            ReasoningStep(
                index=s["index"],
                component=ComponentTag(s["component"]),
                statement=s["statement"],
                evidence=tuple((tuple(span), score) for span, score in s["evidence"]),
                verified=s["verified"],
            )
            for s in obj["steps"]
        ),
    )
