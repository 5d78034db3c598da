"""Two-stage shortcut removal.

Stage 1 (text_only blind evaluation) strips language shortcuts: cues in
the stem or options that let a model answer without the figure. Stage 2
(caption_only) strips caption shortcuts. Each stage loops: evaluate blind;
if the evaluator fails, the shortcut is gone and the stage ends; otherwise
summarize the strategy that worked, rewrite to invalidate it, and accept
the rewrite only if a consistency check passes. Failed rewrites are
discarded and retried from the last checked-good item without advancing
the iteration counter, bounded by a per-iteration budget; exhausting the
budget quarantines the item rather than accepting an inconsistent rewrite.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum

from .chains import ComponentTag, ReasoningChain
from .errors import (
    ConfigurationError,
    ExtractionError,
    MalformedRewriteError,
    PreconditionError,
    RetryableError,
)
from .gateway import Gateway
from .harness import extract_answer
from .mcq import MCQItem, make_item
from .prompts import (
    CAPTION_ONLY_EVAL_TEMPLATE,
    CHECKER_CRITERIA,
    CHECKER_TEMPLATE,
    REFLECTOR_TEMPLATE,
    REPROMPT_SUFFIX,
    REWRITE_RULES,
    REWRITER_TEMPLATE,
    TEXT_ONLY_EVAL_TEMPLATE,
    parse_checker,
    parse_rewrite,
    render_options,
)
from .textutil import content_tokens, token_f1

log = logging.getLogger(__name__)

DEFAULT_T = 3
DEFAULT_REWRITE_BUDGET = 3
FALLBACK_F1_THRESHOLD = 0.6

TERMINAL_EVALUATOR_FAILED = "evaluator_failed"   # success: no shortcut left
TERMINAL_MAX_ITERATIONS = "max_iterations"
TERMINAL_MAX_REWRITE_ATTEMPTS = "max_rewrite_attempts"


class BlindMode(str, Enum):
    text_only = "text_only"        # stem + options, no image, no caption
    caption_only = "caption_only"  # stem + options + caption, no image


STAGE_PLAN = (("lang_removed", BlindMode.text_only),
              ("caption_removed", BlindMode.caption_only))


@dataclass
class BlindVerdict:
    choice: int | None
    correct: bool
    cot: str
    abstained: bool = False
    reprompted: bool = False


@dataclass
class RewriteAttempt:
    malformed: bool = False
    malformed_reason: str = ""
    stem: str | None = None
    options: tuple[str, ...] | None = None
    checker_passed: bool | None = None
    checker_reason: str = ""
    checker_source: str = ""  # "checker" or "fallback"
    adopted: bool = False


@dataclass
class IterationRecord:
    verdict: BlindVerdict
    strategy: str | None = None
    rewrites: list[RewriteAttempt] = field(default_factory=list)


@dataclass
class RefinementTrace:
    item_id: str  # the raw (root) item
    stage: str
    iterations: list[IterationRecord] = field(default_factory=list)
    terminal_reason: str | None = None

    def evaluator_calls(self) -> int:
        return len(self.iterations)

    def rewrite_attempts(self) -> int:
        return sum(len(it.rewrites) for it in self.iterations)


@dataclass
class RefinementResult:
    final_item: MCQItem | None  # None when quarantined
    snapshots: dict[str, MCQItem]
    traces: list[RefinementTrace]
    quarantined: bool = False
    quarantine_reason: str = ""


@dataclass
class CheckResult:
    passed: bool
    reason: str
    source: str  # "checker" or "fallback"


# --------------------------------------------------------------------------
# Role operations
# --------------------------------------------------------------------------


def evaluate_blind(item: MCQItem, mode: BlindMode, caption: str | None,
                   gateway: Gateway) -> BlindVerdict:
    """One blind evaluation under the mode's input restriction.

    An unextractable answer gets one reprompt; still nothing means abstain,
    which counts as incorrect (no shortcut demonstrated).
    """
    options_text = render_options(item.options)
    if mode is BlindMode.caption_only:
        if not caption:
            raise PreconditionError("caption_only evaluation requires a caption")
        prompt = CAPTION_ONLY_EVAL_TEMPLATE.format(
            caption=caption, stem=item.stem, options=options_text)
    else:
        prompt = TEXT_ONLY_EVAL_TEMPLATE.format(stem=item.stem, options=options_text)
    response = gateway.chat("evaluator", [("user", prompt)])
    choice = extract_answer(response.text, len(item.options))
    cot = response.text
    reprompted = False
    if choice is None:
        reprompted = True
        retry = gateway.chat("evaluator", [
            ("user", prompt),
            ("assistant", response.text),
            ("user", REPROMPT_SUFFIX.strip()),
        ])
        choice = extract_answer(retry.text, len(item.options))
        cot = retry.text
    abstained = choice is None
    return BlindVerdict(choice=choice, correct=(choice == item.answer_index),
                        cot=cot, abstained=abstained, reprompted=reprompted)


def derive_strategy(cot_text: str, mode: BlindMode, gateway: Gateway) -> str:
    """Summarize which textual cue enabled a correct blind answer."""
    if not cot_text.strip():
        return "unspecified textual cue"
    prompt = REFLECTOR_TEMPLATE.format(mode=mode.value, cot=cot_text)
    response = gateway.chat("reflector", [("user", prompt)])
    return response.text.strip() or "unspecified textual cue"


def rewrite_item(item: MCQItem, strategy: str, mode: BlindMode,
                 gateway: Gateway) -> tuple[str, tuple[str, ...]]:
    """Ask the rewriter for a revision; returns (stem, options).

    The correct option keeps its position (answer_index is unchanged);
    structurally unusable output is a malformed-rewrite error, which the
    caller counts as one spent attempt.
    """
    if not strategy.strip():
        raise PreconditionError("rewrite strategy must be non-empty")
    m = len(item.options)
    prompt = REWRITER_TEMPLATE.format(
        strategy=strategy,
        stem=item.stem,
        options=render_options(item.options),
        rules=REWRITE_RULES[mode.value],
        answer_index=item.answer_index,
        distractor_lines="\n".join("DISTRACTOR: <a distractor>" for _ in range(m - 1)),
    )
    response = gateway.chat("rewriter", [("user", prompt)])
    stem, correct, distractors = parse_rewrite(response.text)
    if len(distractors) < m - 1:
        raise MalformedRewriteError(
            f"rewrite produced {len(distractors)} distractors, need {m - 1}",
            response.text)
    options = list(distractors[:m - 1])
    options.insert(item.answer_index - 1, correct)
    if len(set(options)) != m:
        raise MalformedRewriteError("rewrite produced duplicate options", response.text)
    return stem, tuple(options)


def _chain_containment(stem: str, correct: str, chain: ReasoningChain) -> bool:
    # fallback for Stage 2: the rewrite must still mention the chain's
    # structure side and its performance terminal
    rewritten = content_tokens(stem + " " + correct)
    s_statements = chain.statements_for(ComponentTag.S) or [chain.steps[0].statement]
    s_ok = any(content_tokens(s) & rewritten for s in s_statements)
    pe_ok = bool(content_tokens(chain.terminal().statement) & rewritten)
    return s_ok and pe_ok


def check_consistency(original: MCQItem, rewritten_stem: str,
                      rewritten_options: tuple[str, ...], mode: BlindMode,
                      chain: ReasoningChain, gateway: Gateway) -> CheckResult:
    """LLM checker with a deterministic fallback.

    Stage 1 passes iff the rewritten correct answer stays semantically
    equivalent and the stem asks the same scientific question; Stage 2 is
    looser, requiring only that the same chain's S-to-Pe relation is still
    instantiated. The fallback covers checker outages: correct-answer
    token F1 for Stage 1, chain-term containment for Stage 2.
    """
    new_correct = rewritten_options[original.answer_index - 1]
    criterion = CHECKER_CRITERIA[mode.value]
    if mode is BlindMode.caption_only:
        criterion = criterion.format(chain=chain.summary())
    prompt = CHECKER_TEMPLATE.format(
        orig_stem=original.stem, orig_correct=original.correct_option,
        new_stem=rewritten_stem, new_correct=new_correct, criterion=criterion)
    try:
        response = gateway.chat("checker", [("user", prompt)])
        passed, reason = parse_checker(response.text)
        return CheckResult(passed=passed, reason=reason, source="checker")
    except (ConfigurationError, RetryableError, ExtractionError) as e:
        log.warning("checker unavailable (%s); using deterministic fallback", e)
    if mode is BlindMode.text_only:
        f1 = token_f1(original.correct_option, new_correct)
        return CheckResult(passed=f1 >= FALLBACK_F1_THRESHOLD,
                           reason=f"correct-answer token F1 = {f1:.2f}",
                           source="fallback")
    ok = _chain_containment(rewritten_stem, new_correct, chain)
    return CheckResult(passed=ok, reason="chain-term containment", source="fallback")


# --------------------------------------------------------------------------
# The per-item refinement loop
# --------------------------------------------------------------------------


def refine_item(item: MCQItem, chain: ReasoningChain, caption: str, gateway: Gateway,
                T: int = DEFAULT_T,
                rewrite_budget: int = DEFAULT_REWRITE_BUDGET) -> RefinementResult:
    """Run both stages on a raw item, emitting stage snapshots and traces.

    Per stage: while t < T, evaluate blind; an incorrect verdict ends the
    stage (shortcut eliminated). A correct verdict triggers reflect +
    rewrite + check; only a checked-good rewrite advances t. Checker
    failures retry from the last checked-good item within rewrite_budget;
    running out quarantines the item. Reaching t = T leaves the item in
    the dataset but marks the trace max_iterations.
    """
    if item.stage != "raw":
        raise PreconditionError(f"refine_item starts from stage raw, got {item.stage!r}")
    if T < 1 or rewrite_budget < 1:
        raise PreconditionError("T and rewrite_budget must be >= 1")

    snapshots: dict[str, MCQItem] = {"raw": item}
    traces: list[RefinementTrace] = []
    working = item
    prev_snapshot = item

    for stage_label, mode in STAGE_PLAN:
        trace = RefinementTrace(item_id=item.item_id, stage=stage_label)
        traces.append(trace)
        t = 0
        while t < T:
            verdict = evaluate_blind(working, mode, caption, gateway)
            iteration = IterationRecord(verdict=verdict)
            trace.iterations.append(iteration)
            if not verdict.correct:
                trace.terminal_reason = TERMINAL_EVALUATOR_FAILED
                break
            iteration.strategy = derive_strategy(verdict.cot, mode, gateway)
            adopted: tuple[str, tuple[str, ...]] | None = None
            for _ in range(rewrite_budget):
                attempt = RewriteAttempt()
                iteration.rewrites.append(attempt)
                try:
                    stem, options = rewrite_item(working, iteration.strategy, mode, gateway)
                except MalformedRewriteError as e:
                    attempt.malformed = True
                    attempt.malformed_reason = str(e)
                    continue
                attempt.stem, attempt.options = stem, options
                check = check_consistency(working, stem, options, mode, chain, gateway)
                attempt.checker_passed = check.passed
                attempt.checker_reason = check.reason
                attempt.checker_source = check.source
                if check.passed:
                    attempt.adopted = True
                    adopted = (stem, options)
                    break
                # discard and retry from the last checked-good item; t stays put
            if adopted is None:
                trace.terminal_reason = TERMINAL_MAX_REWRITE_ATTEMPTS
                return RefinementResult(
                    final_item=None, snapshots=snapshots, traces=traces,
                    quarantined=True,
                    quarantine_reason=(f"rewrite budget exhausted in stage {stage_label} "
                                       f"at iteration {t + 1}"))
            stem, options = adopted
            working = make_item(working.task, stem, options, working.answer_index,
                                working.figure_id, working.chain_id, stage=working.stage,
                                lineage=working.lineage, shuffle_seed=working.shuffle_seed,
                                paper_id=working.paper_id, domain=working.domain)
            t += 1
        if trace.terminal_reason is None:
            trace.terminal_reason = TERMINAL_MAX_ITERATIONS
        snapshot = make_item(working.task, working.stem, working.options,
                             working.answer_index, working.figure_id, working.chain_id,
                             stage=stage_label, lineage=prev_snapshot.item_id,
                             shuffle_seed=working.shuffle_seed,
                             paper_id=working.paper_id, domain=working.domain)
        snapshots[stage_label] = snapshot
        prev_snapshot = snapshot
        working = snapshot

    return RefinementResult(final_item=snapshots["caption_removed"],
                            snapshots=snapshots, traces=traces)


# --------------------------------------------------------------------------
# Trace serialization (append-only trace store)
# --------------------------------------------------------------------------


def trace_to_json(trace: RefinementTrace) -> dict:
    return {
        "item_id": trace.item_id,
        "stage": trace.stage,
        "terminal_reason": trace.terminal_reason,
        "iterations": [
            {
                "verdict": {
                    "choice": it.verdict.choice,
                    "correct": it.verdict.correct,
                    "cot": it.verdict.cot,
                    "abstained": it.verdict.abstained,
                    "reprompted": it.verdict.reprompted,
                },
                "strategy": it.strategy,
                "rewrites": [
                    {
                        "malformed": rw.malformed,
                        "malformed_reason": rw.malformed_reason,
                        "stem": rw.stem,
                        "options": list(rw.options) if rw.options else None,
                        "checker_passed": rw.checker_passed,
                        "checker_reason": rw.checker_reason,
                        "checker_source": rw.checker_source,
                        "adopted": rw.adopted,
                    }
                    for rw in it.rewrites
                ],
            }
            for it in trace.iterations
        ],
    }


def trace_from_json(obj: dict) -> RefinementTrace:
    trace = RefinementTrace(item_id=obj["item_id"], stage=obj["stage"],
                            terminal_reason=obj["terminal_reason"])
    for it in obj["iterations"]:
        v = it["verdict"]
        record = IterationRecord(
            verdict=BlindVerdict(choice=v["choice"], correct=v["correct"], cot=v["cot"],
                                 abstained=v["abstained"], reprompted=v["reprompted"]),
            strategy=it["strategy"])
        for rw in it["rewrites"]:
            record.rewrites.append(RewriteAttempt(
                malformed=rw["malformed"], malformed_reason=rw["malformed_reason"],
                stem=rw["stem"],
                options=tuple(rw["options"]) if rw["options"] else None,
                checker_passed=rw["checker_passed"], checker_reason=rw["checker_reason"],
                checker_source=rw["checker_source"], adopted=rw["adopted"]))
        trace.iterations.append(record)
    return trace
