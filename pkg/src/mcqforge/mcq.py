"""MCQ construction from validated reasoning chains.

Drafting is an LLM call; assembly into a canonical item is pure. Items are
content-addressed so parallel generation cannot collide, and every
transformation here preserves the correct option's text, moving only its
position.
"""

from __future__ import annotations

import hashlib
import json
import random
import re
from dataclasses import dataclass, field, replace
from enum import Enum

from .chains import ComponentTag, ReasoningChain, validate_chain
from .errors import ConstructionError, FeasibilityError, PreconditionError
from .gateway import Gateway
from .prompts import QUESTION_WRITER_TEMPLATE, parse_draft
from .textutil import token_f1

DEFAULT_OPTION_COUNT = 4
DIVERSITY_CAP = 0.8  # pairwise token-F1 at or above this marks near-duplicates

STAGES = ("raw", "lang_removed", "caption_removed")


class TaskType(str, Enum):
    causal = "causal"
    comparative = "comparative"
    quantitative = "quantitative"
    hypothetical = "hypothetical"


@dataclass(frozen=True)
class Draft:
    task: TaskType
    stem: str
    correct: str
    distractors: tuple[str, ...]


@dataclass(frozen=True)
class MCQItem:
    item_id: str
    task: TaskType
    stem: str
    options: tuple[str, ...]
    answer_index: int  # 1-based position of the correct option
    figure_id: str
    chain_id: str
    stage: str = "raw"
    lineage: str | None = None  # parent item_id across stages
    shuffle_seed: int | None = None
    paper_id: str = ""
    domain: str = ""

    def __post_init__(self):
        m = len(self.options)
        if not 2 <= m <= 10:
            raise PreconditionError(f"option count {m} outside [2, 10]")
        if not 1 <= self.answer_index <= m:
            raise PreconditionError(f"answer_index {self.answer_index} outside [1, {m}]")
        if len(set(self.options)) != m:
            raise PreconditionError("options must be pairwise distinct")
        if self.stage not in STAGES:
            raise PreconditionError(f"unknown stage {self.stage!r}")

    @property
    def correct_option(self) -> str:
        return self.options[self.answer_index - 1]


def item_id_for(task: TaskType, stem: str, options: tuple[str, ...], answer_index: int,
                figure_id: str, chain_id: str, stage: str, paper_id: str = "") -> str:
    payload = json.dumps(
        [task.value, stem, list(options), answer_index, figure_id, chain_id, stage, paper_id],
        sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


def make_item(task: TaskType, stem: str, options, answer_index: int, figure_id: str,
              chain_id: str, stage: str = "raw", lineage: str | None = None,
              shuffle_seed: int | None = None, paper_id: str = "",
              domain: str = "") -> MCQItem:
    options = tuple(options)
    return MCQItem(
        item_id=item_id_for(task, stem, options, answer_index, figure_id, chain_id,
                            stage, paper_id),
        task=task, stem=stem, options=options, answer_index=answer_index,
        figure_id=figure_id, chain_id=chain_id, stage=stage, lineage=lineage,
        shuffle_seed=shuffle_seed, paper_id=paper_id, domain=domain)


# a number (with optional sign/decimal/exponent) followed by a unit-ish token
_NUMERIC_UNIT_RE = re.compile(
    r"[-+]?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?\s*(?:%|°C|°|[a-zA-Zµ]+)")


def has_numeric_quantity(text: str) -> bool:
    return _NUMERIC_UNIT_RE.search(text) is not None


def task_feasible(chain: ReasoningChain, task: TaskType) -> bool:
    """Quantitative items need a numeric quantity in the terminal Pe statement."""
    if task is TaskType.quantitative:
        return has_numeric_quantity(chain.terminal().statement)
    return True


def draft_question(chain: ReasoningChain, figure, caption: str, task: TaskType,
                   gateway: Gateway) -> Draft:
    """Ask the question-writer role for a task-specific draft."""
    violations = validate_chain(chain)
    if violations:
        raise PreconditionError(f"chain invalid: {violations}")
    if not task_feasible(chain, task):
        raise FeasibilityError(
            f"task {task.value} infeasible: terminal statement has no numeric quantity")
    prompt = QUESTION_WRITER_TEMPLATE.format(
        task=task.value, caption=caption, chain=chain.summary())
    response = gateway.chat("question_writer", [("user", prompt)])
    stem, correct, distractors = parse_draft(response.text)
    return Draft(task=task, stem=stem, correct=correct, distractors=tuple(distractors))


def to_mcq(draft: Draft, m: int = DEFAULT_OPTION_COUNT, figure_id: str = "",
           chain_id: str = "", paper_id: str = "", domain: str = "") -> MCQItem:
    """Assemble a stage=raw item, selecting distractors for diversity.

    Distractors too close to the correct answer or to an already chosen
    distractor (token F1 >= cap) are discarded; running out is an error,
    not a silently thinner item.
    """
    if len(draft.distractors) < m - 1:
        raise PreconditionError(f"need >= {m - 1} distractors, got {len(draft.distractors)}")
    chosen: list[str] = []
    for cand in draft.distractors:
        if cand == draft.correct or cand in chosen:
            continue
        pool = [draft.correct] + chosen
        if any(token_f1(cand, other) >= DIVERSITY_CAP for other in pool):
            continue
        chosen.append(cand)
        if len(chosen) == m - 1:
            break
    if len(chosen) < m - 1:
        raise ConstructionError(
            f"only {len(chosen)} usable distractors after dedup/diversity, need {m - 1}")
    options = tuple([draft.correct] + chosen)
    return make_item(draft.task, draft.stem, options, 1, figure_id, chain_id,
                     stage="raw", paper_id=paper_id, domain=domain)


def shuffle_options(item: MCQItem, seed: int) -> MCQItem:
    """Seeded permutation of options; only the correct option's index moves."""
    order = list(range(len(item.options)))
    random.Random(seed).shuffle(order)
    options = tuple(item.options[i] for i in order)
    answer_index = order.index(item.answer_index - 1) + 1
    return make_item(item.task, item.stem, options, answer_index, item.figure_id,
                     item.chain_id, stage=item.stage, lineage=item.lineage,
                     shuffle_seed=seed, paper_id=item.paper_id, domain=item.domain)


def item_to_json(item: MCQItem) -> dict:
    return {
        "item_id": item.item_id,
        "task": item.task.value,
        "stem": item.stem,
        "options": list(item.options),
        "answer_index": item.answer_index,
        "figure_id": item.figure_id,
        "chain_id": item.chain_id,
        "stage": item.stage,
        "lineage": item.lineage,
        "shuffle_seed": item.shuffle_seed,
        "paper_id": item.paper_id,
        "domain": item.domain,
    }


def item_from_json(obj: dict) -> MCQItem:
    return MCQItem(
        item_id=obj["item_id"],
        task=TaskType(obj["task"]),
        stem=obj["stem"],
        options=tuple(obj["options"]),
        answer_index=obj["answer_index"],
        figure_id=obj["figure_id"],
        chain_id=obj["chain_id"],
        stage=obj.get("stage", "raw"),
        lineage=obj.get("lineage"),
        shuffle_seed=obj.get("shuffle_seed"),
        paper_id=obj.get("paper_id", ""),
        domain=obj.get("domain", ""),
    )
