"""Benchmark harness: CoT prompting, answer extraction, scoring, reports.

The answer extractor is the single place the option-digit convention
lives; the refiner's blind evaluations reuse it so benchmark scoring and
shortcut detection can never disagree about what counts as an answer.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import re
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from .errors import PreconditionError, ReportError, ValidationError
from .gateway import Attachment, ChatRequest, Gateway, Sampling, complete
from .mcq import MCQItem, TaskType
from .prompts import EVALUATOR_SUFFIX, render_options

log = logging.getLogger(__name__)

ANSWER_RE = re.compile(r"answer is\s*([0-9])", re.IGNORECASE)

# reporting order for per-task columns
TASK_ORDER = (TaskType.causal, TaskType.hypothetical, TaskType.quantitative,
              TaskType.comparative)


def extract_answer(response_text: str, m: int) -> int | None:
    """Appendix-style digit extraction: last match wins, range-checked."""
    matches = ANSWER_RE.findall(response_text)
    if not matches:
        return None
    digit = int(matches[-1])
    return digit if 1 <= digit <= m else None


@dataclass(frozen=True)
class PromptTemplate:
    text: str  # must contain {stem} and {options}; [IMAGE] marks the attachment
    version: str

    def render(self, item: MCQItem) -> str:
        if "{stem}" not in self.text or "{options}" not in self.text:
            raise PreconditionError("template must carry {stem} and {options} slots")
        return self.text.format(stem=item.stem, options=render_options(item.options))


DEFAULT_TEMPLATE = PromptTemplate(
    text=("[IMAGE]\n\n{stem}\n\nOptions:\n{options}\n\n" + EVALUATOR_SUFFIX),
    version="cot-1",
)


def build_prompt(item: MCQItem, template: PromptTemplate, figure_hash: str,
                 media_type: str = "image/png", model_id: str = "eval-model",
                 max_tokens: int = 2048) -> ChatRequest:
    """Deterministic render; options stay in stored order, never re-shuffled."""
    if not figure_hash:
        raise PreconditionError(f"item {item.item_id} has no resolvable figure")
    return ChatRequest(
        model_id=model_id,
        messages=(("user", template.render(item)),),
        attachments=(Attachment(content_hash=figure_hash, media_type=media_type),),
        sampling=Sampling(temperature=0.0, max_tokens=max_tokens),
        tag="eval_model",
    )


class ErrorKind(str, Enum):
    visual_perception = "visual_perception"
    material_knowledge = "material_knowledge"
    reasoning_judgement = "reasoning_judgement"


@dataclass(frozen=True)
class ErrorTag:
    kind: ErrorKind
    annotator: str
    note: str = ""


@dataclass
class ItemRecord:
    item_id: str
    task: TaskType
    answer_index: int
    raw_response: str
    extracted: int | None
    correct: bool
    skipped: bool = False


@dataclass
class EvalRun:
    run_id: str
    model_id: str
    dataset_ref: str
    stage_filter: str | None
    template_version: str
    records: list[ItemRecord] = field(default_factory=list)
    annotations: list[tuple[str, ErrorTag]] = field(default_factory=list)  # (item_id, tag)
    started_at: str = ""
    duration_s: float = 0.0

    def record_for(self, item_id: str) -> ItemRecord | None:
        for r in self.records:
            if r.item_id == item_id:
                return r
        return None


def run_eval(items: Sequence[MCQItem], gateway: Gateway,
             resolve_figure: Callable[[MCQItem], tuple[str, str]],
             template: PromptTemplate = DEFAULT_TEMPLATE, dataset_ref: str = "",
             stage_filter: str | None = None, started_at: str | None = None) -> EvalRun:
    """Evaluate every item; items without a resolvable figure are flagged,
    excluded from scoring, and never silently counted."""
    started_at = started_at or time.strftime("%Y-%m-%dT%H:%M:%S")
    model_id = gateway._settings("eval_model").model_id
    run_id = hashlib.sha256(
        f"{model_id}|{dataset_ref}|{stage_filter}|{template.version}|{started_at}"
        .encode("utf-8")).hexdigest()[:12]
    run = EvalRun(run_id=run_id, model_id=model_id, dataset_ref=dataset_ref,
                  stage_filter=stage_filter, template_version=template.version,
                  started_at=started_at)
    t0 = time.monotonic()
    for item in items:
        try:
            figure_hash, media_type = resolve_figure(item)
            request = build_prompt(item, template, figure_hash, media_type,
                                   model_id=model_id)
        except (KeyError, PreconditionError) as e:
            log.warning("skipping item %s: %s", item.item_id, e)
            run.records.append(ItemRecord(item.item_id, item.task, item.answer_index,
                                          raw_response="", extracted=None,
                                          correct=False, skipped=True))
            continue
        response = complete(request, gateway.backend, gateway.retry_limit,
                            gateway.backoff_s)
        extracted = extract_answer(response.text, len(item.options))
        run.records.append(ItemRecord(
            item_id=item.item_id, task=item.task, answer_index=item.answer_index,
            raw_response=response.text, extracted=extracted,
            correct=(extracted == item.answer_index)))
    run.duration_s = time.monotonic() - t0
    return run


# --------------------------------------------------------------------------
# Scoring and reports
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Scores:
    overall: float | None  # percent; None when nothing was scored
    per_task: dict[str, float | None]  # task value -> percent or None (n/a)
    counts: dict[str, tuple[int, int]]  # task value -> (correct, total)
    skipped: int = 0


def score_run(run: EvalRun) -> Scores:
    """Micro-averaged accuracy; empty task buckets report n/a, not zero."""
    scored = [r for r in run.records if not r.skipped]
    counts: dict[str, tuple[int, int]] = {}
    for task in TaskType:
        bucket = [r for r in scored if r.task is task]
        counts[task.value] = (sum(1 for r in bucket if r.correct), len(bucket))
    per_task = {
        task: (100.0 * c / n if n else None) for task, (c, n) in counts.items()
    }
    total = len(scored)
    overall = (100.0 * sum(1 for r in scored if r.correct) / total) if total else None
    return Scores(overall=overall, per_task=per_task, counts=counts,
                  skipped=sum(1 for r in run.records if r.skipped))


def fmt_pct(value: float | None) -> str:
    return "n/a" if value is None else f"{value:.1f}"


def score_table(scores_by_model: Mapping[str, Scores]) -> tuple[str, str]:
    """Per-model accuracy table (Markdown, CSV), overall plus per task."""
    headers = ["Model", "Overall"] + [t.value.capitalize() for t in TASK_ORDER]
    rows = []
    for model, s in scores_by_model.items():
        rows.append([model, fmt_pct(s.overall)]
                    + [fmt_pct(s.per_task[t.value]) for t in TASK_ORDER])
    return _markdown_table(headers, rows), _csv_table(headers, rows)


def ablation_table(stage_scores: Mapping[str, Mapping[str, float]]) -> tuple[str, str]:
    """Stage-ablation table with absolute percentage-point drops vs raw.

    stage_scores maps model -> {raw, lang_removed, caption_removed} overall
    accuracy in percent. Drops print as "(X.X%↓)".
    """
    headers = ["Model", "Raw", "Lan.Rem", "Cap.Rem"]
    md_rows, csv_rows = [], []
    for model, stages in stage_scores.items():
        for stage in ("raw", "lang_removed", "caption_removed"):
            if stage not in stages:
                raise ReportError(f"model {model} missing stage run {stage!r}")
        raw = stages["raw"]
        cells = [model, f"{raw:.1f}"]
        csv_cells = [model, f"{raw:.1f}"]
        for stage in ("lang_removed", "caption_removed"):
            value = stages[stage]
            drop = raw - value
            cells.append(f"{value:.1f} ({drop:.1f}%↓)")
            csv_cells.extend([f"{value:.1f}", f"{drop:.1f}"])
        md_rows.append(cells)
        csv_rows.append(csv_cells)
    csv_headers = ["Model", "Raw", "Lan.Rem", "Lan.Drop", "Cap.Rem", "Cap.Drop"]
    return _markdown_table(headers, md_rows), _csv_table(csv_headers, csv_rows)


def ablation_from_runs(runs_by_model_stage: Mapping[str, Mapping[str, EvalRun]]) -> tuple[str, str]:
    table: dict[str, dict[str, float]] = {}
    for model, by_stage in runs_by_model_stage.items():
        table[model] = {}
        for stage, run in by_stage.items():
            overall = score_run(run).overall
            if overall is None:
                raise ReportError(f"model {model} stage {stage!r} run scored no items")
            table[model][stage] = overall
    return ablation_table(table)


def _markdown_table(headers: list[str], rows: list[list[str]]) -> str:
    lines = ["| " + " | ".join(headers) + " |",
             "|" + "|".join(" --- " for _ in headers) + "|"]
    for row in rows:
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines) + "\n"


def _csv_table(headers: list[str], rows: list[list[str]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(headers)
    writer.writerows(rows)
    return buf.getvalue()


# --------------------------------------------------------------------------
# Manual error annotation
# --------------------------------------------------------------------------


def annotate_error(run: EvalRun, item_id: str, tag: ErrorTag) -> None:
    record = run.record_for(item_id)
    if record is None:
        raise ValidationError(f"no record for item {item_id} in run {run.run_id}")
    if record.correct:
        raise ValidationError(f"item {item_id} was answered correctly; nothing to tag")
    run.annotations.append((item_id, tag))


def error_summary(run: EvalRun) -> dict[str, int]:
    out = {kind.value: 0 for kind in ErrorKind}
    for _, tag in run.annotations:
        out[tag.kind.value] += 1
    return out


# --------------------------------------------------------------------------
# Run record persistence
# --------------------------------------------------------------------------


def save_run(run: EvalRun, path: str | Path) -> Path:
    path = Path(path)
    lines = [json.dumps({
        "kind": "eval_run", "run_id": run.run_id, "model_id": run.model_id,
        "dataset_ref": run.dataset_ref, "stage_filter": run.stage_filter,
        "template_version": run.template_version, "started_at": run.started_at,
        "duration_s": run.duration_s,
    }, sort_keys=True)]
    for r in run.records:
        lines.append(json.dumps({
            "kind": "record", "item_id": r.item_id, "task": r.task.value,
            "answer_index": r.answer_index, "raw_response": r.raw_response,
            "extracted": r.extracted, "correct": r.correct, "skipped": r.skipped,
        }, sort_keys=True, ensure_ascii=False))
    for item_id, tag in run.annotations:
        lines.append(json.dumps({
            "kind": "annotation", "item_id": item_id, "tag": tag.kind.value,
            "annotator": tag.annotator, "note": tag.note,
        }, sort_keys=True, ensure_ascii=False))
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return path


def load_run(path: str | Path) -> EvalRun:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ValidationError(f"empty run record file: {path}")
    head = json.loads(lines[0])
    if head.get("kind") != "eval_run":
        raise ValidationError(f"not a run record file: {path}")
    run = EvalRun(run_id=head["run_id"], model_id=head["model_id"],
                  dataset_ref=head["dataset_ref"], stage_filter=head["stage_filter"],
                  template_version=head["template_version"],
                  started_at=head.get("started_at", ""),
                  duration_s=head.get("duration_s", 0.0))
    for line in lines[1:]:
        obj = json.loads(line)
        if obj["kind"] == "record":
            run.records.append(ItemRecord(
                item_id=obj["item_id"], task=TaskType(obj["task"]),
                answer_index=obj["answer_index"], raw_response=obj["raw_response"],
                extracted=obj["extracted"], correct=obj["correct"],
                skipped=obj.get("skipped", False)))
        elif obj["kind"] == "annotation":
            run.annotations.append((obj["item_id"], ErrorTag(
                kind=ErrorKind(obj["tag"]), annotator=obj["annotator"],
                note=obj.get("note", ""))))
    return run
