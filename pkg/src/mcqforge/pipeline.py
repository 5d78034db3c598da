"""End-to-end orchestration: corpus -> chains -> MCQs -> refinement -> dataset.

Work fans out per figure and per item, but any single failure is recorded
and skipped, never fatal: LLM-backed steps are flaky and a run must
account for every item it attempted. The summary enforces conservation:
every generated item ends up either in the dataset or in quarantine.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .chains import (
    ReasoningChain,
    chain_to_json,
    extract_chain,
    load_lexicon,
    default_lexicon_path,
    validate_chain,
    verify_chain,
)
from .config import PipelineConfig
from .corpus import CorpusStore, PaperRecord
from .dataset import write_dataset
from .errors import FeasibilityError
from .gateway import Gateway
from .mcq import MCQItem, TaskType, draft_question, shuffle_options, to_mcq
from .refine import refine_item, trace_to_json

log = logging.getLogger(__name__)


@dataclass
class PipelineFailure:
    phase: str
    ref: str
    error: str


@dataclass
class PipelineSummary:
    papers: int = 0
    figures: int = 0
    chains_extracted: int = 0
    chains_valid: int = 0
    chains_quarantined: int = 0
    items_generated: int = 0
    items_in_dataset: int = 0
    items_quarantined: int = 0
    infeasible_tasks: int = 0
    failures: list[PipelineFailure] = field(default_factory=list)
    dataset_path: str = ""
    dataset_hash: str = ""
    traces_path: str = ""
    quarantine_path: str = ""

    @property
    def conservation_ok(self) -> bool:
        return self.items_generated == self.items_in_dataset + self.items_quarantined

    def to_json(self) -> dict:
        return {
            "papers": self.papers, "figures": self.figures,
            "chains_extracted": self.chains_extracted, "chains_valid": self.chains_valid,
            "chains_quarantined": self.chains_quarantined,
            "items_generated": self.items_generated,
            "items_in_dataset": self.items_in_dataset,
            "items_quarantined": self.items_quarantined,
            "infeasible_tasks": self.infeasible_tasks,
            "conservation_ok": self.conservation_ok,
            "failures": [f.__dict__ for f in self.failures],
            "dataset_path": self.dataset_path, "dataset_hash": self.dataset_hash,
            "traces_path": self.traces_path, "quarantine_path": self.quarantine_path,
        }


def derive_seed(base: int, *parts: str) -> int:
    key = ":".join([str(base), *parts])
    return int.from_bytes(hashlib.sha256(key.encode("utf-8")).digest()[:8], "big")


def run_pipeline(config: PipelineConfig, records: Sequence[PaperRecord],
                 gateway: Gateway, out_dir: str | Path) -> PipelineSummary:
    """Run every phase over the given papers and write all artifacts.

    Fully deterministic for a fixed (records, config, transcript): item
    ordering is content-addressed, seeds derive from the config, and the
    output header's creation time comes from the config.
    """
    config.validate(check_paths=False)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lexicon = load_lexicon(config.lexicon_path or default_lexicon_path())

    summary = PipelineSummary(papers=len(records))
    dataset_items: list[MCQItem] = []
    trace_lines: list[str] = []
    quarantine_lines: list[str] = []
    tasks = [TaskType(t) for t in config.tasks]

    for record in sorted(records, key=lambda r: r.paper_id):
        for figure in record.figures:
            summary.figures += 1
            fig_ref = f"{record.paper_id}/{figure.figure_id}"
            try:
                chain = extract_chain(figure, figure.context, record.body_text,
                                      lexicon, gateway)
                chain = verify_chain(chain, record.body_text, config.theta, config.top_k)
                summary.chains_extracted += 1
            except Exception as e:
                summary.failures.append(PipelineFailure("extract", fig_ref, str(e)))
                log.warning("chain extraction failed for %s: %s", fig_ref, e)
                continue
            violations = validate_chain(chain)
            if violations:
                summary.chains_quarantined += 1
                quarantine_lines.append(json.dumps({
                    "kind": "chain", "ref": fig_ref, "chain": chain_to_json(chain),
                    "violations": violations,
                }, sort_keys=True, ensure_ascii=False))
                continue
            summary.chains_valid += 1

            for task in tasks:
                item_ref = f"{fig_ref}/{task.value}"
                try:
                    draft = draft_question(chain, figure, figure.caption, task, gateway)
                except FeasibilityError:
                    summary.infeasible_tasks += 1
                    continue
                except Exception as e:
                    summary.failures.append(PipelineFailure("draft", item_ref, str(e)))
                    continue
                try:
                    raw = to_mcq(draft, config.m, figure_id=figure.figure_id,
                                 chain_id=chain.chain_id, paper_id=record.paper_id,
                                 domain=record.domain)
                    raw = shuffle_options(
                        raw, derive_seed(config.shuffle_seed, chain.chain_id, task.value))
                except Exception as e:
                    summary.failures.append(PipelineFailure("build", item_ref, str(e)))
                    continue
                summary.items_generated += 1

                if not config.run_refine:
                    summary.items_in_dataset += 1
                    dataset_items.append(raw)
                    continue
                try:
                    result = refine_item(raw, chain, figure.caption, gateway,
                                         T=config.T, rewrite_budget=config.rewrite_budget)
                except Exception as e:
                    summary.items_quarantined += 1
                    summary.failures.append(PipelineFailure("refine", item_ref, str(e)))
                    quarantine_lines.append(json.dumps({
                        "kind": "item", "ref": item_ref, "item_id": raw.item_id,
                        "reason": f"refinement error: {e}", "traces": [],
                    }, sort_keys=True, ensure_ascii=False))
                    continue
                for trace in result.traces:
                    trace_lines.append(json.dumps(trace_to_json(trace),
                                                  sort_keys=True, ensure_ascii=False))
                if result.quarantined:
                    summary.items_quarantined += 1
                    quarantine_lines.append(json.dumps({
                        "kind": "item", "ref": item_ref, "item_id": raw.item_id,
                        "reason": result.quarantine_reason,
                        "traces": [trace_to_json(t) for t in result.traces],
                    }, sort_keys=True, ensure_ascii=False))
                    continue
                summary.items_in_dataset += 1
                for stage in ("raw", "lang_removed", "caption_removed"):
                    dataset_items.append(result.snapshots[stage])

    dataset_path = out_dir / "dataset.jsonl"
    header = write_dataset(dataset_items, dataset_path, config.digest(),
                           config.resolved_created_at())
    traces_path = out_dir / "traces.jsonl"
    traces_path.write_text("".join(line + "\n" for line in trace_lines), encoding="utf-8")
    quarantine_path = out_dir / "quarantine.jsonl"
    quarantine_path.write_text("".join(line + "\n" for line in quarantine_lines),
                               encoding="utf-8")
    summary.dataset_path = str(dataset_path)
    summary.dataset_hash = header.dataset_hash
    summary.traces_path = str(traces_path)
    summary.quarantine_path = str(quarantine_path)
    (out_dir / "summary.json").write_text(
        json.dumps(summary.to_json(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    if not summary.conservation_ok:
        log.error("conservation violated: generated=%d in_dataset=%d quarantined=%d",
                  summary.items_generated, summary.items_in_dataset,
                  summary.items_quarantined)
    return summary
