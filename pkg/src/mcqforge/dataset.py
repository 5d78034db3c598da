"""Dataset file format, filtered exports, and corpus statistics.

A dataset is a JSONL file: one header line, then one MCQ item per line in
item-id order. The header's dataset hash covers exactly the record lines,
so two runs that generate the same items produce byte-identical files
when the creation time is pinned through the config.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import UsageError, ValidationError
from .mcq import MCQItem, STAGES, item_from_json, item_to_json

FORMAT_VERSION = "1"


@dataclass(frozen=True)
class DatasetHeader:
    version: str
    dataset_hash: str
    config_digest: str
    created_at: str
    count: int


def _record_lines(items: Sequence[MCQItem]) -> list[str]:
    ordered = sorted(items, key=lambda i: i.item_id)
    return [json.dumps(item_to_json(i), sort_keys=True, separators=(",", ":"),
                       ensure_ascii=False) for i in ordered]


def dataset_hash(items: Sequence[MCQItem]) -> str:
    body = "".join(line + "\n" for line in _record_lines(items))
    return hashlib.sha256(body.encode("utf-8")).hexdigest()


def write_dataset(items: Sequence[MCQItem], path: str | Path, config_digest: str,
                  created_at: str) -> DatasetHeader:
    path = Path(path)
    lines = _record_lines(items)
    header = DatasetHeader(
        version=FORMAT_VERSION,
        dataset_hash=hashlib.sha256(
            "".join(line + "\n" for line in lines).encode("utf-8")).hexdigest(),
        config_digest=config_digest,
        created_at=created_at,
        count=len(lines),
    )
    head_line = json.dumps({
        "kind": "dataset", "version": header.version, "dataset_hash": header.dataset_hash,
        "config_digest": header.config_digest, "created_at": header.created_at,
        "count": header.count,
    }, sort_keys=True, separators=(",", ":"))
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(line + "\n" for line in [head_line] + lines),
                    encoding="utf-8")
    return header


def load_dataset(path: str | Path) -> tuple[DatasetHeader, list[MCQItem]]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ValidationError(f"empty dataset file: {path}")
    head = json.loads(lines[0])
    if head.get("kind") != "dataset":
        raise ValidationError(f"not a dataset file (no header): {path}")
    body = "".join(line + "\n" for line in lines[1:])
    digest = hashlib.sha256(body.encode("utf-8")).hexdigest()
    if digest != head["dataset_hash"]:
        raise ValidationError(f"dataset hash mismatch in {path}: records were modified")
    items = [item_from_json(json.loads(line)) for line in lines[1:]]
    header = DatasetHeader(version=head["version"], dataset_hash=head["dataset_hash"],
                           config_digest=head["config_digest"],
                           created_at=head["created_at"], count=head["count"])
    _check_lineage(items)
    return header, items


def _check_lineage(items: Sequence[MCQItem]):
    ids = {i.item_id for i in items}
    for item in items:
        if item.lineage is not None and item.lineage not in ids:
            raise ValidationError(
                f"item {item.item_id} references missing lineage parent {item.lineage}")


def export_dataset(path: str | Path, out_path: str | Path, stage: str | None = None,
                   include_rejected: bool = False, rejected_item_ids: set[str] | None = None,
                   created_at: str | None = None) -> DatasetHeader:
    """Write a filtered copy.

    Default export drops reviewer-rejected items (quarantined items never
    reach the dataset file in the first place). A stage filter selects one
    snapshot generation for ablation runs. Exports are deterministic, so
    re-exporting produces identical bytes.
    """
    if stage is not None and stage not in STAGES:
        raise UsageError(f"unknown stage {stage!r}; expected one of {', '.join(STAGES)}")
    header, items = load_dataset(path)
    rejected = rejected_item_ids or set()
    kept = []
    for item in items:
        if stage is not None and item.stage != stage:
            continue
        if not include_rejected and _lineage_root(item, items) in _roots(rejected, items):
            continue
        kept.append(item)
    # exported subsets may orphan lineage parents; clear dangling pointers
    kept_ids = {i.item_id for i in kept}
    cleaned = []
    for item in kept:
        if item.lineage is not None and item.lineage not in kept_ids:
            cleaned.append(_with_lineage(item, None))
        else:
            cleaned.append(item)
    return write_dataset(cleaned, out_path, header.config_digest,
                         created_at or header.created_at)


def _with_lineage(item: MCQItem, lineage: str | None) -> MCQItem:
    from dataclasses import replace
    return replace(item, lineage=lineage)


def _lineage_root(item: MCQItem, items: Sequence[MCQItem]) -> str:
    by_id = {i.item_id: i for i in items}
    cur = item
    while cur.lineage is not None and cur.lineage in by_id:
        cur = by_id[cur.lineage]
    return cur.item_id


def _roots(rejected_ids: set[str], items: Sequence[MCQItem]) -> set[str]:
    # a rejected item of any stage bans its whole lineage group
    return {_lineage_root(i, items) for i in items if i.item_id in rejected_ids}


# --------------------------------------------------------------------------
# Statistics (benchmark-attributes report)
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class StatsReport:
    total: int
    per_task: dict[str, int]
    unique_figures: int
    unique_papers: int
    domains: dict[str, int]
    per_stage: dict[str, int]

    def to_json(self) -> dict:
        return {
            "total": self.total,
            "per_task": self.per_task,
            "unique_figures": self.unique_figures,
            "unique_papers": self.unique_papers,
            "domains": self.domains,
            "per_stage": self.per_stage,
        }


def stats_report(items: Sequence[MCQItem], stage: str | None = None) -> StatsReport:
    """Count items, tasks, figures, papers, domains over one stage view.

    stage=None counts only final-stage items when stages are present,
    falling back to everything for flat (single-stage) files.
    """
    if stage is not None:
        scoped = [i for i in items if i.stage == stage]
    else:
        finals = [i for i in items if i.stage == "caption_removed"]
        scoped = finals if finals else list(items)
    per_task = {}
    for item in scoped:
        per_task[item.task.value] = per_task.get(item.task.value, 0) + 1
    figures = {(i.paper_id, i.figure_id) for i in scoped}
    papers = {i.paper_id for i in scoped if i.paper_id}
    domains: dict[str, int] = {}
    for item in scoped:
        if item.domain:
            domains[item.domain] = domains.get(item.domain, 0) + 1
    per_stage = {}
    for item in items:
        per_stage[item.stage] = per_stage.get(item.stage, 0) + 1
    return StatsReport(total=len(scoped), per_task=per_task,
                       unique_figures=len(figures), unique_papers=len(papers),
                       domains=domains, per_stage=per_stage)
