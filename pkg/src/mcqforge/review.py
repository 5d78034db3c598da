"""Expert-audit service core: sampling, task queue, scores, aggregates.

A fixed fraction of dataset items is sampled into review tasks; reviewers
claim tasks atomically, score three axes on a 1-5 scale, and issue an
accept/reject verdict. Rejections gate the item out of the released
export. All state changes append to a per-dataset log so the queue can be
rebuilt from disk at any point.
"""

from __future__ import annotations

import hashlib
import json
import random
import threading
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ConflictError, PreconditionError, ValidationError
from .mcq import MCQItem

AXES = ("scientific_accuracy", "logical_consistency", "contextual_relevance")


@dataclass(frozen=True)
class ReviewScore:
    scientific_accuracy: int
    logical_consistency: int
    contextual_relevance: int
    verdict: str  # accept | reject
    note: str = ""
    reviewer: str = ""
    timestamp: str = ""

    def __post_init__(self):
        for axis in AXES:
            value = getattr(self, axis)
            if not isinstance(value, int) or isinstance(value, bool) or not 1 <= value <= 5:
                raise ValidationError(f"{axis} must be an integer in [1, 5], got {value!r}")
        if self.verdict not in ("accept", "reject"):
            raise ValidationError(f"verdict must be accept or reject, got {self.verdict!r}")
        if self.verdict == "reject" and not self.note.strip():
            raise ValidationError("reject requires a non-empty note")


@dataclass
class ReviewTask:
    task_id: str
    item_id: str
    snapshot: dict  # stem, options, answer_index, figure hash, caption, chain summary
    order: int  # queue position, oldest first
    status: str = "pending"  # pending -> in_review -> done
    reviewer: str | None = None
    score: ReviewScore | None = None


def task_snapshot(item: MCQItem, figure_hash: str = "", caption: str = "",
                  chain_summary: str = "") -> dict:
    return {
        "item_id": item.item_id,
        "task_type": item.task.value,
        "stem": item.stem,
        "options": list(item.options),
        "answer_index": item.answer_index,
        "figure_hash": figure_hash,
        "caption": caption,
        "chain_summary": chain_summary,
        "stage": item.stage,
    }


def sample_for_review(items: Sequence[MCQItem], fraction: float, seed: int,
                      dataset_hash: str, snapshots: dict[str, dict] | None = None
                      ) -> list[ReviewTask]:
    """Seeded uniform sample without replacement; size = round(fraction x N).

    The RNG is keyed on (dataset hash, seed) so re-sampling after dataset
    edits cannot silently reuse a stale sample.
    """
    if not 0 < fraction <= 1:
        raise PreconditionError(f"fraction must be in (0, 1], got {fraction}")
    n = round(fraction * len(items))
    rng = random.Random(f"{dataset_hash}:{seed}")
    picked = rng.sample(range(len(items)), n)
    tasks = []
    for order, idx in enumerate(sorted(picked)):
        item = items[idx]
        task_id = hashlib.sha256(
            f"{dataset_hash}:{item.item_id}".encode("utf-8")).hexdigest()[:16]
        snapshot = (snapshots or {}).get(item.item_id) or task_snapshot(item)
        tasks.append(ReviewTask(task_id=task_id, item_id=item.item_id,
                                snapshot=snapshot, order=order))
    return tasks


class ReviewService:
    """Task queue with linearizable claims and an append-only log.

    log_path=None keeps everything in memory (tests); with a path, every
    mutation appends one JSON line, and a service constructed on the same
    path replays the log back into identical state.
    """

    def __init__(self, dataset_hash: str, log_path: str | Path | None = None):
        self.dataset_hash = dataset_hash
        self._tasks: dict[str, ReviewTask] = {}
        self._order: list[str] = []
        self._lock = threading.Lock()
        self._log_path = Path(log_path) if log_path else None
        if self._log_path and self._log_path.is_file():
            self._replay_log()

    # -- persistence -------------------------------------------------------

    def _append_log(self, event: dict):
        if self._log_path is None:
            return
        self._log_path.parent.mkdir(parents=True, exist_ok=True)
        with open(self._log_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, sort_keys=True, ensure_ascii=False) + "\n")

    def _replay_log(self):
        for line in self._log_path.read_text(encoding="utf-8").splitlines():
            event = json.loads(line)
            kind = event["kind"]
            if kind == "task":
                task = ReviewTask(task_id=event["task_id"], item_id=event["item_id"],
                                  snapshot=event["snapshot"], order=event["order"])
                self._tasks[task.task_id] = task
                self._order.append(task.task_id)
            elif kind == "claim":
                task = self._tasks[event["task_id"]]
                task.status = "in_review"
                task.reviewer = event["reviewer"]
            elif kind == "review":
                task = self._tasks[event["task_id"]]
                task.status = "done"
                task.score = ReviewScore(**event["score"])

    # -- queue operations ----------------------------------------------------

    def add_tasks(self, tasks: Iterable[ReviewTask]):
        with self._lock:
            for task in tasks:
                if task.task_id in self._tasks:
                    raise ConflictError(f"task {task.task_id} already queued")
                self._tasks[task.task_id] = task
                self._order.append(task.task_id)
                self._append_log({"kind": "task", "task_id": task.task_id,
                                  "item_id": task.item_id, "snapshot": task.snapshot,
                                  "order": task.order})

    def get_task(self, task_id: str) -> ReviewTask:
        task = self._tasks.get(task_id)
        if task is None:
            raise KeyError(task_id)
        return task

    def next_task(self, reviewer: str) -> ReviewTask | None:
        """Atomically claim the oldest pending task; None when drained."""
        if not reviewer:
            raise PreconditionError("reviewer id required")
        with self._lock:
            for task_id in self._order:
                task = self._tasks[task_id]
                if task.status == "pending":
                    task.status = "in_review"
                    task.reviewer = reviewer
                    self._append_log({"kind": "claim", "task_id": task_id,
                                      "reviewer": reviewer})
                    return task
        return None

    def submit_review(self, task_id: str, score: ReviewScore) -> ReviewTask:
        """Persist a score and close the task.

        The log is append-only; at the storage level a later record for the
        same task supersedes, but through this API a done task conflicts.
        """
        with self._lock:
            task = self._tasks.get(task_id)
            if task is None:
                raise KeyError(task_id)
            if task.status == "done":
                raise ConflictError(f"task {task_id} is already done")
            if task.status != "in_review":
                raise ConflictError(f"task {task_id} was never claimed")
            if score.reviewer and task.reviewer and score.reviewer != task.reviewer:
                raise ConflictError(
                    f"task {task_id} is claimed by {task.reviewer}, not {score.reviewer}")
            stamped = replace(score, timestamp=score.timestamp
                              or time.strftime("%Y-%m-%dT%H:%M:%S"))
            task.score = stamped
            task.status = "done"
            self._append_log({"kind": "review", "task_id": task_id,
                              "score": stamped.__dict__})
            return task

    # -- aggregates ----------------------------------------------------------

    def tasks(self) -> list[ReviewTask]:
        return [self._tasks[i] for i in self._order]

    def progress(self) -> tuple[int, int]:
        done = sum(1 for t in self._tasks.values() if t.status == "done")
        return done, len(self._tasks)

    def rejected_item_ids(self) -> set[str]:
        return {t.item_id for t in self._tasks.values()
                if t.score is not None and t.score.verdict == "reject"}

    def audit_report(self) -> dict:
        """Aggregate completed reviews: axis means, accept rate, task-type split."""
        done = [t for t in self.tasks() if t.score is not None]
        if not done:
            raise PreconditionError("audit report needs at least one completed review")
        reviewers = sorted({t.score.reviewer for t in done})
        anon = {r: f"R{i + 1}" for i, r in enumerate(reviewers)}
        axis_means = {
            axis: sum(getattr(t.score, axis) for t in done) / len(done) for axis in AXES
        }
        accepts = sum(1 for t in done if t.score.verdict == "accept")
        by_task_type: dict[str, dict] = {}
        for t in done:
            tt = t.snapshot.get("task_type", "unknown")
            bucket = by_task_type.setdefault(tt, {"reviewed": 0, "accepted": 0})
            bucket["reviewed"] += 1
            bucket["accepted"] += 1 if t.score.verdict == "accept" else 0
        per_reviewer = {
            anon[r]: sum(1 for t in done if t.score.reviewer == r) for r in reviewers
        }
        return {
            "dataset_hash": self.dataset_hash,
            "completed": len(done),
            "total": len(self._tasks),
            "axis_means": axis_means,
            "accept_rate": accepts / len(done),
            "by_task_type": by_task_type,
            "reviews_per_reviewer": per_reviewer,
        }
