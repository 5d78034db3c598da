"""Run a review service preloaded with a small fixture queue.

Used by the frontend round-trip test: starts on a free port, prints one
READY line with the port and the review-log path, then serves until
killed. Requires the mcqforge package to be installed.
"""

import argparse
import hashlib
import io
import socket
import tempfile
from pathlib import Path

import uvicorn
from PIL import Image

from mcqforge.mcq import TaskType, make_item
from mcqforge.review import ReviewService, sample_for_review, task_snapshot
from mcqforge.review_api import create_app

FIXTURE_ITEMS = [
    (TaskType.causal, "Which change does the heating cause in the figure?",
     ("a coarser grain structure", "a doubled peak intensity",
      "an amorphous halo", "a shifted absorption edge"), 2),
    (TaskType.comparative, "Which sample keeps the higher hardness in the figure?",
     ("the annealed sample", "the quenched sample",
      "the as-cast sample", "the aged sample"), 3),
    (TaskType.quantitative, "What hardness does the treated sample reach in the figure?",
     ("8 GPa", "10 GPa", "12 GPa", "14 GPa"), 3),
    (TaskType.hypothetical, "If the field were removed, what would the figure show?",
     ("the peaks split again", "the peaks broaden",
      "the background rises", "the pattern is unchanged"), 1),
    (TaskType.causal, "Which feature does the doping introduce in the figure?",
     ("a superlattice reflection", "a diffuse ring",
      "a texture gradient", "a strain fringe"), 1),
]


def fixture_figure() -> tuple[bytes, str]:
    image = Image.new("RGB", (64, 48), (230, 230, 240))
    buffer = io.BytesIO()
    image.save(buffer, format="PNG")
    data = buffer.getvalue()
    return data, hashlib.sha256(data).hexdigest()[:16]


def build_service(log_path: Path) -> tuple[ReviewService, dict]:
    png, figure_hash = fixture_figure()
    items = [make_item(task, stem, options, answer, figure_id=f"fig{i + 1}",
                       chain_id=f"c{i + 1}", paper_id="paper1")
             for i, (task, stem, options, answer) in enumerate(FIXTURE_ITEMS)]
    snapshots = {
        item.item_id: task_snapshot(
            item, figure_hash=figure_hash,
            caption=f"Measured series for panel {i + 1}.",
            chain_summary="E: treatment applied. S: structure responds. "
                          "Pe: performance shifts.")
        for i, item in enumerate(items)
    }
    dataset_hash = "fixture" + hashlib.sha256(
        "".join(sorted(item.item_id for item in items)).encode()).hexdigest()[:8]
    tasks = sample_for_review(items, fraction=1.0, seed=11,
                              dataset_hash=dataset_hash, snapshots=snapshots)
    service = ReviewService(dataset_hash, log_path=log_path)
    service.add_tasks(tasks)
    figures = {figure_hash: (png, "image/png")}
    return service, figures


def free_port() -> int:
    with socket.socket() as probe:
        probe.bind(("127.0.0.1", 0))
        return probe.getsockname()[1]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--log", default="")
    parser.add_argument("--port", type=int, default=0)
    args = parser.parse_args()

    log_path = Path(args.log) if args.log else (
        Path(tempfile.mkdtemp(prefix="review-fixture-")) / "review_log.jsonl")
    service, figures = build_service(log_path)
    app = create_app(service, lambda h: figures[h])

    port = args.port or free_port()
    print(f"READY {port} {log_path}", flush=True)
    uvicorn.run(app, host="127.0.0.1", port=port, log_level="warning")


if __name__ == "__main__":
    main()
