"""Shared fixture builders: converter directories, chains, scripted agents.

Everything here is deterministic. Scripted agents key their behaviour off
prompt content (marker tokens, caption text), which is what lets the
refinement loop and the full pipeline run offline with real control flow.
"""

from __future__ import annotations

import io
import re

import pytest
from PIL import Image

from mcqforge.chains import ComponentTag, ReasoningChain, ReasoningStep
from mcqforge.gateway import Gateway, ScriptedBackend
from mcqforge.mcq import TaskType, make_item


def png_bytes(color=(200, 30, 30), size=(8, 8)) -> bytes:
    img = Image.new("RGB", size, color)
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def make_paper_dir(root, paper_id, body_text, figures, domain=""):
    """Build a converter-layout directory: body.md, images/, figures.manifest.

    figures: list of (figure_id, caption) or (figure_id, caption, color).
    """
    import json

    paper_dir = root / paper_id
    (paper_dir / "images").mkdir(parents=True)
    (paper_dir / "body.md").write_text(body_text, encoding="utf-8")
    lines = []
    for i, fig in enumerate(figures):
        figure_id, caption = fig[0], fig[1]
        color = fig[2] if len(fig) > 2 else (40 * (i + 1) % 256, 80, 120)
        image_file = f"images/{figure_id}.png"
        (paper_dir / image_file).write_bytes(png_bytes(color))
        lines.append(json.dumps({"figure_id": figure_id, "image_file": image_file,
                                 "caption": caption, "page": i + 1}))
    (paper_dir / "figures.manifest").write_text(
        "".join(line + "\n" for line in lines), encoding="utf-8")
    if domain:
        (paper_dir / "meta.json").write_text(
            json.dumps({"domain": domain}), encoding="utf-8")
    return paper_dir


def make_verified_chain(figure_id="fig1", statements=None) -> ReasoningChain:
    """A chain whose steps are pre-marked verified, for modules past extraction."""
    statements = statements or [
        ("E", "applied 10 T magnetic field"),
        ("S", "split satellites collapse into a single peak"),
        ("Pe", "peak intensity doubles to 200 counts"),
    ]
    steps = tuple(
        ReasoningStep(index=i + 1, component=ComponentTag(tag), statement=text,
                      evidence=(((0, 10), 1.0),), verified=True)
        for i, (tag, text) in enumerate(statements)
    )
    return ReasoningChain(figure_id=figure_id, steps=steps, lexicon_version="test-1")


def make_mcq(stem="Which change does the figure show?", answer_index=2,
             options=("a smaller lattice constant", "a doubled peak intensity",
                      "an amorphous halo", "a shifted absorption edge"),
             task=TaskType.causal, figure_id="fig1", chain_id="c1", **kw):
    return make_item(task, stem, options, answer_index, figure_id, chain_id, **kw)


MARKER_RE = re.compile(r"X(?:LEAK|CAP)Q(\d)")


def marker_evaluator(request) -> str:
    """Correct iff a marker the mode can see is present.

    Language marker XLEAKQ<d> works in any blind mode; caption marker
    XCAPQ<d> only when the prompt carries a caption block. Otherwise the
    evaluator commits to option 1 (wrong by fixture construction).
    """
    prompt = request.prompt_text()
    m = re.search(r"XLEAKQ(\d)", prompt)
    if m:
        return f"The stem itself gives it away. the answer is {m.group(1)}"
    if "Caption:" in prompt:
        m = re.search(r"XCAPQ(\d)", prompt)
        if m:
            return f"The caption dependency resolves it. the answer is {m.group(1)}"
    return "No textual cue works here; guessing. the answer is 1"


def stripping_rewriter(request) -> str:
    """Remove exactly one marker token from the stem per call."""
    prompt = request.prompt_text()
    stem = ""
    options = []
    for line in prompt.splitlines():
        if line.startswith("STEM: ") and not stem:
            stem = line[len("STEM: "):]
        m = re.match(r"^(\d+)\. (.*)$", line)
        if m:
            options.append(m.group(2))
    answer_index = int(re.search(r"option (\d+)", prompt).group(1))
    stem = MARKER_RE.sub("", stem, count=1).replace("  ", " ").strip()
    correct = options[answer_index - 1]
    distractors = [o for i, o in enumerate(options) if i != answer_index - 1]
    lines = [f"STEM: {stem}", f"CORRECT: {correct}"]
    lines += [f"DISTRACTOR: {d}" for d in distractors]
    return "\n".join(lines)


def echo_rewriter(request) -> str:
    """Re-emit the current question unchanged (identity rewrite)."""
    prompt = request.prompt_text()
    stem = ""
    options = []
    for line in prompt.splitlines():
        if line.startswith("STEM: ") and not stem:
            stem = line[len("STEM: "):]
        m = re.match(r"^(\d+)\. (.*)$", line)
        if m:
            options.append(m.group(2))
    answer_index = int(re.search(r"option (\d+)", prompt).group(1))
    correct = options[answer_index - 1]
    distractors = [o for i, o in enumerate(options) if i != answer_index - 1]
    lines = [f"STEM: {stem}", f"CORRECT: {correct}"]
    lines += [f"DISTRACTOR: {d}" for d in distractors]
    return "\n".join(lines)


def refine_gateway(evaluator, rewriter=None, checker="PASS",
                   reflector="Remove the leaked cue from the stem."):
    backend = ScriptedBackend({
        "evaluator": evaluator,
        "reflector": reflector,
        "rewriter": rewriter or stripping_rewriter,
        "checker": checker,
    })
    return Gateway(backend), backend


@pytest.fixture
def marker_gateway():
    return refine_gateway(marker_evaluator)
