"""Paper acquisition and import.

Three concerns live here: pulling paper metadata from the arXiv Atom API,
filtering stubs by a task-keyword lexicon, and importing an externally
converted paper directory (markdown body + images + figure manifest) into
an immutable PaperRecord. A small on-disk corpus store keeps imported
records addressable by paper id and figure content hash.
"""

from __future__ import annotations

import bisect
import hashlib
import json
import logging
import re
import time
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .errors import (
    ConflictError,
    FeedParseError,
    ImportError_,
    PreconditionError,
    RetryableError,
)
from .gateway import RateLimiter
from .textutil import paragraph_spans, slice_span, tokenize

log = logging.getLogger(__name__)

ARXIV_API_URL = "http://export.arxiv.org/api/query"

_ATOM_NS = {
    "atom": "http://www.w3.org/2005/Atom",
    "opensearch": "http://a9.com/-/spec/opensearch/1.1/",
}


@dataclass(frozen=True)
class PaperStub:
    """Metadata-only view of a paper, prior to import."""

    paper_id: str
    title: str
    abstract: str
    published: str  # ISO-8601, as given by the feed
    categories: tuple[str, ...] = ()


@dataclass(frozen=True)
class ContextSnippet:
    text: str
    char_span: tuple[int, int]
    distance: int  # paragraph offset from the figure reference


@dataclass(frozen=True)
class FigureAsset:
    figure_id: str
    image_path: str  # path under the paper's source_dir
    content_hash: str
    caption: str
    media_type: str = "image/png"
    context: tuple[ContextSnippet, ...] = ()
    reference_warning: bool = False  # true when the body never cites the figure


@dataclass(frozen=True)
class PaperRecord:
    paper_id: str
    title: str
    body_text: str
    figures: tuple[FigureAsset, ...]
    source_dir: str
    domain: str = ""  # optional research-area label supplied at import

    def figure(self, figure_id: str) -> FigureAsset:
        for f in self.figures:
            if f.figure_id == figure_id:
                return f
        raise KeyError(figure_id)


# --------------------------------------------------------------------------
# arXiv metadata client
# --------------------------------------------------------------------------


def _parse_feed(xml_text: str) -> list[PaperStub]:
    try:
        root = ET.fromstring(xml_text)
    except ET.ParseError as e:
        raise FeedParseError(f"unparseable feed: {e}", "<document>")
    stubs = []
    for n, entry in enumerate(root.findall("atom:entry", _ATOM_NS), start=1):
        ident = entry.findtext("atom:id", default="", namespaces=_ATOM_NS).strip()
        title = " ".join(entry.findtext("atom:title", default="", namespaces=_ATOM_NS).split())
        abstract = " ".join(entry.findtext("atom:summary", default="", namespaces=_ATOM_NS).split())
        published = entry.findtext("atom:published", default="", namespaces=_ATOM_NS).strip()
        if not ident or not title or not published:
            raise FeedParseError("entry missing id, title, or published date", f"entry {n}")
        paper_id = ident.rsplit("/abs/", 1)[-1]
        categories = tuple(
            c.get("term", "") for c in entry.findall("atom:category", _ATOM_NS) if c.get("term")
        )
        stubs.append(PaperStub(paper_id, title, abstract, published, categories))
    return stubs


class ArxivClient:
    """Paginated arXiv API access with a pluggable page transport.

    The transport takes (query, start, page_size) and returns Atom XML,
    which keeps every parsing and pagination path testable offline.
    """

    def __init__(self, transport: Callable[[str, int, int], str] | None = None,
                 page_size: int = 100, rate_per_s: float = 0.34,
                 retry_limit: int = 3, backoff_s: float = 2.0):
        self._transport = transport or self._http_transport
        self._page_size = page_size
        self._limiter = RateLimiter(rate_per_s, burst=1)
        self._retry_limit = retry_limit
        self._backoff_s = backoff_s

    def _http_transport(self, query: str, start: int, page_size: int) -> str:
        import httpx

        params = {
            "search_query": query,
            "start": start,
            "max_results": page_size,
            "sortBy": "submittedDate",
            "sortOrder": "descending",
        }
        resp = httpx.get(ARXIV_API_URL, params=params, timeout=60.0)
        resp.raise_for_status()
        return resp.text

    def _fetch_page(self, query: str, start: int, page_size: int) -> str:
        attempts = 0
        while True:
            self._limiter.acquire()
            try:
                return self._transport(query, start, page_size)
            except FeedParseError:
                raise
            except Exception as e:  # transport-level failure: retry with backoff
                attempts += 1
                if attempts >= self._retry_limit:
                    raise RetryableError(f"metadata fetch failed: {e}", attempts)
                log.warning("metadata fetch attempt %d failed: %s", attempts, e)
                time.sleep(self._backoff_s * (2 ** (attempts - 1)))

    def fetch_metadata(self, query: str, max_results: int) -> list[PaperStub]:
        if not query:
            raise PreconditionError("query must be non-empty")
        if max_results < 1:
            raise PreconditionError("max_results must be >= 1")
        stubs: list[PaperStub] = []
        start = 0
        while len(stubs) < max_results:
            want = min(self._page_size, max_results - len(stubs))
            page = _parse_feed(self._fetch_page(query, start, want))
            stubs.extend(page)
            if len(page) < want:  # feed exhausted
                break
            start += len(page)
        stubs = stubs[:max_results]
        stubs.sort(key=lambda s: s.published, reverse=True)
        return stubs


def filter_by_keywords(stubs: Sequence[PaperStub], lexicon: Iterable[str]) -> list[PaperStub]:
    """Keep stubs whose title or abstract contains a lexicon term.

    Matching is case-insensitive on whole tokens; multi-word terms match as
    a contiguous token run. An empty lexicon selects nothing: ingestion is
    opt-in, never "everything because nobody configured keywords".
    """
    terms = list(lexicon)
    for term in terms:
        if not term or term != term.lower():
            raise PreconditionError(f"lexicon entries must be lowercase and non-empty: {term!r}")
    if not terms:
        return []
    term_tokens = [tuple(tokenize(t)) for t in terms]
    term_tokens = [t for t in term_tokens if t]
    out = []
    for stub in stubs:
        toks = tokenize(stub.title + " " + stub.abstract)
        if any(_contains_run(toks, tt) for tt in term_tokens):
            out.append(stub)
    return out


def _contains_run(tokens: list[str], run: tuple[str, ...]) -> bool:
    if len(run) == 1:
        return run[0] in tokens
    n = len(run)
    return any(tuple(tokens[i:i + n]) == run for i in range(len(tokens) - n + 1))


def load_keyword_lexicon(path: str | Path) -> list[str]:
    """One lowercase term per line; blank lines and # comments ignored."""
    terms = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            terms.append(line)
    return terms


# --------------------------------------------------------------------------
# Parsed-paper import
# --------------------------------------------------------------------------

_MEDIA_TYPES = {".png": "image/png", ".jpg": "image/jpeg", ".jpeg": "image/jpeg",
                ".gif": "image/gif", ".webp": "image/webp"}

_FIGREF_RE = re.compile(r"\b(?:figure|fig\.?)\s*(\d+)\b", re.IGNORECASE)


def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def import_parsed_paper(source_dir: str | Path, paper_id: str | None = None,
                        domain: str = "", context_window: int = 1) -> PaperRecord:
    """Import one converter output directory.

    Expected layout: exactly one *.md body, an images directory, and
    dir/figures.manifest with one JSON record per line:
    {"figure_id": …, "image_file": …, "caption": …, "page": …}.
    """
    source_dir = Path(source_dir)
    if not source_dir.is_dir():
        raise ImportError_("not a directory", str(source_dir))
    bodies = sorted(source_dir.glob("*.md"))
    if len(bodies) != 1:
        raise ImportError_(f"expected exactly one markdown body, found {len(bodies)}",
                           str(source_dir))
    body_text = bodies[0].read_text(encoding="utf-8")
    if not body_text.strip():
        raise ImportError_("body markdown is empty", str(bodies[0]))

    manifest_path = source_dir / "figures.manifest"
    if not manifest_path.is_file():
        raise ImportError_("missing figures.manifest", str(manifest_path))

    meta = {}
    meta_path = source_dir / "meta.json"
    if meta_path.is_file():
        meta = json.loads(meta_path.read_text(encoding="utf-8"))

    figures: list[FigureAsset] = []
    seen_ids: set[str] = set()
    for lineno, line in enumerate(manifest_path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            figure_id = rec["figure_id"]
            image_file = rec["image_file"]
            caption = rec["caption"]
        except (json.JSONDecodeError, KeyError, TypeError) as e:
            raise ImportError_(f"bad manifest record at line {lineno}: {e}", str(manifest_path))
        if not figure_id or figure_id in seen_ids:
            raise ImportError_(f"duplicate or empty figure_id at line {lineno}", str(manifest_path))
        seen_ids.add(figure_id)
        if not str(caption).strip():
            raise ImportError_(f"empty caption for figure {figure_id}", str(manifest_path))
        image_path = source_dir / image_file
        if not image_path.is_file():
            raise ImportError_(f"figure {figure_id} references missing image", str(image_path))
        media_type = _MEDIA_TYPES.get(image_path.suffix.lower(), "application/octet-stream")
        figures.append(FigureAsset(
            figure_id=str(figure_id),
            image_path=str(image_path.relative_to(source_dir)),
            content_hash=_sha256_file(image_path),
            caption=str(caption),
            media_type=media_type,
        ))

    record = PaperRecord(
        paper_id=paper_id or meta.get("paper_id") or source_dir.name,
        title=meta.get("title", source_dir.name),
        body_text=body_text,
        figures=tuple(figures),
        source_dir=str(source_dir),
        domain=domain or meta.get("domain", ""),
    )
    linked = []
    for fig in record.figures:
        snippets, warned = link_figure_context(record, fig.figure_id, context_window)
        linked.append(replace(fig, context=tuple(snippets), reference_warning=warned))
    return replace(record, figures=tuple(linked))


def _figure_numbers(record: PaperRecord) -> tuple[dict[str, int], bool]:
    """Map figure_id -> in-text figure number.

    Numbers come from digits embedded in the manifest ids; if any id lacks
    a number or numbers collide, every figure falls back to manifest order
    and the ambiguity is flagged.
    """
    numbers: dict[str, int] = {}
    for fig in record.figures:
        m = re.search(r"(\d+)", fig.figure_id)
        if not m:
            numbers = {}
            break
        numbers[fig.figure_id] = int(m.group(1))
    if numbers and len(set(numbers.values())) == len(numbers):
        return numbers, False
    log.warning("paper %s: ambiguous figure numbering, falling back to manifest order",
                record.paper_id)
    return {f.figure_id: i + 1 for i, f in enumerate(record.figures)}, True


def link_figure_context(record: PaperRecord, figure_id: str,
                        window: int) -> tuple[list[ContextSnippet], bool]:
    """Collect paragraphs around each in-text reference to the figure.

    Returns (snippets nearest-first, warning). warning is true when the
    body never references the figure or its number had to be guessed.
    """
    if window < 0:
        raise PreconditionError("window must be >= 0")
    record.figure(figure_id)  # KeyError on unknown id
    numbers, ambiguous = _figure_numbers(record)
    number = numbers[figure_id]

    spans = paragraph_spans(record.body_text)
    starts = [s for s, _ in spans]
    ref_paragraphs: list[int] = []
    for m in _FIGREF_RE.finditer(record.body_text):
        if int(m.group(1)) != number:
            continue
        idx = bisect.bisect_right(starts, m.start()) - 1
        if idx >= 0 and m.start() < spans[idx][1]:
            ref_paragraphs.append(idx)
    if not ref_paragraphs:
        return [], True

    # keep minimal distance when reference windows overlap
    best: dict[int, int] = {}
    for p in ref_paragraphs:
        for q in range(max(0, p - window), min(len(spans), p + window + 1)):
            d = abs(q - p)
            if q not in best or d < best[q]:
                best[q] = d
    ordered = sorted(best.items(), key=lambda kv: (kv[1], kv[0]))
    snippets = [
        ContextSnippet(text=slice_span(record.body_text, spans[q]),
                       char_span=spans[q], distance=d)
        for q, d in ordered
    ]
    return snippets, ambiguous


# --------------------------------------------------------------------------
# Corpus store
# --------------------------------------------------------------------------


def _record_to_json(record: PaperRecord) -> dict:
    return {
        "paper_id": record.paper_id,
        "title": record.title,
        "body_text": record.body_text,
        "source_dir": record.source_dir,
        "domain": record.domain,
        "figures": [
            {
                "figure_id": f.figure_id,
                "image_path": f.image_path,
                "content_hash": f.content_hash,
                "caption": f.caption,
                "media_type": f.media_type,
                "reference_warning": f.reference_warning,
                "context": [
                    {"text": c.text, "char_span": list(c.char_span), "distance": c.distance}
                    for c in f.context
                ],
            }
            for f in record.figures
        ],
    }


def _record_from_json(obj: dict) -> PaperRecord:
    return PaperRecord(
        paper_id=obj["paper_id"],
        title=obj["title"],
        body_text=obj["body_text"],
        source_dir=obj["source_dir"],
        domain=obj.get("domain", ""),
        figures=tuple(
            FigureAsset(
                figure_id=f["figure_id"],
                image_path=f["image_path"],
                content_hash=f["content_hash"],
                caption=f["caption"],
                media_type=f.get("media_type", "image/png"),
                reference_warning=f.get("reference_warning", False),
                context=tuple(
                    ContextSnippet(c["text"], tuple(c["char_span"]), c["distance"])
                    for c in f.get("context", [])
                ),
            )
            for f in obj["figures"]
        ),
    )


class CorpusStore:
    """Append-only directory of imported papers.

    Layout: root/<safe_paper_id>/record.json plus root/index.json mapping
    paper ids to record paths and figure hashes to image files.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._index_path = self.root / "index.json"
        if self._index_path.is_file():
            self._index = json.loads(self._index_path.read_text(encoding="utf-8"))
        else:
            self._index = {"papers": {}, "figures": {}}

    def _save_index(self):
        self._index_path.write_text(
            json.dumps(self._index, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    @staticmethod
    def _safe(paper_id: str) -> str:
        return re.sub(r"[^0-9A-Za-z._-]", "_", paper_id)

    def add(self, record: PaperRecord) -> None:
        if record.paper_id in self._index["papers"]:
            raise ConflictError(f"paper {record.paper_id} already in store")
        sub = self.root / self._safe(record.paper_id)
        sub.mkdir(parents=True, exist_ok=True)
        (sub / "record.json").write_text(
            json.dumps(_record_to_json(record), indent=2, sort_keys=True, ensure_ascii=False),
            encoding="utf-8")
        self._index["papers"][record.paper_id] = {
            "dir": sub.name,
            "figure_hashes": sorted(f.content_hash for f in record.figures),
        }
        for f in record.figures:
            self._index["figures"][f.content_hash] = {
                "path": str(Path(record.source_dir) / f.image_path),
                "media_type": f.media_type,
            }
        self._save_index()

    def get(self, paper_id: str) -> PaperRecord:
        if paper_id not in self._index["papers"]:
            raise KeyError(paper_id)
        sub = self.root / self._index["papers"][paper_id]["dir"]
        return _record_from_json(json.loads((sub / "record.json").read_text(encoding="utf-8")))

    def paper_ids(self) -> list[str]:
        return sorted(self._index["papers"])

    def records(self) -> list[PaperRecord]:
        return [self.get(pid) for pid in self.paper_ids()]

    def resolve_figure(self, content_hash: str) -> tuple[bytes, str]:
        """Image bytes + media type for a figure content hash."""
        entry = self._index["figures"].get(content_hash)
        if entry is None:
            raise KeyError(content_hash)
        return Path(entry["path"]).read_bytes(), entry["media_type"]

    def figure_hashes(self) -> list[str]:
        return sorted(self._index["figures"])
