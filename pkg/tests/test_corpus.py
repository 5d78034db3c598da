import json
import re

import pytest
from hypothesis import given, strategies as st

from conftest import make_paper_dir, png_bytes
from mcqforge.corpus import (
    ArxivClient,
    CorpusStore,
    PaperStub,
    filter_by_keywords,
    import_parsed_paper,
    link_figure_context,
    load_keyword_lexicon,
)
from mcqforge.errors import (
    ConflictError,
    FeedParseError,
    ImportError_,
    PreconditionError,
    RetryableError,
)


def atom_feed(entries):
    """Build an Atom feed; entries are (id, title, summary, published)."""
    blocks = []
    for eid, title, summary, published in entries:
        blocks.append(f"""  <entry>
    <id>http://arxiv.org/abs/{eid}</id>
    <title>{title}</title>
    <summary>{summary}</summary>
    <published>{published}</published>
    <category term="cond-mat.mtrl-sci"/>
  </entry>""")
    return ('<?xml version="1.0" encoding="UTF-8"?>\n'
            '<feed xmlns="http://www.w3.org/2005/Atom">\n'
            + "\n".join(blocks) + "\n</feed>\n")


SEVEN = [
    ("2401.00001", "Alloy grain growth", "a study of grains", "2024-01-15T00:00:00Z"),
    ("2406.00002", "Oxide films", "thin film property", "2024-06-02T00:00:00Z"),
    ("2403.00003", "Battery cathodes", "cathode structure", "2024-03-10T00:00:00Z"),
    ("2409.00004", "Magnetic order", "spin textures", "2024-09-01T00:00:00Z"),
    ("2402.00005", "Polymer blends", "blend morphology", "2024-02-20T00:00:00Z"),
    ("2408.00006", "Perovskite cells", "solar performance", "2024-08-11T00:00:00Z"),
    ("2405.00007", "Ceramic sintering", "sintering processing", "2024-05-05T00:00:00Z"),
]


def feed_transport(entries):
    """Date-descending pages, the way the remote serves them."""
    ordered = sorted(entries, key=lambda e: e[3], reverse=True)
    calls = []

    def transport(query, start, page_size):
        calls.append((start, page_size))
        return atom_feed(ordered[start:start + page_size])

    transport.calls = calls
    return transport


def test_fetch_preconditions():
    client = ArxivClient(transport=feed_transport(SEVEN))
    with pytest.raises(PreconditionError):
        client.fetch_metadata("", 5)
    with pytest.raises(PreconditionError):
        client.fetch_metadata("all:materials", 0)


def test_fetch_three_newest_hand_ordered():
    client = ArxivClient(transport=feed_transport(SEVEN), rate_per_s=10000)
    stubs = client.fetch_metadata("all:materials", 3)
    # hand-sorted: 2024-09-01, 2024-08-11, 2024-06-02
    assert [s.paper_id for s in stubs] == ["2409.00004", "2408.00006", "2406.00002"]


def test_fetch_paginates_and_caps():
    transport = feed_transport(SEVEN)
    client = ArxivClient(transport=transport, page_size=3, rate_per_s=10000)
    stubs = client.fetch_metadata("all:materials", 7)
    assert transport.calls == [(0, 3), (3, 3), (6, 1)]
    assert len(stubs) == 7
    dates = [s.published for s in stubs]
    assert dates == sorted(dates, reverse=True)


def test_fetch_stops_on_exhausted_feed():
    client = ArxivClient(transport=feed_transport(SEVEN), page_size=10, rate_per_s=10000)
    assert len(client.fetch_metadata("all:materials", 50)) == 7


def test_malformed_feed_names_entry():
    bad = atom_feed(SEVEN[:2]).replace("<title>Oxide films</title>", "<title></title>")
    client = ArxivClient(transport=lambda q, s, n: bad, rate_per_s=10000)
    with pytest.raises(FeedParseError) as e:
        client.fetch_metadata("all:materials", 2)
    assert "entry 2" in str(e.value.entry)


def test_unparseable_xml_is_parse_error():
    client = ArxivClient(transport=lambda q, s, n: "<feed><entry>", rate_per_s=10000)
    with pytest.raises(FeedParseError):
        client.fetch_metadata("q", 1)


def test_fetch_retries_then_succeeds():
    state = {"calls": 0}
    good = feed_transport(SEVEN)

    def flaky(query, start, page_size):
        state["calls"] += 1
        if state["calls"] <= 2:
            raise OSError("connection reset")
        return good(query, start, page_size)

    client = ArxivClient(transport=flaky, rate_per_s=10000, retry_limit=3, backoff_s=0)
    assert len(client.fetch_metadata("q", 3)) == 3


def test_fetch_retry_budget_exhausted():
    def always_down(query, start, page_size):
        raise OSError("down")

    client = ArxivClient(transport=always_down, rate_per_s=10000, retry_limit=3,
                         backoff_s=0)
    with pytest.raises(RetryableError) as e:
        client.fetch_metadata("q", 1)
    assert e.value.attempts == 3


# --------------------------------------------------------------------------
# keyword filtering
# --------------------------------------------------------------------------


def stub(title, abstract=""):
    return PaperStub(paper_id=title.lower().replace(" ", "-"), title=title,
                     abstract=abstract, published="2024-01-01T00:00:00Z")


def test_filter_keeps_spec_examples():
    stubs = [stub("On the property of alloys"), stub("Structure of oxides")]
    kept = filter_by_keywords(stubs, ["property", "structure"])
    assert kept == stubs


def test_filter_empty_lexicon_selects_nothing():
    assert filter_by_keywords([stub("property rich paper")], []) == []


def test_filter_whole_token_only():
    stubs = [stub("Microstructured films")]  # "structure" is a substring, not a token
    assert filter_by_keywords(stubs, ["structure"]) == []
    assert filter_by_keywords([stub("Grain structure maps")], ["structure"]) != []


def test_filter_case_insensitive_and_abstract():
    s = stub("Neutral title", abstract="We study the PROCESSING route.")
    assert filter_by_keywords([s], ["processing"]) == [s]


def test_filter_rejects_bad_lexicon_entries():
    with pytest.raises(PreconditionError):
        filter_by_keywords([], ["Property"])
    with pytest.raises(PreconditionError):
        filter_by_keywords([], [""])


def test_filter_multiword_term_contiguous():
    s = stub("Tuning the magnetic field response")
    assert filter_by_keywords([s], ["magnetic field"]) == [s]
    gap = stub("Magnetic domain field maps")  # tokens not adjacent
    assert filter_by_keywords([gap], ["magnetic field"]) == []


TWENTY = [
    stub("Grain growth in alloys", "coarse grains"),
    stub("Thin film property maps", "dielectric behavior"),
    stub("Cathode structure studies", "layered oxides"),
    stub("Unrelated astronomy", "stellar winds"),
    stub("Processing routes for steel", "thermal treatment"),
    stub("Neutral title one", "contains property keyword"),
    stub("Neutral title two", "contains structure keyword"),
    stub("Neutral title three", "nothing relevant"),
    stub("Quantum dots", "optical gaps"),
    stub("Performance of coatings", "wear tests"),
    stub("Microstructure evolution", "annealing study"),
    stub("Catalysis notes", "surface sites"),
    stub("Characterization methods", "microscopy"),
    stub("Battery degradation", "cycling fade"),
    stub("Polymer blends", "phase separation"),
    stub("Property-performance links", "design rules"),
    stub("Topology optimization", "lattice beams"),
    stub("Solar absorbers", "bandgap tuning data"),
    stub("Ceramic joints", "brazing practice"),
    stub("Alloy design", "high entropy structure"),
]


def test_filter_twenty_stub_fixture_matches_brute_force():
    lexicon = ["property", "structure", "processing"]
    got = filter_by_keywords(TWENTY, lexicon)
    # independent oracle: regex word-boundary scan
    expected = []
    for s in TWENTY:
        text = (s.title + " " + s.abstract).lower()
        if any(re.search(rf"\b{re.escape(term)}\b", text) for term in lexicon):
            expected.append(s)
    assert got == expected
    assert len(expected) == 7  # hand count over the fixture


_LEX = ["property", "structure", "processing", "performance"]


@given(st.lists(st.sampled_from(_LEX), max_size=4, unique=True))
def test_filter_monotone_in_lexicon(sub):
    small = filter_by_keywords(TWENTY, sub)
    full = filter_by_keywords(TWENTY, _LEX)
    assert set(s.paper_id for s in small) <= set(s.paper_id for s in full)
    assert all(s in TWENTY for s in small)


def test_load_keyword_lexicon_skips_comments(tmp_path):
    path = tmp_path / "kw.txt"
    path.write_text("# comment\nproperty\n\nstructure\n", encoding="utf-8")
    assert load_keyword_lexicon(path) == ["property", "structure"]


# --------------------------------------------------------------------------
# import
# --------------------------------------------------------------------------

BODY = """# A fixture paper

Intro paragraph with nothing figure related.

As shown in Figure 1, the lattice peaks split under field.

More discussion follows the reference, with details.

Figure 2 presents the doubled peak intensity measurement.

Closing remarks paragraph.
"""


def test_import_basic(tmp_path):
    d = make_paper_dir(tmp_path, "p1", BODY,
                       [("fig1", "Peak splitting."), ("fig2", "Intensity doubling.")])
    record = import_parsed_paper(d)
    assert record.paper_id == "p1"
    assert len(record.figures) == 2
    assert record.body_text == BODY
    assert all(len(f.content_hash) == 64 for f in record.figures)
    assert record.figures[0].content_hash != record.figures[1].content_hash


def test_import_round_trips_manifest_pairs(tmp_path):
    figures = [("fig1", "Caption one."), ("fig2", "Caption two.")]
    d = make_paper_dir(tmp_path, "p1", BODY, figures)
    record = import_parsed_paper(d)
    manifest = [json.loads(line) for line in
                (d / "figures.manifest").read_text().splitlines()]
    assert [(f.figure_id, f.caption) for f in record.figures] \
        == [(m["figure_id"], m["caption"]) for m in manifest]


def test_import_missing_manifest(tmp_path):
    d = make_paper_dir(tmp_path, "p1", BODY, [("fig1", "Cap.")])
    (d / "figures.manifest").unlink()
    with pytest.raises(ImportError_) as e:
        import_parsed_paper(d)
    assert "figures.manifest" in e.value.path


def test_import_dangling_image(tmp_path):
    d = make_paper_dir(tmp_path, "p1", BODY, [("fig1", "Cap.")])
    (d / "images" / "fig1.png").unlink()
    with pytest.raises(ImportError_) as e:
        import_parsed_paper(d)
    assert "fig1.png" in e.value.path


def test_import_empty_caption(tmp_path):
    d = make_paper_dir(tmp_path, "p1", BODY, [("fig1", "  ")])
    with pytest.raises(ImportError_, match="caption"):
        import_parsed_paper(d)


def test_import_duplicate_figure_id(tmp_path):
    d = make_paper_dir(tmp_path, "p1", BODY, [("fig1", "A.")])
    manifest = d / "figures.manifest"
    manifest.write_text(manifest.read_text() * 2, encoding="utf-8")
    with pytest.raises(ImportError_, match="duplicate"):
        import_parsed_paper(d)


def test_import_requires_single_markdown(tmp_path):
    d = make_paper_dir(tmp_path, "p1", BODY, [("fig1", "Cap.")])
    (d / "extra.md").write_text("stray", encoding="utf-8")
    with pytest.raises(ImportError_, match="markdown"):
        import_parsed_paper(d)


def test_import_hashes_stable_across_runs(tmp_path):
    d = make_paper_dir(tmp_path, "p1", BODY, [("fig1", "Cap."), ("fig2", "Cap2.")])
    first = import_parsed_paper(d)
    second = import_parsed_paper(d)
    assert [f.content_hash for f in first.figures] \
        == [f.content_hash for f in second.figures]


def test_import_at_paper_scale_gives_378_unique_hashes(tmp_path):
    # 26 papers x 9 figures + 18 papers x 8 figures = 378 unique images
    hashes = set()
    paper_count = 0
    global_idx = 0
    for p in range(44):
        n_figs = 9 if p < 26 else 8
        figures = []
        for k in range(n_figs):
            color = (global_idx % 256, global_idx // 256, 77)
            figures.append((f"fig{k + 1}", f"Caption {global_idx}.", color))
            global_idx += 1
        body = "Intro.\n\n" + "\n\n".join(
            f"Figure {k + 1} shows panel {k + 1}." for k in range(n_figs)) + "\n"
        d = make_paper_dir(tmp_path, f"paper{p:02d}", body, figures)
        record = import_parsed_paper(d)
        paper_count += 1
        hashes.update(f.content_hash for f in record.figures)
    assert paper_count == 44
    assert global_idx == 378
    assert len(hashes) == 378


# --------------------------------------------------------------------------
# figure-context linking
# --------------------------------------------------------------------------


def paragraphs_of(body):
    return [p.strip() for p in re.split(r"\n\s*\n", body) if p.strip()]


def test_link_referenced_once_window_1(tmp_path):
    d = make_paper_dir(tmp_path, "p1", BODY, [("fig1", "Cap.")])
    record = import_parsed_paper(d)
    snippets, warned = link_figure_context(record, "fig1", window=1)
    assert not warned
    assert len(snippets) == 3  # reference paragraph +/- 1
    assert snippets[0].distance == 0
    assert "Figure 1" in snippets[0].text


def test_link_window_0_only_referencing_paragraph(tmp_path):
    d = make_paper_dir(tmp_path, "p1", BODY, [("fig1", "Cap.")])
    record = import_parsed_paper(d)
    snippets, _ = link_figure_context(record, "fig1", window=0)
    assert [s.distance for s in snippets] == [0]
    assert snippets[0].text.startswith("As shown in Figure 1")


def test_link_two_references_window_2_hand_enumerated(tmp_path):
    paras = [
        "Paragraph zero has background.",
        "Figure 2 first appears here in paragraph one.",
        "Paragraph two continues the analysis.",
        "Paragraph three is in between.",
        "Paragraph four builds up again.",
        "We return to Figure 2 in paragraph five.",
        "Paragraph six wraps that discussion.",
        "Paragraph seven concludes.",
    ]
    body = "\n\n".join(paras) + "\n"
    d = make_paper_dir(tmp_path, "p1", body, [("fig2", "Cap.")])
    record = import_parsed_paper(d)
    snippets, warned = link_figure_context(record, "fig2", window=2)
    assert not warned
    # hand enumeration: refs at paragraphs 1 and 5; window 2; min distance on merge
    expected = [(1, 0), (5, 0), (0, 1), (2, 1), (4, 1), (6, 1), (3, 2), (7, 2)]
    assert [(paras.index(s.text), s.distance) for s in snippets] == expected
    for s in snippets:
        assert record.body_text[s.char_span[0]:s.char_span[1]] == s.text


def test_link_fig_dot_abbreviation(tmp_path):
    body = "Intro.\n\nSee Fig. 3 for the peak data.\n\nEnd.\n"
    d = make_paper_dir(tmp_path, "p1", body, [("fig3", "Cap.")])
    record = import_parsed_paper(d)
    snippets, warned = link_figure_context(record, "fig3", window=0)
    assert not warned and len(snippets) == 1


def test_link_unreferenced_warns_not_errors(tmp_path):
    body = "Intro only, no references at all.\n\nStill nothing.\n"
    d = make_paper_dir(tmp_path, "p1", body, [("fig1", "Cap.")])
    record = import_parsed_paper(d)
    snippets, warned = link_figure_context(record, "fig1", window=2)
    assert snippets == [] and warned
    assert record.figures[0].reference_warning


def test_link_unknown_figure_raises(tmp_path):
    d = make_paper_dir(tmp_path, "p1", BODY, [("fig1", "Cap.")])
    record = import_parsed_paper(d)
    with pytest.raises(KeyError):
        link_figure_context(record, "nope", 1)


def test_link_ambiguous_numbering_falls_back_with_warning(tmp_path):
    body = "Figure 1 here.\n\nFigure 2 there.\n"
    d = make_paper_dir(tmp_path, "p1", body, [("figA", "A."), ("figB", "B.")])
    record = import_parsed_paper(d)
    snippets, warned = link_figure_context(record, "figB", window=0)
    assert warned  # numbering guessed from manifest order
    assert len(snippets) == 1 and "Figure 2" in snippets[0].text


def test_import_populates_context_byte_exact(tmp_path):
    d = make_paper_dir(tmp_path, "p1", BODY, [("fig1", "Cap."), ("fig2", "Cap2.")])
    record = import_parsed_paper(d)
    for fig in record.figures:
        assert fig.context, fig.figure_id
        for s in fig.context:
            assert record.body_text[s.char_span[0]:s.char_span[1]] == s.text


# --------------------------------------------------------------------------
# corpus store
# --------------------------------------------------------------------------


def test_store_round_trip_and_resolution(tmp_path):
    d = make_paper_dir(tmp_path / "src", "p1", BODY,
                       [("fig1", "Cap."), ("fig2", "Cap2.")], domain="magnetism")
    record = import_parsed_paper(d)
    store = CorpusStore(tmp_path / "store")
    store.add(record)
    loaded = store.get("p1")
    assert loaded == record
    assert store.paper_ids() == ["p1"]
    data, media_type = store.resolve_figure(record.figures[0].content_hash)
    assert media_type == "image/png"
    assert data == (d / record.figures[0].image_path).read_bytes()


def test_store_duplicate_paper_conflicts(tmp_path):
    d = make_paper_dir(tmp_path / "src", "p1", BODY, [("fig1", "Cap.")])
    record = import_parsed_paper(d)
    store = CorpusStore(tmp_path / "store")
    store.add(record)
    with pytest.raises(ConflictError):
        store.add(record)


def test_store_persists_across_instances(tmp_path):
    d = make_paper_dir(tmp_path / "src", "p1", BODY, [("fig1", "Cap.")])
    record = import_parsed_paper(d)
    CorpusStore(tmp_path / "store").add(record)
    fresh = CorpusStore(tmp_path / "store")
    assert fresh.get("p1") == record
    with pytest.raises(KeyError):
        fresh.resolve_figure("0" * 64)
