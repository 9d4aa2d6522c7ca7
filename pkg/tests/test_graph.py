from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from threatgraph.errors import ConstructionError, KindError, NodeLookupError
from threatgraph.features import FeatureMatrix, fit_tfidf, vectorize, weighted_jaccard
from threatgraph.clustering import kmeans
from threatgraph.graph import (
    RELATIONS,
    EdgeKind,
    GraphConfig,
    NodeKind,
    ThreatGraph,
    build_graph,
    degree_profile,
    graph_corpus,
    mentions_technique,
    neighbors,
    remove_edge_family,
)
from threatgraph.ingest import CpeId, IssueRecord, TechniqueRecord, VulnRecord

import graph_fixture as fx
from oracles import brute_force_edges


def fixture_graph(**kw):
    return build_graph(fx.VULNS, fx.ISSUES, fx.TECHNIQUES, fx.clusters(), **kw)


def edge_multiset(g):
    return Counter((e.src, e.kind.value, e.dst, e.reverse) for e in g.edges)


def test_edges_match_brute_force():
    g = fixture_graph()
    assert len(g) <= 10
    assigns = {f: m.assignments for f, m in fx.clusters().items()}
    expected = brute_force_edges(fx.VULNS, fx.ISSUES, fx.TECHNIQUES, assigns)
    assert edge_multiset(g) == expected
    kinds = {k for (_, k, _, _) in expected}
    assert kinds == {k.value for k in EdgeKind}


def test_one_cve_two_cpes():
    v = VulnRecord("CVE-2020-1111", "x", cpes=(CpeId("a", "b", "1"), CpeId("a", "c", "1")))
    g = build_graph([v], [], [])
    assert len(g.edges) == 4
    assert sum(e.kind is EdgeKind.AFFECTS and not e.reverse for e in g.edges) == 2


def test_identical_description_shares_vector():
    v = VulnRecord("CVE-2020-1111", "prompt injection jailbreak")
    t = TechniqueRecord("T1", "prompt injection", "Initial Access", "jailbreak")
    g = build_graph([v], [], [t])
    assert any(e.kind is EdgeKind.SHARES_VECTOR for e in g.edges)


def test_jaccard_threshold_is_strict():
    v = VulnRecord("CVE-2020-1111", "alpha beta gamma delta")
    t = TechniqueRecord("T1", "alpha", "Impact", "omega")
    corpus = graph_corpus([v], [], [t])
    tfidf = fit_tfidf(corpus)
    j = weighted_jaccard(vectorize(tfidf, v.description), vectorize(tfidf, t.text))
    assert 0 < j < 1
    at = build_graph([v], [], [t], tfidf=tfidf, config=GraphConfig(jaccard_threshold=j))
    below = build_graph([v], [], [t], tfidf=tfidf, config=GraphConfig(jaccard_threshold=j - 1e-9))
    assert not any(e.kind is EdgeKind.SHARES_VECTOR for e in at.edges)
    assert any(e.kind is EdgeKind.SHARES_VECTOR for e in below.edges)


def test_unknown_cluster_member():
    bad = kmeans(FeatureMatrix(("CVE-2099-0001",), np.array([1.0])), 1)
    with pytest.raises(ConstructionError, match="CVE-2099-0001"):
        build_graph(fx.VULNS, [], [], {"asr": bad})


def test_invariants_on_fixture():
    g = fixture_graph()
    edges = set(g.edges)
    assert len(edges) == len(g.edges)
    for e in g.edges:
        assert e.mirrored() in edges
    assert {n.features.shape for n in g.nodes.values()} == {(64 + 7,)}
    for nid, node in g.nodes.items():
        assert node.features[64 + list(NodeKind).index(node.kind)] == 1.0


def test_neighbors_and_errors():
    g = fixture_graph()
    assert neighbors(g, "cpe:acme:serve:2.1", EdgeKind.AFFECTS) == ["CVE-2021-0001", "CVE-2021-0002"]
    assert neighbors(g, "CVE-2021-0001", "AFFECTS_REV") == ["cpe:acme:infer:1.0", "cpe:acme:serve:2.1"]
    assert neighbors(g, "CVE-2021-0001", EdgeKind.AFFECTS) == []
    with pytest.raises(NodeLookupError):
        neighbors(g, "nope", EdgeKind.AFFECTS)


def test_degree_profile():
    g = fixture_graph()
    assert degree_profile(g, "CVE-2021-0001") == (2, 1)
    with pytest.raises(KindError):
        degree_profile(g, "tech:AML.T0024")
    iso = build_graph([VulnRecord("CVE-2020-1111")], [], [])
    assert degree_profile(iso, "CVE-2020-1111") == (0, 0)
    three = [IssueRecord("r", n, "t", "CVE-2020-1111", 0.0, ("CVE-2020-1111",)) for n in range(3)]
    v = VulnRecord("CVE-2020-1111", cpes=(CpeId("a", "b", "1"), CpeId("a", "c", "1")))
    assert degree_profile(build_graph([v], three, []), "CVE-2020-1111") == (2, 3)
    v3 = VulnRecord("CVE-2020-1111", cpes=v.cpes + (CpeId("a", "d", "1"),))
    assert degree_profile(build_graph([v3], three, []), "CVE-2020-1111") == (3, 3)


def test_remove_edge_family():
    g = fixture_graph()
    forward = sum(e.kind is EdgeKind.AFFECTS and not e.reverse for e in g.edges)
    h = remove_edge_family(g, EdgeKind.AFFECTS)
    assert not any(e.kind is EdgeKind.AFFECTS for e in h.edges)
    assert len(g.edges) - len(h.edges) == 2 * forward
    assert h.node_ids == g.node_ids
    assert remove_edge_family(h, EdgeKind.AFFECTS).edges == h.edges
    assert any(e.kind is EdgeKind.AFFECTS for e in g.edges)


def test_save_load_roundtrip(tmp_path):
    g = fixture_graph()
    g.save(tmp_path / "a")
    back = ThreatGraph.load(tmp_path / "a")
    back.save(tmp_path / "b")
    for name in ("nodes.csv", "edges.csv", "features.csv"):
        a = (tmp_path / "a" / name).read_bytes()
        assert a == (tmp_path / "b" / name).read_bytes()
        assert b"\r\n" not in a
    assert (tmp_path / "a" / "edges.csv").read_text().splitlines()[0] == "src,kind,dst,is_reverse"


def test_deterministic_serialization(tmp_path):
    fixture_graph().save(tmp_path / "a")
    fixture_graph().save(tmp_path / "b")
    for name in ("nodes.csv", "edges.csv", "features.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_mean_adjacency_rows():
    g = fixture_graph()
    adj = g.mean_adjacency
    assert set(adj) == set(RELATIONS)
    A = adj[(EdgeKind.AFFECTS, False)]
    row = A[g.index["cpe:acme:serve:2.1"]].toarray()[0]
    assert row.sum() == pytest.approx(1.0) and (row > 0).sum() == 2


def test_validation_rejects_wrong_kinds():
    g = fixture_graph()
    from threatgraph.graph import Edge
    bad = Edge("cpe:acme:infer:1.0", EdgeKind.AFFECTS, "CVE-2021-0001")
    with pytest.raises(ConstructionError):
        ThreatGraph(g.nodes, list(g.edges) + [bad, bad.mirrored()], g.dims)
    with pytest.raises(ConstructionError):
        ThreatGraph(g.nodes, list(g.edges) + [Edge("CVE-2021-0001", EdgeKind.AFFECTS, "cpe:zzz")], g.dims)


def test_mentions_technique_forms():
    assert mentions_technique("see AML.T0024.", "AML.T0024")
    assert not mentions_technique("AML.T00240", "AML.T0024")
    assert mentions_technique("https://attack.mitre.org/techniques/T1041", "T1041")
    assert mentions_technique("https://atlas.mitre.org/techniques/AML/T0024", "AML.T0024")


@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 3)), max_size=15))
@settings(max_examples=40)
def test_random_graphs_keep_bijection_and_typing(pairs):
    cves = {}
    for c, p in pairs:
        cves.setdefault(c, set()).add(p)
    vulns = [VulnRecord(f"CVE-2020-{1000 + c}", f"text {c}", cpes=tuple(CpeId("v", f"p{p}", "1") for p in sorted(ps)))
             for c, ps in sorted(cves.items())]
    g = build_graph(vulns, [], [])
    edges = set(g.edges)
    assert all(e.mirrored() in edges for e in edges)
    assert sum(len(ps) for ps in cves.values()) * 2 == len(edges)
