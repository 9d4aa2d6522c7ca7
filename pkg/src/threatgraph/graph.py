"""Heterogeneous threat graph: typed nodes, typed directed edges, reverses.

Edges flow messages from ``src`` to ``dst``; ``neighbors(g, v, r)`` lists the
sources of ``r``-edges that end at ``v``.
"""

from __future__ import annotations

import csv
import enum
import os
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, NamedTuple, Optional

import numpy as np
import scipy.sparse as sp

from .errors import ConstructionError, KindError, NodeLookupError
from .features import TfidfModel, vectorize, weighted_jaccard
from .ingest import CpeId, IssueRecord, TechniqueRecord, VulnRecord


class NodeKind(str, enum.Enum):
    CVE = "CVE"
    CPE = "CPE"
    ISSUE = "ISSUE"
    TECHNIQUE = "TECHNIQUE"
    ASR_CENTROID = "ASR_CENTROID"
    STEALTH_CENTROID = "STEALTH_CENTROID"
    COST_CENTROID = "COST_CENTROID"


NODE_KINDS = tuple(NodeKind)


class EdgeKind(str, enum.Enum):
    AFFECTS = "AFFECTS"
    REPORTED_IN = "REPORTED_IN"
    REFERENCES = "REFERENCES"
    SHARES_VECTOR = "SHARES_VECTOR"
    MEMBER_OF = "MEMBER_OF"
    STEALTH_SIM = "STEALTH_SIM"
    COST_SIM = "COST_SIM"


# forward endpoint kinds per edge family
EDGE_ENDPOINTS = {
    EdgeKind.AFFECTS: (NodeKind.CVE, NodeKind.CPE),
    EdgeKind.REPORTED_IN: (NodeKind.CVE, NodeKind.ISSUE),
    EdgeKind.REFERENCES: (NodeKind.ISSUE, NodeKind.TECHNIQUE),
    EdgeKind.SHARES_VECTOR: (NodeKind.CVE, NodeKind.TECHNIQUE),
    EdgeKind.MEMBER_OF: (NodeKind.CVE, NodeKind.ASR_CENTROID),
    EdgeKind.STEALTH_SIM: (NodeKind.CVE, NodeKind.STEALTH_CENTROID),
    EdgeKind.COST_SIM: (NodeKind.CVE, NodeKind.COST_CENTROID),
}

CLUSTER_FAMILIES = {
    "asr": (EdgeKind.MEMBER_OF, NodeKind.ASR_CENTROID, "asr"),
    "stealth": (EdgeKind.STEALTH_SIM, NodeKind.STEALTH_CENTROID, "stealth"),
    "cost": (EdgeKind.COST_SIM, NodeKind.COST_CENTROID, "cost"),
}


class Relation(NamedTuple):
    kind: EdgeKind
    reverse: bool

    @property
    def name(self) -> str:
        return self.kind.value + ("_REV" if self.reverse else "")


RELATIONS = tuple(Relation(k, rev) for k in EdgeKind for rev in (False, True))


class Edge(NamedTuple):
    src: str
    kind: EdgeKind
    dst: str
    reverse: bool = False

    @property
    def relation(self) -> Relation:
        return Relation(self.kind, self.reverse)

    def mirrored(self) -> "Edge":
        return Edge(self.dst, self.kind, self.src, not self.reverse)

    def sort_key(self):
        return (self.src, self.kind.value, self.dst, self.reverse)


@dataclass(frozen=True)
class Node:
    kind: NodeKind
    ref: str
    features: np.ndarray = field(repr=False)


DEFAULT_URL_PREFIXES = (
    "https://atlas.mitre.org/techniques/",
    "https://attack.mitre.org/techniques/",
)


@dataclass(frozen=True)
class GraphConfig:
    tfidf_dims: int = 64
    jaccard_threshold: float = 0.15
    url_prefixes: tuple = DEFAULT_URL_PREFIXES


# --- node ids and texts -------------------------------------------------------

def cpe_node_id(cpe: CpeId) -> str:
    return f"cpe:{cpe.vendor}:{cpe.product}:{cpe.version}"


def issue_node_id(issue: IssueRecord) -> str:
    return f"issue:{issue.repo}#{issue.issue_id}"


def technique_node_id(tech: TechniqueRecord) -> str:
    return f"tech:{tech.technique_id}"


def centroid_node_id(family: str, index: int) -> str:
    return f"{family}:{index:03d}"


def cpe_text(cpe: CpeId) -> str:
    parts = [cpe.vendor, cpe.product]
    if not cpe.is_wildcard:
        parts.append(cpe.version)
    return " ".join(p.replace("_", " ") for p in parts)


def graph_corpus(vulns, issues, techniques) -> list[str]:
    """The texts a TF-IDF model for :func:`build_graph` should be fitted on."""
    corpus = [v.description for v in vulns]
    cpes = sorted({c for v in vulns for c in v.cpes})
    corpus += [cpe_text(c) for c in cpes]
    corpus += [i.text for i in issues]
    corpus += [t.text for t in techniques]
    return corpus


def one_hot(kind: NodeKind) -> np.ndarray:
    vec = np.zeros(len(NODE_KINDS))
    vec[NODE_KINDS.index(kind)] = 1.0
    return vec


def mentions_technique(text: str, technique_id: str, url_prefixes: Iterable[str] = DEFAULT_URL_PREFIXES) -> bool:
    """True when ``text`` names the technique id or links one of its catalog URLs."""
    if re.search(re.escape(technique_id) + r"(?![0-9A-Za-z])", text):
        return True
    slash_id = technique_id.replace(".", "/")
    return any(prefix + technique_id in text or prefix + slash_id in text for prefix in url_prefixes)


# --- the graph ------------------------------------------------------------------

class ThreatGraph:
    """Immutable typed multigraph with uniform-width node features."""

    def __init__(self, nodes: Mapping[str, Node], edges: Iterable[Edge], dims: int, validate: bool = True):
        self._nodes = dict(sorted(nodes.items()))
        self._edges = tuple(sorted(set(edges), key=Edge.sort_key))
        self.dims = dims
        if validate:
            self._validate()

    def _validate(self):
        for nid, node in self._nodes.items():
            if node.features.shape != (self.dims,):
                raise ConstructionError(f"node {nid} has feature shape {node.features.shape}, expected ({self.dims},)")
        seen = set()
        for e in self._edges:
            for end in (e.src, e.dst):
                if end not in self._nodes:
                    raise ConstructionError(f"edge {e} has dangling endpoint {end!r}")
            src_kind, dst_kind = EDGE_ENDPOINTS[e.kind]
            if e.reverse:
                src_kind, dst_kind = dst_kind, src_kind
            if self._nodes[e.src].kind != src_kind or self._nodes[e.dst].kind != dst_kind:
                raise ConstructionError(f"edge {e} joins wrong node kinds")
            seen.add(e)
        for e in self._edges:
            if e.mirrored() not in seen:
                raise ConstructionError(f"edge {e} has no mirrored reverse edge")

    # basic access
    @property
    def nodes(self) -> dict:
        return dict(self._nodes)

    @property
    def edges(self) -> tuple:
        return self._edges

    def node(self, nid: str) -> Node:
        try:
            return self._nodes[nid]
        except KeyError:
            raise NodeLookupError(f"unknown node {nid!r}") from None

    def __contains__(self, nid) -> bool:
        return nid in self._nodes

    def __len__(self):
        return len(self._nodes)

    @cached_property
    def node_ids(self) -> tuple:
        return tuple(self._nodes)

    @cached_property
    def index(self) -> dict:
        return {nid: i for i, nid in enumerate(self._nodes)}

    def ids_of_kind(self, kind: NodeKind) -> list:
        return [nid for nid, n in self._nodes.items() if n.kind == kind]

    @cached_property
    def feature_matrix(self) -> np.ndarray:
        if not self._nodes:
            return np.zeros((0, self.dims))
        return np.vstack([n.features for n in self._nodes.values()])

    @cached_property
    def _in_adjacency(self) -> dict:
        adj: dict = {}
        for e in self._edges:
            adj.setdefault((e.dst, e.relation), []).append(e.src)
        return {key: sorted(v) for key, v in adj.items()}

    def in_neighbors(self, nid: str, relation: Relation) -> list:
        return list(self._in_adjacency.get((nid, relation), ()))

    @cached_property
    def mean_adjacency(self) -> dict:
        """Per relation, the row-normalised in-adjacency: A[v, u] = 1/|N_r(v)|."""
        n = len(self._nodes)
        idx = self.index
        rows: dict = {r: ([], []) for r in RELATIONS}
        for e in self._edges:
            r, c = rows[e.relation]
            r.append(idx[e.dst])
            c.append(idx[e.src])
        out = {}
        for rel, (r, c) in rows.items():
            r = np.asarray(r, dtype=np.int64)
            c = np.asarray(c, dtype=np.int64)
            counts = np.bincount(r, minlength=n).astype(float) if len(r) else np.zeros(n)
            data = 1.0 / counts[r] if len(r) else np.zeros(0)
            out[rel] = sp.csr_matrix((data, (r, c)), shape=(n, n))
        return out

    def edge_counts(self) -> dict:
        counts: dict = {}
        for e in self._edges:
            counts[e.relation] = counts.get(e.relation, 0) + 1
        return counts

    def without_edges(self, drop: Iterable[Edge]) -> "ThreatGraph":
        """Copy lacking exactly the given directed edges (reverse bijection not enforced)."""
        drop = set(drop)
        return ThreatGraph(self._nodes, (e for e in self._edges if e not in drop), self.dims, validate=False)

    def with_nodes_and_edges(self, nodes: Mapping[str, Node], edges: Iterable[Edge]) -> "ThreatGraph":
        merged = dict(self._nodes)
        merged.update(nodes)
        return ThreatGraph(merged, list(self._edges) + list(edges), self.dims, validate=False)

    # serialisation
    def save(self, directory) -> None:
        os.makedirs(directory, exist_ok=True)
        with open(os.path.join(directory, "nodes.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["id", "kind", "source_ref"])
            for nid, node in self._nodes.items():
                w.writerow([nid, node.kind.value, node.ref])
        with open(os.path.join(directory, "edges.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["src", "kind", "dst", "is_reverse"])
            for e in self._edges:
                w.writerow([e.src, e.kind.value, e.dst, int(e.reverse)])
        with open(os.path.join(directory, "features.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["id"] + [f"dim_{j}" for j in range(self.dims)])
            for nid, node in self._nodes.items():
                w.writerow([nid] + [repr(float(x)) for x in node.features])

    @classmethod
    def load(cls, directory) -> "ThreatGraph":
        feats = {}
        with open(os.path.join(directory, "features.csv"), newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            dims = len(header) - 1
            for row in reader:
                feats[row[0]] = np.array([float(x) for x in row[1:]])
        nodes = {}
        with open(os.path.join(directory, "nodes.csv"), newline="") as fh:
            for row in csv.DictReader(fh):
                nodes[row["id"]] = Node(NodeKind(row["kind"]), row["source_ref"], feats[row["id"]])
        edges = []
        with open(os.path.join(directory, "edges.csv"), newline="") as fh:
            for row in csv.DictReader(fh):
                edges.append(Edge(row["src"], EdgeKind(row["kind"]), row["dst"], row["is_reverse"] == "1"))
        return cls(nodes, edges, dims)


# --- construction -------------------------------------------------------------------

def _with_reverses(forward: Iterable[Edge]) -> list:
    out = []
    for e in forward:
        out.append(e)
        out.append(e.mirrored())
    return out


def build_graph(
    vulns: Iterable[VulnRecord],
    issues: Iterable[IssueRecord],
    techniques: Iterable[TechniqueRecord],
    clusters: Optional[Mapping] = None,
    tfidf: Optional[TfidfModel] = None,
    config: GraphConfig = GraphConfig(),
) -> ThreatGraph:
    """Apply the seven edge construction rules and add every reverse edge.

    ``clusters`` maps ``"asr"``, ``"stealth"`` and ``"cost"`` to fitted
    :class:`~threatgraph.clustering.ClusterModel` objects keyed by CVE id;
    missing families contribute no centroid nodes.
    """
    from .features import fit_tfidf

    vulns, issues, techniques = list(vulns), list(issues), list(techniques)
    clusters = dict(clusters or {})
    if tfidf is None:
        tfidf = fit_tfidf(graph_corpus(vulns, issues, techniques) or [""])
    dims = config.tfidf_dims + len(NODE_KINDS)

    def features(text, kind):
        return np.concatenate([vectorize(tfidf, text, config.tfidf_dims), one_hot(kind)])

    nodes: dict = {}
    forward: list = []
    cve_ids = set()
    for v in vulns:
        if v.cve_id in nodes:
            raise ConstructionError(f"duplicate CVE record {v.cve_id}")
        nodes[v.cve_id] = Node(NodeKind.CVE, v.cve_id, features(v.description, NodeKind.CVE))
        cve_ids.add(v.cve_id)
        for cpe in v.cpes:
            cid = cpe_node_id(cpe)
            if cid not in nodes:
                nodes[cid] = Node(NodeKind.CPE, cpe.to_uri(), features(cpe_text(cpe), NodeKind.CPE))
            forward.append(Edge(v.cve_id, EdgeKind.AFFECTS, cid))

    for issue in issues:
        iid = issue_node_id(issue)
        nodes[iid] = Node(NodeKind.ISSUE, f"{issue.repo}#{issue.issue_id}", features(issue.text, NodeKind.ISSUE))
        for cve in issue.extracted_cves:
            if cve in cve_ids:
                forward.append(Edge(cve, EdgeKind.REPORTED_IN, iid))

    tech_vectors = {}
    for tech in techniques:
        tid = technique_node_id(tech)
        nodes[tid] = Node(NodeKind.TECHNIQUE, tech.technique_id, features(tech.text, NodeKind.TECHNIQUE))
        tech_vectors[tid] = vectorize(tfidf, tech.text)
        for issue in issues:
            if mentions_technique(issue.text, tech.technique_id, config.url_prefixes):
                forward.append(Edge(issue_node_id(issue), EdgeKind.REFERENCES, tid))

    for v in vulns:
        cve_vec = vectorize(tfidf, v.description)
        for tid, tvec in tech_vectors.items():
            if weighted_jaccard(cve_vec, tvec) > config.jaccard_threshold:
                forward.append(Edge(v.cve_id, EdgeKind.SHARES_VECTOR, tid))

    for family, model in sorted(clusters.items()):
        if model is None:
            continue
        if family not in CLUSTER_FAMILIES:
            raise ConstructionError(f"unknown cluster family {family!r}")
        kind, node_kind, prefix = CLUSTER_FAMILIES[family]
        for index in range(model.k):
            nid = centroid_node_id(prefix, index)
            nodes[nid] = Node(node_kind, f"{prefix}#{index}", features("", node_kind))
        for entity, index in model.assignments.items():
            if entity not in cve_ids:
                raise ConstructionError(f"{family} cluster assignment references unknown CVE {entity!r}")
            forward.append(Edge(entity, kind, centroid_node_id(prefix, index)))

    return ThreatGraph(nodes, _with_reverses(forward), dims)


# --- queries ----------------------------------------------------------------------------

def _as_relation(r) -> Relation:
    if isinstance(r, Relation):
        return r
    if isinstance(r, EdgeKind):
        return Relation(r, False)
    name = str(r)
    if name.endswith("_REV"):
        return Relation(EdgeKind(name[:-4]), True)
    return Relation(EdgeKind(name), False)


def neighbors(g: ThreatGraph, v: str, r) -> list:
    """In-neighbours of ``v`` under relation ``r``, sorted by node id."""
    g.node(v)
    return g.in_neighbors(v, _as_relation(r))


def degree_profile(g: ThreatGraph, v: str) -> tuple[int, int]:
    """(number of AFFECTS out-edges, number of REPORTED_IN out-edges) of a CVE."""
    node = g.node(v)
    if node.kind != NodeKind.CVE:
        raise KindError(f"{v!r} is a {node.kind.value} node, not a CVE")
    rev_affects = Relation(EdgeKind.AFFECTS, True)
    rev_reported = Relation(EdgeKind.REPORTED_IN, True)
    # each forward out-edge v->x is mirrored by x->v, so count reverse in-edges
    return len(g.in_neighbors(v, rev_affects)), len(g.in_neighbors(v, rev_reported))


def remove_edge_family(g: ThreatGraph, r) -> ThreatGraph:
    """New graph without any edge of family ``r`` (forward or reverse)."""
    kind = _as_relation(r).kind
    return ThreatGraph(g.nodes, (e for e in g.edges if e.kind != kind), g.dims, validate=False)
