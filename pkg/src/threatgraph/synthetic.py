"""Seeded synthetic corpora with a planted degree signal.

Mean aggregation hides raw neighbour counts, so degree is encoded through
nested neighbourhoods: a CVE with CPE degree ``d`` affects CPEs ``0..d-1``
and each CPE carries its own token. The mean of the neighbour features then
moves monotonically with ``d``. Issues follow the same scheme. CVE
descriptions are identical filler, so the graph structure is the only signal.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .features import fit_tfidf
from .graph import GraphConfig, ThreatGraph, build_graph, graph_corpus
from .ingest import CpeId, IssueRecord, VulnRecord

FILLER = "synthetic vulnerability record placeholder text"


@dataclass(frozen=True)
class PlantedCorpus:
    vulns: list
    issues: list
    cpe_degree: dict
    issue_degree: dict

    def graph(self) -> ThreatGraph:
        tfidf = fit_tfidf(graph_corpus(self.vulns, self.issues, []))
        cfg = GraphConfig(tfidf_dims=len(tfidf.vocabulary))
        return build_graph(self.vulns, self.issues, [], None, tfidf, cfg)

    def lexicographic_targets(self) -> dict:
        """Distinct targets ordered by CPE degree, then issue degree."""
        kmax = max(self.cpe_degree.values())
        mmax = max(self.issue_degree.values())
        return {
            c: (self.cpe_degree[c] + self.issue_degree[c] / (mmax + 1)) / (kmax + 1)
            for c in self.cpe_degree
        }

    def cpe_targets(self) -> dict:
        """Targets that depend on CPE degree only; issue degree is pure noise."""
        kmax = max(self.cpe_degree.values())
        return {c: self.cpe_degree[c] / (kmax + 1) for c in self.cpe_degree}


def planted_corpus(cpe_levels: int = 12, issue_levels: int = 6, seed: int = 0) -> PlantedCorpus:
    """One CVE per (cpe degree, issue degree) pair, ids assigned by seeded shuffle.

    Because every pair occurs exactly once the two degrees are independent.
    """
    rng = np.random.default_rng(seed)
    pairs = list(product(range(1, cpe_levels + 1), range(1, issue_levels + 1)))
    order = rng.permutation(len(pairs))
    cpes = [CpeId("synth", f"lib{j}", "1.0") for j in range(cpe_levels)]
    vulns, cpe_deg, iss_deg = [], {}, {}
    for n, pos in enumerate(order):
        d, e = pairs[pos]
        cve = f"CVE-2030-{10000 + n}"
        vulns.append(VulnRecord(cve_id=cve, description=FILLER, cpes=tuple(cpes[:d])))
        cpe_deg[cve], iss_deg[cve] = d, e
    issues = []
    for j in range(issue_levels):
        mentioned = tuple(sorted(c for c, e in iss_deg.items() if e > j))
        body = f"tag{j} " + " ".join(mentioned)
        issues.append(IssueRecord("synth/repo", j + 1, f"topic{j}", body, 0.0, mentioned))
    return PlantedCorpus(vulns, issues, cpe_deg, iss_deg)


def zipf_counts(n: int, s: float = 1.2, scale: float = 1000.0) -> dict:
    """Power-law counts ``round(scale / rank**s)`` keyed ``cpe:000``..."""
    return {f"cpe:{i:03d}": max(1, int(round(scale / (i + 1) ** s))) for i in range(n)}
