"""
Building the threat graph
=========================

Fixture feeds, issues and techniques go in; a typed multigraph with
reverse edges and fixed-width node features comes out.
"""

# %%
from threatgraph.cli import Pipeline, PipelineConfig
from threatgraph.graph import EdgeKind, NodeKind, degree_profile, neighbors

p = Pipeline(PipelineConfig())
g = p.graph
print(f"{len(g)} nodes, {len(g.edges)} directed edges, feature width {g.dims}")

# %%
for kind in NodeKind:
    print(f"{kind.value:18s} {len(g.ids_of_kind(kind)):3d}")

# %%
counts = g.edge_counts()
for kind in EdgeKind:
    print(f"{kind.value:14s} forward={counts.get((kind, False), 0):3d} reverse={counts.get((kind, True), 0):3d}")

# %% [markdown]
# CPE and issue degree per CVE, the raw structure the severity model reads.

# %%
for cve in g.ids_of_kind(NodeKind.CVE)[:6]:
    print(cve, degree_profile(g, cve))

# %%
issue = g.ids_of_kind(NodeKind.ISSUE)[0]
print(issue, "is referenced by", neighbors(g, issue, EdgeKind.REPORTED_IN))
print(issue, "links", neighbors(g, issue, "REFERENCES_REV"))

# %% [markdown]
# Cluster families become centroid nodes. k is capped by the number of CVEs.

# %%
for family, model in p.clusters.items():
    sizes = [len(model.members(i)) for i in range(model.k)]
    print(f"{family:8s} {model.method.value:14s} k={model.k:2d} sizes={sizes}")
