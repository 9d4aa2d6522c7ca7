"""
Risk scores and deployment-normalised attack counts
===================================================

Walks the scoring chain from raw CVSS factors to a priority bucket, then
turns raw attack counts into deployment-normalised frequencies.
"""

# %%
from threatgraph.analytics import (
    load_cvs_inputs,
    load_frequency_table,
    cvs_rank,
    pareto,
)
from threatgraph.cli import fixture_bytes
from threatgraph.ingest import parse_nvd_feed
from threatgraph.scoring import CvssInputs, score_inputs, score_record
from threatgraph.synthetic import zipf_counts

# %% [markdown]
# Network-reachable, low-complexity, no authentication, partial C/I/A.

# %%
s = score_inputs(CvssInputs(C=0.275, I=0.275, A=0.275, AV=1.0, AC=0.71, Au=0.704))
print(f"impact={s.impact:.3f} exploitability={s.exploitability:.3f} base={s.base}")
print(f"composite={s.composite:.3f} severity={s.severity.value} priority={s.priority.value}")

# %% [markdown]
# Feed records carry published sub-scores. Those are used as given; a record
# with no impact block has no score at all.

# %%
for rec in parse_nvd_feed(fixture_bytes("sample_feed.json"))[:5]:
    r = score_record(rec)
    if r is None:
        print(f"{rec.cve_id:16s} (no CVSS block)")
    else:
        print(f"{rec.cve_id:16s} base={r.base:4.1f} composite={r.composite:5.2f} {r.priority.value}")

# %%
rows = load_frequency_table(fixture_bytes("frequency_table.csv"))
print(f"{'model family':22s} {'f':>4s} {'w':>5s} {'f_hat':>6s}")
for r in sorted(rows, key=lambda r: -r.f_hat):
    print(f"{r.model_family:22s} {r.f:4d} {r.w:5.2f} {r.f_hat_rounded:6d}")

# %% [markdown]
# Ranking by raw count puts the API models first. Normalising by deployment
# pushes the small LoRA-BERT footprint near the top.

# %%
for i, r in enumerate(cvs_rank(load_cvs_inputs(fixture_bytes("cvs_inputs.csv"))), start=1):
    print(f"{i}. {r.model:18s} CVS={r.cvs:.3f}")

# %%
res = pareto(zipf_counts(91), 0.8)
print(f"{res.prefix_size} of 91 CPEs ({res.prefix_size / 91:.0%}) hold {res.prefix_share:.0%} of CVEs")
