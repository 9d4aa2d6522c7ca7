"""
Attack scenarios, tactics and lifecycle phases
==============================================
"""

# %%
from threatgraph.taxonomy import (
    entry_points,
    format_sequence,
    load_cross_level,
    load_mitigations,
    load_scenarios,
    load_tactic_phase,
    mitigations_for,
    phases_for_tactic,
    prominent_tactics,
    trace_vulnerability,
    ttp_sequences,
)

scenarios = load_scenarios()
print(len(scenarios), "scenarios")
for tactic, n in prominent_tactics(scenarios)[:5]:
    print(f"{n:3d}  {tactic}")

# %%
print("entry points:", entry_points(scenarios)[:3])
for seq, n in ttp_sequences(scenarios, min_support=2):
    print(f"{n}x  {format_sequence(seq)}")

# %%
m = load_tactic_phase()
for tactic in ("Credential Access", "Execution", "Impact"):
    print(f"{tactic:18s} -> {', '.join(phases_for_tactic(m, tactic))}")

# %% [markdown]
# One weakness traced from the ML phase down to the system surface.

# %%
entries, _ = load_cross_level()
print("VUL-17:", trace_vulnerability(entries, "VUL-17"))

# %%
for mit in mitigations_for(load_mitigations(), "EXF-T1041"):
    print(f"{mit.mitigation_id}  {mit.layer.value:8s} {mit.stage.value:8s} {mit.name}")
