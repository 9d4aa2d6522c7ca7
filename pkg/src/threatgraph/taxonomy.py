"""Scenario matrices, the tactic x phase map, cross-level traces and mitigations.

The shipped fixtures live in ``threatgraph/fixtures``; every loader also
accepts caller-supplied documents of the same shape.
"""

from __future__ import annotations

import csv
import enum
import io
import json
from collections import Counter
from dataclasses import dataclass
from importlib import resources
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import FormatError, NodeLookupError

SCHEMA_VERSION = 1

TACTICS = (
    "Reconnaissance",
    "Resource Development",
    "Initial Access",
    "ML Model Access",
    "Execution",
    "Persistence",
    "Defense Evasion",
    "Discovery",
    "Collection",
    "ML Attack Staging",
    "Exfiltration",
    "Impact",
)
PHASE_TACTICS = TACTICS + ("Credential Access",)
PHASES = (
    "Data Collection",
    "Preprocessing",
    "Feature Engineering",
    "Training",
    "Testing",
    "Inference",
    "Monitoring",
)
PREFERENCE_GUIDED = "PREF-GUIDED"


class Source(str, enum.Enum):
    ATLAS = "ATLAS"
    AI_DB = "AI_DB"
    LITERATURE = "LITERATURE"


class Goal(str, enum.Enum):
    CONFIDENTIALITY = "CONFIDENTIALITY"
    INTEGRITY = "INTEGRITY"
    AVAILABILITY = "AVAILABILITY"
    HUMAN_LIFE = "HUMAN_LIFE"


class Knowledge(str, enum.Enum):
    BLACK_BOX = "BLACK_BOX"
    GRAY_BOX = "GRAY_BOX"
    WHITE_BOX = "WHITE_BOX"
    NA = "NA"


class Specificity(str, enum.Enum):
    ADV_TARGETED = "ADV_TARGETED"
    ADV_UNTARGETED = "ADV_UNTARGETED"
    TRAD_TARGETED = "TRAD_TARGETED"
    TRAD_UNTARGETED = "TRAD_UNTARGETED"


def _fixture_text(name: str) -> str:
    return resources.files("threatgraph").joinpath("fixtures", name).read_text(encoding="utf-8")


def _enum_set(enum_cls, values, what):
    try:
        return frozenset(enum_cls(v) for v in values)
    except ValueError as exc:
        raise FormatError(f"unknown {what}: {exc}") from None


def _check_version(data, what):
    if data.get("schema_version") != SCHEMA_VERSION:
        raise FormatError(f"{what}: unsupported schema_version {data.get('schema_version')!r}")


# --- scenarios ------------------------------------------------------------------

@dataclass(frozen=True)
class ScenarioRecord:
    """One attack scenario.

    ``stages`` is a sorted tuple of ``(index, tactics)`` pairs. A stage may
    hold several tactics, and indices may skip a value when the source row
    does, but the first stage is always 0.
    """

    source: Source
    scenario_id: str
    goal: frozenset
    knowledge: frozenset
    specificity: frozenset
    stages: tuple
    target_model: Optional[str] = None

    def __post_init__(self):
        stages = tuple(sorted((int(i), tuple(t)) for i, t in self.stages))
        indices = [i for i, _ in stages]
        if len(set(indices)) != len(indices):
            raise FormatError(f"{self.scenario_id}: duplicate stage index")
        if stages and indices[0] != 0:
            raise FormatError(f"{self.scenario_id}: stages must start at 0")
        for _, tactics in stages:
            if not tactics:
                raise FormatError(f"{self.scenario_id}: empty stage")
            for t in tactics:
                if t not in TACTICS:
                    raise FormatError(f"{self.scenario_id}: unknown tactic {t!r}")
        object.__setattr__(self, "stages", stages)

    @property
    def tactics(self) -> frozenset:
        return frozenset(t for _, ts in self.stages for t in ts)

    @property
    def sequence(self) -> tuple:
        """Stage contents in order, gaps dropped."""
        return tuple(ts for _, ts in self.stages)

    def to_dict(self) -> dict:
        return {
            "source": self.source.value,
            "scenario_id": self.scenario_id,
            "goal": sorted(g.value for g in self.goal),
            "knowledge": sorted(k.value for k in self.knowledge),
            "specificity": sorted(s.value for s in self.specificity),
            "stages": {str(i): list(ts) for i, ts in self.stages},
            "target_model": self.target_model,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioRecord":
        try:
            sid = data["scenario_id"]
            return cls(
                source=Source(data["source"]),
                scenario_id=sid,
                goal=_enum_set(Goal, data["goal"], "goal"),
                knowledge=_enum_set(Knowledge, data["knowledge"], "knowledge"),
                specificity=_enum_set(Specificity, data["specificity"], "specificity"),
                stages=tuple((int(i), tuple(ts)) for i, ts in data["stages"].items()),
                target_model=data.get("target_model"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, FormatError):
                raise
            raise FormatError(f"bad scenario record: {exc!r}") from None


def load_scenarios(document=None) -> list:
    """Parse a scenario file; ``None`` loads the shipped fixture."""
    text = _fixture_text("scenarios.json") if document is None else document
    if isinstance(text, (bytes, bytearray)):
        text = text.decode("utf-8")
    data = json.loads(text)
    _check_version(data, "scenarios")
    records = [ScenarioRecord.from_dict(d) for d in data["scenarios"]]
    ids = [r.scenario_id for r in records]
    if len(set(ids)) != len(ids):
        raise FormatError("duplicate scenario_id")
    return records


def dump_scenarios(records: Iterable[ScenarioRecord]) -> str:
    return json.dumps({"schema_version": SCHEMA_VERSION, "scenarios": [r.to_dict() for r in records]}, indent=1)


def _ranked(counter: Counter) -> list:
    return sorted(counter.items(), key=lambda kv: (-kv[1], kv[0]))


def prominent_tactics(scenarios: Sequence[ScenarioRecord]) -> list:
    """(tactic, number of scenarios using it at any stage), most used first."""
    counts: Counter = Counter()
    for s in scenarios:
        counts.update(s.tactics)
    return _ranked(counts)


def entry_points(scenarios: Sequence[ScenarioRecord]) -> list:
    """(tactic, number of scenarios opening with it), most used first."""
    counts: Counter = Counter()
    for s in scenarios:
        if s.stages:
            counts.update(set(s.stages[0][1]))
    return _ranked(counts)


def ttp_sequences(scenarios: Sequence[ScenarioRecord], min_support: int = 1) -> list:
    """Exact stage sequences shared by at least ``min_support`` scenarios."""
    if min_support < 1:
        raise ValueError(f"min_support must be >= 1, got {min_support}")
    counts = Counter(s.sequence for s in scenarios if s.stages)
    return [(seq, n) for seq, n in _ranked(counts) if n >= min_support]


def format_sequence(seq) -> str:
    return " -> ".join(" + ".join(stage) for stage in seq)


# --- tactic x phase -------------------------------------------------------------

@dataclass(frozen=True)
class TacticPhaseMatrix:
    tactics: tuple
    phases: tuple
    cells: np.ndarray

    def __post_init__(self):
        cells = np.asarray(self.cells, dtype=bool)
        if tuple(self.tactics) != PHASE_TACTICS or tuple(self.phases) != PHASES:
            raise FormatError("tactic x phase matrix must use the 13 tactics and 7 phases in canonical order")
        if cells.shape != (len(PHASE_TACTICS), len(PHASES)):
            raise FormatError(f"tactic x phase matrix has shape {cells.shape}, expected (13, 7)")
        object.__setattr__(self, "tactics", tuple(self.tactics))
        object.__setattr__(self, "phases", tuple(self.phases))
        object.__setattr__(self, "cells", cells)


def _strip_comments(text: str) -> str:
    return "\n".join(line for line in text.splitlines() if not line.startswith("#"))


def load_tactic_phase(document=None) -> TacticPhaseMatrix:
    text = _fixture_text("tactic_phase.csv") if document is None else document
    if isinstance(text, (bytes, bytearray)):
        text = text.decode("utf-8")
    rows = list(csv.reader(io.StringIO(_strip_comments(text))))
    try:
        phases = tuple(rows[0][1:])
        tactics = tuple(r[0] for r in rows[1:])
        cells = [[int(v) for v in r[1:]] for r in rows[1:]]
    except (IndexError, ValueError) as exc:
        raise FormatError(f"bad tactic x phase CSV: {exc}") from None
    if any(v not in (0, 1) for r in cells for v in r):
        raise FormatError("tactic x phase cells must be 0 or 1")
    return TacticPhaseMatrix(tactics, phases, np.array(cells, dtype=bool))


def phases_for_tactic(m: TacticPhaseMatrix, tactic: str) -> list:
    if tactic not in m.tactics:
        raise NodeLookupError(f"unknown tactic {tactic!r}")
    row = m.cells[m.tactics.index(tactic)]
    return [p for p, on in zip(m.phases, row) if on]


def tactics_for_phase(m: TacticPhaseMatrix, phase: str) -> list:
    if phase not in m.phases:
        raise NodeLookupError(f"unknown phase {phase!r}")
    col = m.cells[:, m.phases.index(phase)]
    return [t for t, on in zip(m.tactics, col) if on]


# --- cross-level map ------------------------------------------------------------------

class SoftwareLayer(str, enum.Enum):
    DATA = "DATA"
    MODEL = "MODEL"
    ORCHESTRATION = "ORCHESTRATION"


@dataclass(frozen=True)
class CrossLevelEntry:
    vul_id: str
    cve_or_ttp: str
    ml_phase: str
    software_component: str
    software_layer: SoftwareLayer
    system_surface: str


@dataclass(frozen=True)
class PhaseMappingEntry:
    ml_phase: str
    asset: str
    examples: tuple
    mapped_layer: str


def load_cross_level(document=None):
    """Return (cross-level entries, phase-mapping rows)."""
    text = _fixture_text("cross_level.json") if document is None else document
    data = json.loads(text)
    _check_version(data, "cross-level map")
    try:
        entries = [
            CrossLevelEntry(
                e["vul_id"], e["cve_or_ttp"], e["ml_phase"], e["software_component"],
                SoftwareLayer(e["software_layer"]), e["system_surface"],
            )
            for e in data["entries"]
        ]
        mapping = [
            PhaseMappingEntry(p["ml_phase"], p["asset"], tuple(p["examples"]), p["mapped_layer"])
            for p in data.get("phase_mapping", [])
        ]
    except (KeyError, ValueError) as exc:
        raise FormatError(f"bad cross-level entry: {exc!r}") from None
    ids = [e.vul_id for e in entries]
    if len(set(ids)) != len(ids):
        raise FormatError("duplicate vul_id")
    return entries, mapping


def trace_vulnerability(entries: Sequence[CrossLevelEntry], vul_id: str) -> tuple:
    """(ML phase, software component, system surface) recorded for ``vul_id``."""
    for e in entries:
        if e.vul_id == vul_id:
            return (e.ml_phase, e.software_component, e.system_surface)
    raise NodeLookupError(f"unknown vulnerability id {vul_id!r}")


# --- mitigations ------------------------------------------------------------------------

class MitigationLayer(str, enum.Enum):
    DATA = "DATA"
    SOFTWARE = "SOFTWARE"
    STORAGE = "STORAGE"
    SYSTEM = "SYSTEM"
    NETWORK = "NETWORK"
    CLOUD = "CLOUD"


class MitigationStage(str, enum.Enum):
    HARDEN = "HARDEN"
    DETECT = "DETECT"
    ISOLATE = "ISOLATE"
    EVICT = "EVICT"


@dataclass(frozen=True)
class MitigationEntry:
    mitigation_id: str
    name: str
    layer: MitigationLayer
    stage: MitigationStage
    description: str
    counters: tuple


def load_mitigations(document=None, known_threats: Optional[Iterable[str]] = None) -> list:
    """Parse a mitigation catalog, checking counters against ``known_threats`` when given."""
    text = _fixture_text("mitigations.json") if document is None else document
    data = json.loads(text)
    _check_version(data, "mitigation catalog")
    try:
        catalog = [
            MitigationEntry(
                m["mitigation_id"], m["name"], MitigationLayer(m["layer"]), MitigationStage(m["stage"]),
                m.get("description", ""), tuple(m["counters"]),
            )
            for m in data["mitigations"]
        ]
    except (KeyError, ValueError) as exc:
        raise FormatError(f"bad mitigation entry: {exc!r}") from None
    ids = [m.mitigation_id for m in catalog]
    if len(set(ids)) != len(ids):
        raise FormatError("duplicate mitigation_id")
    if known_threats is not None:
        known = set(known_threats) | {PREFERENCE_GUIDED}
        for m in catalog:
            unknown = [c for c in m.counters if c not in known]
            if unknown:
                raise FormatError(f"{m.mitigation_id} counters unknown threats {unknown}")
    return catalog


def mitigations_for(catalog: Sequence[MitigationEntry], query) -> list:
    """Entries countering a threat id, or sitting on a layer, sorted by id."""
    if isinstance(query, MitigationLayer) or query in MitigationLayer.__members__:
        layer = MitigationLayer(query)
        hits = [m for m in catalog if m.layer == layer]
    else:
        hits = [m for m in catalog if query in m.counters]
    return sorted(hits, key=lambda m: m.mitigation_id)
