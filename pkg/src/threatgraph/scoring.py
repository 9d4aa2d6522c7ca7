"""CVSS v2 derived scoring, composite risk and bucket routing."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal

from .errors import DomainError

IMPACT_SCALE = 10.41
EXPLOITABILITY_SCALE = 20.0
IMPACT_ADJUSTMENT = 1.176
COMPOSITE_WEIGHTS = (0.5, 0.3, 0.2)  # base, exploitability, impact


class Severity(str, enum.Enum):
    LOW = "LOW"
    MEDIUM = "MEDIUM"
    HIGH = "HIGH"
    CRITICAL = "CRITICAL"


class Priority(str, enum.Enum):
    CRITICAL_RESPONSE = "CRITICAL_RESPONSE"
    MEDIUM_PRIORITY = "MEDIUM_PRIORITY"
    LOW_PRIORITY = "LOW_PRIORITY"


def _check_unit(**values):
    for name, v in values.items():
        if not (isinstance(v, (int, float)) and math.isfinite(v) and 0.0 <= v <= 1.0):
            raise DomainError(f"{name}={v!r} outside [0, 1]")


def _check_nonneg(**values):
    for name, v in values.items():
        if not (isinstance(v, (int, float)) and math.isfinite(v) and v >= 0.0):
            raise DomainError(f"{name}={v!r} must be a finite non-negative number")


def _dec(x) -> Decimal:
    # repr gives the shortest decimal that round-trips, so 6.95 stays 6.95
    return Decimal(repr(float(x)))


def round_tenths(x: float) -> float:
    """Round half-up to one decimal place, on the decimal literal of ``x``."""
    return float(_dec(x).quantize(Decimal("0.1"), rounding=ROUND_HALF_UP))


def impact_score(C: float, I: float, A: float) -> float:
    _check_unit(C=C, I=I, A=A)
    return IMPACT_SCALE * (1.0 - (1.0 - C) * (1.0 - I) * (1.0 - A))


def exploitability_score(AV: float, AC: float, Au: float) -> float:
    _check_unit(AV=AV, AC=AC, Au=Au)
    return EXPLOITABILITY_SCALE * AV * AC * Au


def base_score(impact: float, exploitability: float) -> float:
    """Base score from impact and exploitability sub-scores, clamped to [0, 10]."""
    _check_nonneg(impact=impact, exploitability=exploitability)
    if impact == 0:
        return 0.0
    raw = (0.6 * impact + 0.4 * exploitability - 1.5) * IMPACT_ADJUSTMENT
    return min(10.0, max(0.0, round_tenths(raw)))


def composite_risk(base: float, exploitability: float, impact: float) -> float:
    """Weighted blend 0.5*base + 0.3*exploitability + 0.2*impact.

    Evaluated in decimal so that, e.g., (7.5, 8.6, 6.4) gives exactly 7.61.
    """
    _check_nonneg(base=base, exploitability=exploitability, impact=impact)
    wb, we, wi = (_dec(w) for w in COMPOSITE_WEIGHTS)
    return float(wb * _dec(base) + we * _dec(exploitability) + wi * _dec(impact))


def severity_bucket(base: float) -> Severity:
    if not (isinstance(base, (int, float)) and math.isfinite(base) and 0.0 <= base <= 10.0):
        raise DomainError(f"base score {base!r} outside [0, 10]")
    tenths = round_tenths(base)
    if tenths < 4.0:
        return Severity.LOW
    if tenths < 7.0:
        return Severity.MEDIUM
    if tenths < 9.0:
        return Severity.HIGH
    return Severity.CRITICAL


def priority_bucket(p: float) -> Priority:
    """Route a [0, 1] risk value: (0.8, 1] critical, [0.4, 0.8] medium, [0, 0.4) low."""
    _check_unit(p=p)
    if p > 0.8:
        return Priority.CRITICAL_RESPONSE
    if p >= 0.4:
        return Priority.MEDIUM_PRIORITY
    return Priority.LOW_PRIORITY


@dataclass(frozen=True)
class CvssInputs:
    C: float
    I: float
    A: float
    AV: float
    AC: float
    Au: float

    def __post_init__(self):
        _check_unit(C=self.C, I=self.I, A=self.A, AV=self.AV, AC=self.AC, Au=self.Au)


@dataclass(frozen=True)
class RiskScore:
    impact: float
    exploitability: float
    base: float
    composite: float
    severity: Severity
    priority: Priority


def score_inputs(x: CvssInputs) -> RiskScore:
    """Full scoring chain from the six CVSS v2 factors."""
    impact = impact_score(x.C, x.I, x.A)
    expl = exploitability_score(x.AV, x.AC, x.Au)
    base = base_score(impact, expl)
    return _assemble(impact, expl, base)


def score_subscores(base: float, impact: float, exploitability: float) -> RiskScore:
    """Score from feed-published sub-scores; the feed's base score is used as is."""
    return _assemble(impact, exploitability, base)


def _assemble(impact, expl, base) -> RiskScore:
    composite = composite_risk(base, expl, impact)
    return RiskScore(
        impact=impact,
        exploitability=expl,
        base=base,
        composite=composite,
        severity=severity_bucket(base),
        priority=priority_bucket(min(1.0, composite / 10.0)),
    )


def score_record(record) -> RiskScore | None:
    """Score a :class:`~threatgraph.ingest.VulnRecord`; ``None`` when any field is absent."""
    if None in (record.cvss_base, record.cvss_impact, record.cvss_exploitability):
        return None
    return score_subscores(record.cvss_base, record.cvss_impact, record.cvss_exploitability)


def training_target(record) -> float:
    """Composite risk / 10 with absent CVSS fields filled as 0 (targets only)."""
    base = record.cvss_base or 0.0
    impact = record.cvss_impact or 0.0
    expl = record.cvss_exploitability or 0.0
    return min(1.0, composite_risk(base, expl, impact) / 10.0)
