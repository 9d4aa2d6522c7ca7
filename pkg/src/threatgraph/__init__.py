"""Threat-graph construction, risk scoring and relational severity modelling."""

from .errors import (
    ConfigError,
    ConstructionError,
    DomainError,
    FormatError,
    KindError,
    NodeLookupError,
    ParseError,
    ShapeError,
    ThreatGraphError,
    TrainingError,
)
from .ingest import VulnRecord, load_issue_dump, load_technique_catalog, parse_nvd_feed
from .scoring import RiskScore, score_record

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ConstructionError",
    "DomainError",
    "FormatError",
    "KindError",
    "NodeLookupError",
    "ParseError",
    "RiskScore",
    "ShapeError",
    "ThreatGraphError",
    "TrainingError",
    "VulnRecord",
    "__version__",
    "load_issue_dump",
    "load_technique_catalog",
    "parse_nvd_feed",
    "score_record",
]
