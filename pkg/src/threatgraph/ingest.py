"""Parsers for vulnerability feeds, issue dumps and technique catalogs.

All parsers are pure functions over bytes or text. Entry-level problems are
collected on the returned list's ``errors`` attribute instead of aborting the
whole document; a document that is not parseable at all raises
:class:`~threatgraph.errors.ParseError`.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .errors import FormatError, ParseError

CVE_PATTERN = r"CVE-\d{4}-\d{4,7}"
_CVE_RE = re.compile(CVE_PATTERN + r"(?!\d)", re.IGNORECASE)
_CVE_FULL_RE = re.compile(CVE_PATTERN)

SEVERITIES = ("LOW", "MEDIUM", "HIGH", "CRITICAL")
WILDCARD = "*"


class Records(list):
    """A list of parsed records plus the entry-level errors met on the way."""

    def __init__(self, items=(), errors=()):
        super().__init__(items)
        self.errors: list[ParseError] = list(errors)


@dataclass(frozen=True, order=True)
class CpeId:
    vendor: str
    product: str
    version: str = WILDCARD

    def __post_init__(self):
        if not self.vendor or not self.product:
            raise FormatError(f"CPE needs non-empty vendor and product: {self!r}")

    @property
    def is_wildcard(self) -> bool:
        return self.version == WILDCARD

    def to_uri(self) -> str:
        rest = ":".join([WILDCARD] * 7)
        return f"cpe:2.3:a:{_cpe_escape(self.vendor)}:{_cpe_escape(self.product)}:{_cpe_escape(self.version)}:{rest}"

    def __str__(self):
        return self.to_uri()


def _cpe_escape(value: str) -> str:
    if value == WILDCARD:
        return value
    return value.replace("\\", "\\\\").replace(":", "\\:")


def _split_cpe(uri: str) -> list[str]:
    parts, buf, i = [], [], 0
    while i < len(uri):
        ch = uri[i]
        if ch == "\\" and i + 1 < len(uri):
            buf.append(uri[i + 1])
            i += 2
            continue
        if ch == ":":
            parts.append("".join(buf))
            buf = []
        else:
            buf.append(ch)
        i += 1
    parts.append("".join(buf))
    return parts


def parse_cpe(uri: str) -> CpeId:
    """Parse a CPE 2.3 URI or the short ``vendor:product[:version]`` form."""
    uri = uri.strip()
    parts = _split_cpe(uri)
    if len(parts) >= 2 and parts[0] == "cpe" and parts[1] == "2.3":
        fields = parts[3:]
        if len(fields) < 2:
            raise FormatError(f"CPE URI has too few segments: {uri!r}")
    elif len(parts) >= 2 and parts[0] == "cpe" and parts[1].startswith("/"):
        # CPE 2.2 URI, cpe:/a:vendor:product:version
        fields = parts[2:]
        if len(fields) < 2:
            raise FormatError(f"CPE URI has too few segments: {uri!r}")
    else:
        fields = parts
        if len(fields) < 2:
            raise FormatError(f"CPE needs at least vendor and product: {uri!r}")
    vendor, product = fields[0], fields[1]
    version = fields[2] if len(fields) > 2 and fields[2] not in ("", "-") else WILDCARD
    return CpeId(vendor, product, version)


@dataclass(frozen=True)
class VulnRecord:
    cve_id: str
    description: str = ""
    cvss_base: Optional[float] = None
    cvss_impact: Optional[float] = None
    cvss_exploitability: Optional[float] = None
    severity_label: Optional[str] = None
    patch_available: bool = False
    cpes: tuple[CpeId, ...] = ()
    references: tuple[str, ...] = ()

    def __post_init__(self):
        if not _CVE_FULL_RE.fullmatch(self.cve_id):
            raise FormatError(f"malformed CVE id {self.cve_id!r}")
        for name in ("cvss_base", "cvss_impact", "cvss_exploitability"):
            value = getattr(self, name)
            if value is not None and not 0.0 <= value <= 10.0:
                raise FormatError(f"{self.cve_id}: {name}={value} outside [0, 10]")
        if self.severity_label is not None and self.severity_label not in SEVERITIES:
            raise FormatError(f"{self.cve_id}: unknown severity {self.severity_label!r}")


@dataclass(frozen=True)
class IssueRecord:
    repo: str
    issue_id: int
    title: str
    body: str
    timestamp: float
    extracted_cves: tuple[str, ...] = field(default=())

    @property
    def text(self) -> str:
        return f"{self.title}\n{self.body}"


@dataclass(frozen=True)
class TechniqueRecord:
    technique_id: str
    name: str
    tactic: str
    description: str = ""

    @property
    def text(self) -> str:
        return f"{self.name}. {self.description}"


def extract_cve_ids(text: str) -> list[str]:
    """Return CVE identifiers in ``text``, uppercased, first appearance first."""
    seen: dict[str, None] = {}
    for match in _CVE_RE.finditer(text or ""):
        seen.setdefault(match.group(0).upper(), None)
    return list(seen)


def is_cve_id(value: str) -> bool:
    return bool(_CVE_FULL_RE.fullmatch(value))


# --- NVD feed ---------------------------------------------------------------

def _decode(document) -> str:
    if isinstance(document, (bytes, bytearray, memoryview)):
        try:
            return bytes(document).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"document is not UTF-8: {exc.reason}", offset=exc.start) from exc
    return document


def _load_json(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        offset = len(text[: exc.pos].encode("utf-8"))
        raise ParseError(f"malformed JSON at byte {offset}: {exc.msg}", offset=offset) from exc


def _score(value, what):
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise FormatError(f"{what} is not numeric: {value!r}")
    return float(value)


def _iter_cpe_uris(configurations) -> Iterable[str]:
    if not isinstance(configurations, dict):
        return
    stack = list(configurations.get("nodes") or [])
    while stack:
        node = stack.pop(0)
        if not isinstance(node, dict):
            continue
        for match in node.get("cpe_match") or []:
            uri = match.get("cpe23Uri") or match.get("criteria")
            if uri and match.get("vulnerable", True):
                yield uri
        stack.extend(node.get("children") or [])


def _parse_item(item) -> VulnRecord:
    if not isinstance(item, dict):
        raise FormatError("CVE item is not an object")
    cve = item.get("cve") or {}
    cve_id = (cve.get("CVE_data_meta") or {}).get("ID")
    if not cve_id:
        raise FormatError("CVE item has no CVE_data_meta.ID")

    descriptions = (cve.get("description") or {}).get("description_data") or []
    english = [d.get("value", "") for d in descriptions if d.get("lang", "en") == "en"]
    description = english[0] if english else ""

    base = impact = exploitability = severity = None
    v2 = (item.get("impact") or {}).get("baseMetricV2")
    if isinstance(v2, dict):
        cvss = v2.get("cvssV2") or {}
        base = _score(cvss.get("baseScore"), "baseScore")
        # the excerpted feed nests the sub-scores in cvssV2, NVD 1.1 one level up
        impact = _score(cvss.get("impactScore", v2.get("impactScore")), "impactScore")
        exploitability = _score(
            cvss.get("exploitabilityScore", v2.get("exploitabilityScore")), "exploitabilityScore"
        )
        severity = v2.get("severity")
        if severity is not None:
            severity = str(severity).upper()

    cpes = []
    for uri in _iter_cpe_uris(item.get("configurations")):
        cpe = parse_cpe(uri)
        if cpe not in cpes:
            cpes.append(cpe)

    refs, patched = [], False
    for ref in (cve.get("references") or {}).get("reference_data") or []:
        url = ref.get("url")
        if url:
            refs.append(url)
        if "Patch" in (ref.get("tags") or []):
            patched = True
    if "patch_available" in item:
        patched = bool(item["patch_available"])

    return VulnRecord(
        cve_id=cve_id,
        description=description,
        cvss_base=base,
        cvss_impact=impact,
        cvss_exploitability=exploitability,
        severity_label=severity,
        patch_available=patched,
        cpes=tuple(cpes),
        references=tuple(refs),
    )


def parse_nvd_feed(document) -> Records:
    """Parse an NVD-style JSON feed into :class:`VulnRecord` objects.

    Missing impact blocks leave the score fields as ``None``. A broken entry
    is recorded in ``result.errors`` and skipped.
    """
    data = _load_json(_decode(document))
    if not isinstance(data, dict) or not isinstance(data.get("CVE_Items", []), list):
        raise ParseError("feed must be an object with a CVE_Items array", offset=0)
    out = Records()
    for index, item in enumerate(data.get("CVE_Items", [])):
        try:
            out.append(_parse_item(item))
        except FormatError as exc:
            out.errors.append(FormatError(f"CVE_Items[{index}]: {exc}", line=index))
    return out


def to_nvd_feed(records: Iterable[VulnRecord]) -> dict:
    """Serialise records back to the feed subset read by :func:`parse_nvd_feed`."""
    items = []
    for rec in records:
        item = {
            "cve": {
                "CVE_data_meta": {"ID": rec.cve_id},
                "description": {"description_data": [{"lang": "en", "value": rec.description}]},
                "references": {"reference_data": [{"url": u} for u in rec.references]},
            },
            "configurations": {
                "nodes": [{"cpe_match": [{"vulnerable": True, "cpe23Uri": c.to_uri()} for c in rec.cpes]}]
            },
            "impact": {},
            "patch_available": rec.patch_available,
        }
        has_scores = any(
            v is not None for v in (rec.cvss_base, rec.cvss_impact, rec.cvss_exploitability, rec.severity_label)
        )
        if has_scores:
            cvss = {}
            if rec.cvss_base is not None:
                cvss["baseScore"] = rec.cvss_base
            if rec.cvss_impact is not None:
                cvss["impactScore"] = rec.cvss_impact
            if rec.cvss_exploitability is not None:
                cvss["exploitabilityScore"] = rec.cvss_exploitability
            block = {"cvssV2": cvss}
            if rec.severity_label is not None:
                block["severity"] = rec.severity_label
            item["impact"]["baseMetricV2"] = block
        items.append(item)
    return {"CVE_data_type": "CVE", "CVE_data_format": "MITRE", "CVE_data_version": "4.0", "CVE_Items": items}


def dump_nvd_feed(records: Iterable[VulnRecord]) -> bytes:
    return (json.dumps(to_nvd_feed(records), indent=1, sort_keys=True) + "\n").encode("utf-8")


# --- issue dumps and technique catalogs ---------------------------------------

_ISSUE_KEYS = ("repo", "issue_id", "title", "body", "timestamp")


def load_issue_dump(document) -> Records:
    """Parse a JSON-lines issue dump; CVE ids are mined from title and body."""
    text = _decode(document)
    out = Records()
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            if not isinstance(obj, dict):
                raise ValueError("line is not a JSON object")
            missing = [k for k in _ISSUE_KEYS if k not in obj]
            if missing:
                raise ValueError(f"missing keys {missing}")
            issue_id = obj["issue_id"]
            if isinstance(issue_id, bool) or not isinstance(issue_id, int):
                raise ValueError("issue_id must be an integer")
            title, body = str(obj["title"] or ""), str(obj["body"] or "")
            out.append(
                IssueRecord(
                    repo=str(obj["repo"]),
                    issue_id=issue_id,
                    title=title,
                    body=body,
                    timestamp=float(obj["timestamp"]),
                    extracted_cves=tuple(extract_cve_ids(f"{title}\n{body}")),
                )
            )
        except (ValueError, TypeError) as exc:
            out.errors.append(ParseError(f"line {lineno}: {exc}", line=lineno))
    return out


def load_technique_catalog(document) -> list[TechniqueRecord]:
    data = _load_json(_decode(document))
    if not isinstance(data, list):
        raise ParseError("technique catalog must be a JSON array", offset=0)
    out, seen = [], set()
    for i, obj in enumerate(data):
        try:
            rec = TechniqueRecord(
                technique_id=str(obj["technique_id"]),
                name=str(obj["name"]),
                tactic=str(obj["tactic"]),
                description=str(obj.get("description", "")),
            )
        except (KeyError, TypeError) as exc:
            raise ParseError(f"technique entry {i}: missing field {exc}", line=i) from exc
        if rec.technique_id in seen:
            raise ParseError(f"duplicate technique_id {rec.technique_id!r}", line=i)
        seen.add(rec.technique_id)
        out.append(rec)
    return out
