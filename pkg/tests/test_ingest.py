import json
import re

import pytest
from hypothesis import given, strategies as st

from threatgraph.errors import FormatError, ParseError
from threatgraph.ingest import (
    WILDCARD,
    CpeId,
    dump_nvd_feed,
    extract_cve_ids,
    load_issue_dump,
    load_technique_catalog,
    parse_cpe,
    parse_nvd_feed,
)

from conftest import feed_bytes, feed_item

CVE_RE = re.compile(r"CVE-\d{4}-\d{4,7}")


def test_listing_entry_values():
    recs = parse_nvd_feed(feed_bytes(feed_item("CVE-2024-3099", base=7.5, impact=6.4, expl=8.6, severity="HIGH")))
    (r,) = recs
    assert (r.cvss_base, r.cvss_impact, r.cvss_exploitability, r.severity_label) == (7.5, 6.4, 8.6, "HIGH")


def test_empty_feed():
    assert parse_nvd_feed(feed_bytes()) == []


def test_missing_impact_block_is_absent_not_zero():
    doc = feed_bytes(
        feed_item("CVE-2021-0001", base=5.0, impact=2.9, expl=10.0, severity="MEDIUM"),
        feed_item("CVE-2021-0002", desc="no scores"),
        feed_item("CVE-2021-0003", base=9.3, impact=10.0, expl=8.6, severity="HIGH"),
    )
    a, b, c = parse_nvd_feed(doc)
    assert (a.cvss_base, a.cvss_impact, a.cvss_exploitability) == (5.0, 2.9, 10.0)
    assert b.cvss_base is None and b.cvss_impact is None and b.cvss_exploitability is None
    assert b.severity_label is None and b.description == "no scores"
    assert (c.cvss_base, c.severity_label) == (9.3, "HIGH")


def test_malformed_document_reports_byte_offset():
    doc = b'{"CVE_Items": [\xc3\xa9 nope'
    with pytest.raises(ParseError) as info:
        parse_nvd_feed(b'{"CVE_Items": [}')
    assert info.value.offset == 15
    with pytest.raises(ParseError):
        parse_nvd_feed(doc)


def test_entry_without_id_is_collected():
    bad = feed_item("CVE-2021-0002")
    del bad["cve"]["CVE_data_meta"]
    recs = parse_nvd_feed(feed_bytes(feed_item("CVE-2021-0001"), bad, feed_item("CVE-2021-0003")))
    assert [r.cve_id for r in recs] == ["CVE-2021-0001", "CVE-2021-0003"]
    assert len(recs.errors) == 1 and "CVE_Items[1]" in str(recs.errors[0])


def test_fixture_feed_roundtrip(sample_feed):
    recs = parse_nvd_feed(sample_feed)
    assert len(recs) == 16 and not recs.errors
    again = parse_nvd_feed(dump_nvd_feed(recs))
    assert list(again) == list(recs)


@pytest.mark.parametrize(
    "text, expected",
    [
        ("fixes CVE-2024-3099 and cve-2024-3099", ["CVE-2024-3099"]),
        ("CVE-24-3099 is malformed", []),
        ("CVE-2021-44228, CVE-2020-15208", ["CVE-2021-44228", "CVE-2020-15208"]),
        ("", []),
        ("CVE-2021-123456789 too long", []),
    ],
)
def test_extract_cve_ids(text, expected):
    assert extract_cve_ids(text) == expected


cve_text = st.lists(
    st.one_of(
        st.from_regex(r"[Cc][Vv][Ee]-[0-9]{4}-[0-9]{4,7}", fullmatch=True),
        st.text(alphabet="abc -,.", max_size=8),
    ),
    max_size=8,
).map(" ".join)


@given(cve_text)
def test_extract_is_idempotent_and_well_formed(text):
    ids = extract_cve_ids(text)
    assert extract_cve_ids(" ".join(ids)) == ids
    assert all(CVE_RE.fullmatch(i) for i in ids)
    assert len(set(ids)) == len(ids)


def test_parse_cpe_forms():
    assert parse_cpe("google:tensorflow") == CpeId("google", "tensorflow", WILDCARD)
    c = parse_cpe("cpe:2.3:a:haxx:curl:7.1:*:*:*:*:*:*:*")
    assert (c.vendor, c.product, c.version) == ("haxx", "curl", "7.1")
    with pytest.raises(FormatError):
        parse_cpe("curl")


@given(
    st.text(alphabet="abcxyz_.-:*", min_size=1, max_size=6).filter(lambda s: s != "*"),
    st.text(alphabet="abcxyz_.-:", min_size=1, max_size=6),
    st.text(alphabet="0123456789.*", min_size=1, max_size=5),
)
def test_cpe_uri_roundtrip(vendor, product, version):
    c = CpeId(vendor, product, version)
    assert parse_cpe(c.to_uri()) == c


def test_issue_dump_lines():
    lines = [
        json.dumps({"repo": "a/b", "issue_id": 1, "title": "t", "body": "see CVE-2020-15208", "timestamp": 1}),
        "not json",
        json.dumps({"repo": "a/b", "issue_id": 2, "title": "x", "body": "", "timestamp": 2}),
    ]
    recs = load_issue_dump("\n".join(lines).encode())
    assert [r.issue_id for r in recs] == [1, 2]
    assert recs[0].extracted_cves == ("CVE-2020-15208",)
    assert [e.line for e in recs.errors] == [2]
    assert load_issue_dump(b"") == []


def test_technique_catalog_rejects_duplicates():
    entry = {"technique_id": "AML.T0024", "name": "n", "tactic": "Exfiltration"}
    assert len(load_technique_catalog(json.dumps([entry]))) == 1
    with pytest.raises(ParseError):
        load_technique_catalog(json.dumps([entry, entry]))
