import json

import pytest

from threatgraph.cli import fixture_bytes


def feed_bytes(*items) -> bytes:
    return json.dumps({"CVE_Items": list(items)}).encode()


def feed_item(cve_id, desc="", base=None, impact=None, expl=None, severity=None, cpes=()):
    item = {
        "cve": {
            "CVE_data_meta": {"ID": cve_id},
            "description": {"description_data": [{"lang": "en", "value": desc}]},
        },
        "configurations": {"nodes": [{"cpe_match": [{"cpe23Uri": c} for c in cpes]}]},
    }
    if base is not None:
        item["impact"] = {
            "baseMetricV2": {
                "cvssV2": {"baseScore": base, "impactScore": impact, "exploitabilityScore": expl},
                "severity": severity,
            }
        }
    return item


@pytest.fixture
def sample_feed():
    return fixture_bytes("sample_feed.json")


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[n])
