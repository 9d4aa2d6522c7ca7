import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from threatgraph.analytics import (
    CvsRow,
    DeploymentProxies,
    check_cvs_weights,
    cvs_rank,
    deployment_weights,
    load_cvs_inputs,
    load_deployment_proxies,
    load_frequency_table,
    loo_sensitivity,
    normalized_frequency,
    ols_fit,
    pareto,
    risk_table,
    round_half_up,
)
from threatgraph.cli import fixture_bytes
from threatgraph.errors import ConfigError, DomainError, FormatError
from threatgraph.synthetic import zipf_counts

# model family, f, w, printed f_hat
FREQ_TABLE = [
    ("GPT-3.5/4 (API)", 218, 0.92, 237),
    ("Stable Diffusion", 144, 0.77, 187),
    ("LLaMA-2 (HF)", 89, 0.61, 146),
    ("CLIP / OpenCLIP", 51, 0.34, 150),
    ("LoRA-BERT variants", 37, 0.19, 195),
    ("T5-XXL", 31, 0.55, 56),
    ("Whisper (ASR)", 29, 0.48, 60),
    ("BLOOM-Z", 27, 0.41, 66),
    ("ViT Base / Large", 22, 0.63, 35),
    ("DINO-v2", 20, 0.57, 35),
]


def proxies(name, *vals):
    return DeploymentProxies(name, *vals)


def test_weights_examples():
    assert deployment_weights([proxies("a", 5, 5, 5, 5)]) == {"a": 0.0}
    w = deployment_weights([proxies("a", 1, 1, 1, 1), proxies("b", 3, 3, 3, 3)])
    assert w["a"] == 0.0 and w["b"] == pytest.approx(2 / 2.0001)


def test_weights_permutation():
    rows = [proxies("a", 1, 9, 3, 2), proxies("b", 3, 1, 4, 4), proxies("c", 0, 2, 8, 1)]
    assert deployment_weights(rows) == pytest.approx(deployment_weights(rows[::-1]))


proxy_row = st.tuples(*[st.floats(0, 1e4)] * 4)


def well_spread(vals):
    # columns must be constant or spread far beyond rounding error after a shift
    cols = np.array(vals).T
    return all(np.ptp(c) == 0 or np.ptp(c) > 1e-3 for c in cols)


@given(st.lists(proxy_row, min_size=2, max_size=6).filter(well_spread), st.integers(0, 3), st.floats(0.5, 20), st.floats(0, 100))
@settings(max_examples=60)
def test_weights_range_and_affine_invariance(vals, col, scale, shift):
    rows = [proxies(f"m{i}", *v) for i, v in enumerate(vals)]
    w = deployment_weights(rows)
    assert all(0.0 <= x < 1.0 for x in w.values())
    moved = []
    for i, v in enumerate(vals):
        v = list(v)
        v[col] = v[col] * scale + shift
        moved.append(proxies(f"m{i}", *v))
    w2 = deployment_weights(moved)
    for k in w:
        assert w2[k] == pytest.approx(w[k], abs=1e-6)


def test_normalized_frequency_examples():
    assert normalized_frequency(218, 0.92) == pytest.approx(236.93, abs=5e-3)
    assert round_half_up(normalized_frequency(37, 0.19)) == 195
    assert normalized_frequency(0, 0.4) == 0.0
    with pytest.raises(DomainError):
        normalized_frequency(-1, 0.5)


def test_frequency_fixture_matches_table():
    rows = load_frequency_table(fixture_bytes("frequency_table.csv"))
    assert [(r.model_family, r.f, r.w) for r in rows] == [row[:3] for row in FREQ_TABLE]
    assert [r.f_hat_rounded for r in rows] == [row[3] for row in FREQ_TABLE]


def test_risk_table_order():
    table = risk_table({"a": 10, "b": 10, "c": 1}, {"a": 0.5, "b": 0.5, "c": 0.0})
    assert [r.model_family for r in table] == ["c", "a", "b"]


def test_cvs_examples():
    assert CvsRow("GPT-4", 0.95, 0.985, 0.9).cvs == pytest.approx(0.945)
    assert CvsRow("z", 0, 0, 0).cvs == 0
    rows = load_cvs_inputs(fixture_bytes("cvs_inputs.csv"))
    by_prompt = [r.model for r in sorted(rows, key=lambda r: (-r.prompt_asr, r.model))]
    assert [r.model for r in cvs_rank(rows, (1, 0, 0))] == by_prompt
    assert cvs_rank(rows)[0].model == "GPT-4"
    with pytest.raises(ConfigError):
        cvs_rank(rows, (0.5, 0.5, 0.1))
    check_cvs_weights((0.2, 0.3, 0.5 + 5e-10))


def test_loo_examples():
    same = [proxies(n, v, v, v, v) for n, v in (("a", 1), ("b", 5), ("c", 9))]
    f = {"a": 10, "b": 40, "c": 90}
    out = loo_sensitivity(same, f, 2)
    assert all(v == (0, 0) for v in out.values())
    # a and b balance out, so all weights tie until one proxy is dropped
    rows = [proxies("a", 5, 0, 0, 5), proxies("b", 0, 5, 5, 0), proxies("c", 2.5, 2.5, 2.5, 2.5)]
    f = {"a": 50, "b": 50, "c": 50}
    out = loo_sensitivity(rows, f, 3)
    # without ckpt_pulls a is most deployed, so the order a, b, c becomes b, c, a
    assert out["ckpt_pulls"] == (2, 2)
    for max_shift, topk in out.values():
        assert topk == max_shift
    with pytest.raises(DomainError):
        loo_sensitivity(rows, f, 4)


def test_loo_on_fixture_is_stable():
    rows = load_deployment_proxies(fixture_bytes("deployment_proxies.csv"))
    f = {r[0]: r[1] for r in FREQ_TABLE}
    out = loo_sensitivity(rows, f, 5)
    assert set(out) == {"pkg_installs", "ckpt_pulls", "docker_pulls", "citation_momentum"}


def test_pareto_examples():
    r = pareto({"a": 80, "b": 10, "c": 10}, 0.8)
    assert r.prefix == ["a"] and r.prefix_share == 0.8
    for n in (5, 7, 10):
        assert pareto({f"c{i}": 3 for i in range(n)}, 0.8).prefix_size == math.ceil(0.8 * n - 1e-9)
    one = pareto({"x": 4})
    assert (one.prefix_size, one.prefix_share) == (1, 1.0)
    with pytest.raises(DomainError):
        pareto({})


@given(st.dictionaries(st.text("abc", min_size=1, max_size=3), st.integers(0, 100), min_size=1).filter(
    lambda d: sum(d.values()) > 0), st.floats(0.05, 1.0))
def test_pareto_curve(counts, threshold):
    r = pareto(counts, threshold)
    shares = [s for _, _, s in r.curve]
    assert all(b >= a for a, b in zip(shares, shares[1:]))
    assert shares[-1] == pytest.approx(1.0, abs=1e-12)
    assert r.prefix_share >= threshold - 1e-12
    assert r.prefix_size == 1 or shares[r.prefix_size - 2] < threshold


def test_pareto_zipf():
    r = pareto(zipf_counts(91), 0.8)
    assert r.prefix_size / 91 <= 0.25


def test_ols_examples():
    xs = np.arange(10.0)
    fit = ols_fit([(x, 0.3 * x + 3.01) for x in xs])
    assert fit.slope == pytest.approx(0.3) and fit.intercept == pytest.approx(3.01) and fit.r == pytest.approx(1.0)
    flat = ols_fit([(1, 2), (3, 2), (4, 2)])
    assert (flat.slope, flat.r) == (0.0, 0.0)
    two = ols_fit([(1, 1), (3, 5)])
    assert (two.slope, two.intercept) == pytest.approx((2.0, -1.0))
    with pytest.raises(DomainError):
        ols_fit([(1, 1), (1, 2)])


@given(st.lists(st.tuples(st.floats(-100, 100), st.floats(-100, 100)), min_size=3, max_size=20).filter(
    lambda pts: np.ptp([p[0] for p in pts]) > 1e-3))
def test_ols_residuals_orthogonal(pts):
    fit = ols_fit(pts)
    x = np.array([p[0] for p in pts])
    y = np.array([p[1] for p in pts])
    resid = y - (fit.slope * x + fit.intercept)
    assert abs(resid @ x) <= 1e-8 * max(1.0, np.abs(x).sum() * np.abs(y).max())
    assert abs(resid.sum()) <= 1e-8 * max(1.0, np.abs(y).sum())


def test_bad_csv_rows():
    with pytest.raises(FormatError):
        load_frequency_table("model_family,f,w\nx,notanint,0.3\n")
    with pytest.raises(FormatError):
        load_deployment_proxies("model_family,pkg_installs,ckpt_pulls,docker_pulls,citation_momentum\nx,-1,0,0,0\n")
