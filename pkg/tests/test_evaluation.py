import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crashsma.evaluation import (
    AlignmentError,
    MethodEstimates,
    evaluate,
    fp_rate,
    mct,
    mspe,
    sct,
    top_alpha,
    top_count,
)


def test_top_alpha_examples():
    assert top_alpha([5, 1, 4, 2, 3], 0.4).tolist() == [0, 2]
    assert top_alpha(np.ones(10), 0.2).tolist() == [0, 1]
    assert len(top_alpha(np.random.default_rng(0).random(1000), 0.01)) == 10


@pytest.mark.parametrize("alpha", [0.0, 1.0, -0.1, 1.5])
def test_alpha_out_of_range(alpha):
    with pytest.raises(ValueError):
        top_alpha([1, 2, 3], alpha)


def test_top_count_rounding():
    assert top_count(100, 0.07) == 7
    assert top_count(10, 0.025) == 1
    assert top_count(45, 0.1) == 5


def test_sct_examples():
    est = [9, 0, 8, 0, 7, 0, 0, 0, 0, 0]
    nxt = [6, 100, 8, 100, 4, 100, 100, 100, 100, 100]
    assert sct(est, nxt, 0.3) == 6.0
    assert sct(est, np.zeros(10), 0.3) == 0.0


def test_mct_examples():
    a = np.arange(10.0)
    assert mct(a, a, 0.2) == 1.0
    assert mct(a, -a, 0.2) == 0.0


def test_fp_examples():
    a = np.arange(10.0)
    assert fp_rate(a, a, 0.2) == 0.0
    assert fp_rate(a, -a, 0.2) == 1.0


def test_mspe_examples():
    assert mspe([1, 2], [2, 4]) == 2.5
    assert mspe([3, 1], [3, 1]) == 0.0


def test_misalignment():
    with pytest.raises(AlignmentError):
        sct([1, 2, 3], [1, 2], 0.5)
    a = MethodEstimates("count", "p1", [1, 2], sections=(("A", 0), ("A", 1)))
    b = MethodEstimates("count", "p2", [1, 2], sections=(("B", 0), ("B", 1)))
    with pytest.raises(AlignmentError):
        mct(a, b, 0.5)


vectors = st.lists(st.integers(0, 30), min_size=5, max_size=200)
alphas = st.sampled_from([0.01, 0.025, 0.05, 0.1, 0.3])


@settings(max_examples=100, deadline=None)
@given(vectors, st.data(), alphas)
def test_rank_statistics_invariant_under_monotone_transform(v1, data, alpha):
    n = len(v1)
    v2 = data.draw(st.lists(st.integers(0, 30), min_size=n, max_size=n))
    nxt = data.draw(st.lists(st.integers(0, 30), min_size=n, max_size=n))
    a, b = np.array(v1, float), np.array(v2, float)
    ta, tb = np.exp(a / 3), np.sqrt(b) * 7 + 1
    assert sct(ta, nxt, alpha) == sct(a, nxt, alpha)
    assert mct(ta, tb, alpha) == mct(a, b, alpha)
    assert fp_rate(ta, tb, alpha) == fp_rate(a, b, alpha)


@settings(max_examples=100, deadline=None)
@given(vectors, st.data(), alphas)
def test_mct_symmetric_and_fp_self_zero(v1, data, alpha):
    v2 = data.draw(st.lists(st.integers(0, 30), min_size=len(v1), max_size=len(v1)))
    assert mct(v1, v2, alpha) == mct(v2, v1, alpha)
    assert fp_rate(v1, v1, alpha) == 0.0
    # equal set sizes make FP the complement of the overlap
    assert fp_rate(v1, v2, alpha) == pytest.approx(1 - mct(v1, v2, alpha))


@settings(max_examples=60, deadline=None)
@given(vectors, st.data())
def test_sct_at_full_coverage_is_mean(v1, data):
    nxt = data.draw(st.lists(st.integers(0, 30), min_size=len(v1), max_size=len(v1)))
    alpha = 1 - 1e-12
    assert sct(v1, nxt, alpha) == pytest.approx(np.mean(nxt))


def test_evaluate_report(tmp_path):
    rng = np.random.default_rng(1)
    c1, c2 = rng.poisson(3, 200), rng.poisson(3, 200)
    m1 = {"count": c1, "flat": np.full(200, 3.0)}
    m2 = {"count": c2, "flat": np.full(200, 3.0)}
    rep = evaluate(m1, c2, methods_p2=m2, references={"count": c2}, alphas=(0.05, 0.1), periods=("a", "b"))
    assert rep.mspe["flat"] == pytest.approx(np.mean((c2 - 3.0) ** 2))
    assert set(rep.sct) == {"count", "flat"}
    assert rep.mct["flat"][0.05] == 1.0
    assert not rep.warnings
    rep.to_csv(tmp_path / "r.csv", ["hdr"])
    rep.to_json(tmp_path / "r.json")
    doc = json.loads((tmp_path / "r.json").read_text())
    assert doc["tie_break"] == rep.tie_break
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[1] == "statistic,alpha,reference,method,value"
    assert len(lines) == 2 + len(rep.rows())
    text = rep.to_text()
    assert "Top 5%" in text and "MSPE" in text


def test_overlapping_reference_warns():
    rep = evaluate({"count": [1, 2, 3]}, [1, 2, 3], references={"count": [1, 2, 3]},
                   alphas=(0.5,), periods=("a", "b"), reference_period="a")
    assert rep.warnings
