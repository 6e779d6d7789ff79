import json
import math
from pathlib import Path

import numpy as np
import pytest

from crashsma.synthetic import (
    FIGURE2_SPIKE,
    PRESETS,
    build_profile,
    mse_vs_truth,
    poisson_draws,
    preset,
    pure_unbiasedness_experiment,
    sample_counts,
)

GOLDEN = Path(__file__).parent / "data" / "golden_draws_seed42.json"


def test_constant_profile():
    p = build_profile([{"length": 100, "shape": "constant", "params": {"level": 0.5}}])
    assert p.lam.tolist() == [0.5] * 100


def test_spike_preset_has_one_maximum():
    lam = preset("spike").lam
    assert np.sum(lam == lam.max()) == 1


def test_figure2_layout():
    lam = preset("figure2").lam
    assert lam.size == 1024
    assert np.argmax(lam) == FIGURE2_SPIKE
    assert lam[:384].tolist() == [0.2] * 384


def test_bad_profiles():
    with pytest.raises(ValueError):
        build_profile([{"length": 3, "shape": "constant", "params": {"level": 0}}])
    with pytest.raises(ValueError):
        build_profile([{"length": 3, "shape": "zigzag", "params": {}}])
    with pytest.raises(ValueError):
        build_profile([])
    with pytest.raises(ValueError):
        preset("nope")


def test_sinusoid_ramp_ranges():
    lam = preset("pure256").lam
    assert lam.min() >= 2 - 1e-12 and lam.max() <= 10 + 1e-12


def test_draws_deterministic_and_seed_sensitive():
    p = preset("pure256")
    a = sample_counts(p, 5, 3).draws
    b = sample_counts(p, 5, 3).draws
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, sample_counts(p, 6, 3).draws)
    # replicate r does not depend on how many replicates were requested
    np.testing.assert_array_equal(sample_counts(p, 5, 1).draws[0], a[0])
    np.testing.assert_array_equal(poisson_draws(p.lam, 5, 2, first_replicate=1), a[1:])


def test_golden_draws():
    doc = json.loads(GOLDEN.read_text())
    draws = sample_counts(preset(doc["preset"]), doc["seed"], doc["replicates"]).draws
    assert draws[:, : len(doc["draws"][0])].tolist() == doc["draws"]


def test_tiny_rate_draws_zero():
    assert not poisson_draws(np.full(50, 1e-9), 1, 20).any()


@pytest.mark.parametrize("lam", [4.0, 25.0])
def test_law_of_large_numbers(lam):
    x = poisson_draws(np.array([lam]), 3, 10000)[:, 0]
    assert abs(x.mean() - lam) <= 3 * math.sqrt(lam / 10000)
    assert x.var(ddof=1) == pytest.approx(lam, rel=0.05)


def test_difference_variance():
    p = preset("pure256")
    y = sample_counts(p, 8, 4000).draws.astype(float)
    d = y - np.roll(y, -1, axis=1)
    expected = p.lam + np.roll(p.lam, -1)
    ratio = d.var(axis=0, ddof=1) / expected
    assert abs(ratio.mean() - 1) < 0.05


def test_mse_vs_truth():
    p = preset("spike")
    assert mse_vs_truth(p.lam, p) == 0.0
    assert mse_vs_truth(p.lam + 1, p) == 1.0
    with pytest.raises(ValueError):
        mse_vs_truth(p.lam[:-1], p)


def test_single_replicate_has_undefined_se():
    rows = pure_unbiasedness_experiment(preset("pure256"), [0.0, 2.0], 1, 1)
    assert all(math.isnan(r.se_combined) and r.within is None for r in rows)


def test_pure_check_small():
    rows = pure_unbiasedness_experiment(preset("pure256"), np.linspace(0, 30, 4), 2, 400)
    assert all(r.within for r in rows)
    # zero threshold keeps every difference, so PURE is sum(s) on average
    assert rows[0].mean_mse == pytest.approx(rows[0].mean_pure, rel=0.05)


def test_presets_are_valid():
    for name in PRESETS:
        assert len(preset(name)) > 0
