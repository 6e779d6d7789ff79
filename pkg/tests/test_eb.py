import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crashsma.eb import (
    ConvergenceError,
    SingularDesignError,
    SPFModel,
    design_matrix,
    eb_estimate,
    fit_nb_regression,
    fit_poisson_regression,
    nb_loglike,
    nb_score,
    predict_mu,
)


def nb_sample(n, beta, phi, seed):
    rng = np.random.default_rng(seed)
    X = np.column_stack([np.ones(n), rng.uniform(0, 3, n)])
    mu = np.exp(X @ beta)
    lam = rng.gamma(1 / phi, phi * mu)
    return X, rng.poisson(lam)


def test_eb_hand_cases():
    assert eb_estimate(2.0, 0.0, 6) == 2.0
    assert eb_estimate(2.0, 0.5, 6) == pytest.approx(4.0)
    assert eb_estimate(2.0, 1e9, 6) == pytest.approx(6.0, abs=1e-6)


def test_eb_vectorised_and_validation():
    out = eb_estimate(np.array([2.0, 1.0]), 0.5, np.array([6, 0]))
    np.testing.assert_allclose(out, [4.0, 1 / 1.5])
    with pytest.raises(ValueError):
        eb_estimate(0.0, 0.5, 1)
    with pytest.raises(ValueError):
        eb_estimate(1.0, -0.1, 1)


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-3, 100), st.floats(0, 100), st.integers(0, 200))
def test_eb_is_between_mu_and_y(mu, phi, y):
    est = eb_estimate(mu, phi, y)
    lo, hi = min(mu, y), max(mu, y)
    assert lo - 1e-9 * hi <= est <= hi + 1e-9 * hi


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-2, 50), st.floats(0, 20), st.floats(0, 20), st.integers(0, 100))
def test_eb_moves_toward_count_with_phi(mu, p1, p2, y):
    lo, hi = sorted((p1, p2))
    assert abs(eb_estimate(mu, hi, y) - y) <= abs(eb_estimate(mu, lo, y) - y) + 1e-9


def test_predict_mu_examples():
    m = SPFModel(["const", "x"], np.array([np.log(2), 1.0]), 0.1, np.zeros(0), 0, 0, 0)
    assert predict_mu(m, [[1, np.log(3)]])[0] == pytest.approx(6.0)
    m0 = SPFModel(["const"], np.array([0.0]), 0.1, np.zeros(0), 0, 0, 0)
    assert predict_mu(m0, np.ones((3, 1))).tolist() == [1.0, 1.0, 1.0]


def test_predict_mu_by_name():
    m = SPFModel(["const", "x"], np.array([np.log(2), 1.0]), 0.1, np.zeros(0), 0, 0, 0)
    assert predict_mu(m, [[np.log(3), 1]], names=["x", "const"])[0] == pytest.approx(6.0)
    with pytest.raises(KeyError):
        predict_mu(m, [[1.0]], names=["const"])


def test_nb_recovers_parameters():
    beta, phi = np.array([-1.0, 0.8]), 0.5
    X, y = nb_sample(5000, beta, phi, seed=1)
    m = fit_nb_regression(X, y, ["const", "x"])
    assert np.all(np.abs(m.coefficients - beta) <= 3 * m.std_errors)
    assert abs(m.overdispersion - phi) <= 0.15 * phi
    assert np.max(np.abs(nb_score(np.r_[m.coefficients, m.overdispersion], X, y))) < 1e-6
    assert not m.poisson_limit


def test_nb_matches_statsmodels():
    sm = pytest.importorskip("statsmodels.api")
    X, y = nb_sample(3000, np.array([0.2, 0.4]), 1.2, seed=4)
    m = fit_nb_regression(X, y)
    ref = sm.NegativeBinomial(y, X, loglike_method="nb2").fit(disp=0, maxiter=500)
    # statsmodels stops earlier (score ~1e-3), so compare loosely and
    # require our likelihood to be at least as high
    np.testing.assert_allclose(m.coefficients, ref.params[:2], rtol=1e-4, atol=1e-5)
    assert m.overdispersion == pytest.approx(ref.params[2], rel=1e-3)
    assert m.log_likelihood >= ref.llf - 1e-9
    np.testing.assert_allclose(m.std_errors, ref.bse[:2], rtol=1e-3)


def test_poisson_limit_path():
    X = np.column_stack([np.ones(40), np.tile([0.0, np.log(2), np.log(3), np.log(5)], 10)])
    y = np.round(np.exp(X @ np.array([np.log(4), 1.0])))
    m = fit_nb_regression(X, y)
    assert m.poisson_limit and m.overdispersion == 0
    np.testing.assert_allclose(m.coefficients, [np.log(4), 1.0], atol=1e-6)


def test_poisson_fit_matches_glm():
    sm = pytest.importorskip("statsmodels.api")
    rng = np.random.default_rng(2)
    X = np.column_stack([np.ones(500), rng.normal(size=500)])
    y = rng.poisson(np.exp(0.3 + 0.5 * X[:, 1]))
    beta, _ = fit_poisson_regression(X, y)
    ref = sm.GLM(y, X, family=sm.families.Poisson()).fit(tol=1e-12)
    np.testing.assert_allclose(beta, ref.params, atol=1e-6)


@pytest.mark.parametrize("seed", range(20))
def test_score_matches_finite_differences(seed):
    rng = np.random.default_rng(100 + seed)
    n = int(rng.integers(10, 60))
    X = np.column_stack([np.ones(n), rng.normal(size=n), rng.uniform(0, 2, n)])
    y = rng.poisson(np.exp(X @ np.array([0.1, 0.3, -0.2])) * rng.gamma(2, 0.5, n))
    params = np.r_[rng.normal(scale=0.3, size=3), rng.uniform(0.1, 2)]
    g = nb_score(params, X, y)
    for j in range(params.size):
        h = 1e-6 * max(1.0, abs(params[j]))
        e = np.zeros_like(params)
        e[j] = h
        fd = (nb_loglike(params + e, X, y) - nb_loglike(params - e, X, y)) / (2 * h)
        assert g[j] == pytest.approx(fd, rel=1e-4, abs=1e-6)


def test_singular_design_names_columns():
    x = np.arange(10.0)
    X = np.column_stack([np.ones(10), x, 2 * x])
    with pytest.raises(SingularDesignError) as exc:
        fit_nb_regression(X, np.arange(10) % 3, ["const", "aadt", "aadt2"])
    assert "aadt2" in exc.value.columns


def test_convergence_error_carries_iterate():
    X, y = nb_sample(200, np.array([0.0, 0.5]), 0.8, seed=6)
    with pytest.raises(ConvergenceError) as exc:
        fit_nb_regression(X, y, max_iter=1, tol=1e-300)
    assert exc.value.beta is not None and np.isfinite(exc.value.grad_norm)


def test_json_round_trip(tmp_path):
    X, y = nb_sample(800, np.array([0.0, 0.5]), 0.8, seed=3)
    m = fit_nb_regression(X, y, ["const", "x"])
    m.to_json(tmp_path / "m.json")
    back = SPFModel.from_json(tmp_path / "m.json")
    np.testing.assert_array_equal(back.coefficients, m.coefficients)
    assert back.overdispersion == m.overdispersion
    assert back.covariate_names == ["const", "x"]
    m.write_report(tmp_path / "m.csv", ["hdr"])
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[1] == "parameter,estimate,std_error,p_value"
    assert lines[2].startswith("overdispersion,")


def test_design_matrix(network_csv):
    from crashsma.data import load_crash_csv

    path = network_csv(
        periods=["2014"],
        routes=[("I64", "E"), ("I81", "N")],
        lam_for_route=lambda r, d: np.full(30, 1.5),
        covariates={"aadt": lambda r, d, i: 1000 + 10 * i},
    )
    ds = load_crash_csv(path)
    period = ds.periods[0]
    X, y, names = design_matrix(ds, period, ["aadt"], ["route_id"])
    assert names[0] == "const" and names[1] == "aadt"
    assert X.shape == (y.shape[0], len(names))
    assert all(n.startswith("route_id[") for n in names[2:])
    with pytest.raises(KeyError):
        design_matrix(ds, period, ["nope"])
