"""Negative binomial safety performance function and empirical Bayes shrinkage.

The SPF is an NB2 regression with log link: ``Var(Y) = mu + phi * mu**2`` and
``mu = exp(X @ beta)``. It is fitted by alternating an IRLS step for beta at
fixed phi with a one-dimensional Newton step for phi at fixed beta.
"""

import csv
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats

__all__ = [
    "SPFModel",
    "SingularDesignError",
    "ConvergenceError",
    "nb_loglike",
    "nb_score",
    "nb_hessian",
    "fit_nb_regression",
    "fit_poisson_regression",
    "predict_mu",
    "eb_estimate",
    "design_matrix",
]

logger = logging.getLogger(__name__)

PHI_FLOOR = 1e-8  # below this phi is treated as the Poisson limit


class SingularDesignError(ValueError):
    def __init__(self, columns):
        self.columns = list(columns)
        super().__init__(f"design matrix is rank deficient; collinear columns: {', '.join(self.columns)}")


class ConvergenceError(RuntimeError):
    def __init__(self, message, beta, phi, grad_norm):
        self.beta = beta
        self.phi = phi
        self.grad_norm = grad_norm
        super().__init__(f"{message} (gradient max-norm {grad_norm:.3g})")


@dataclass
class SPFModel:
    covariate_names: list
    coefficients: np.ndarray
    overdispersion: float
    fitted_mu: np.ndarray = field(repr=False)
    log_likelihood: float
    aic: float
    bic: float
    std_errors: np.ndarray = field(default=None, repr=False)
    overdispersion_se: float = math.nan
    poisson_limit: bool = False
    iterations: int = 0
    n_obs: int = 0

    @property
    def p_values(self):
        """Wald chi-square (1 df) p-values for each coefficient."""
        z = self.coefficients / self.std_errors
        return stats.chi2.sf(z * z, 1)

    def to_dict(self):
        return {
            "covariate_names": list(self.covariate_names),
            "coefficients": [float(b) for b in self.coefficients],
            "std_errors": [float(s) for s in self.std_errors] if self.std_errors is not None else None,
            "overdispersion": float(self.overdispersion),
            "overdispersion_se": None if math.isnan(self.overdispersion_se) else float(self.overdispersion_se),
            "log_likelihood": float(self.log_likelihood),
            "aic": float(self.aic),
            "bic": float(self.bic),
            "poisson_limit": bool(self.poisson_limit),
            "iterations": int(self.iterations),
            "n_obs": int(self.n_obs),
        }

    def to_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_json(cls, path):
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        se = doc.get("std_errors")
        return cls(
            covariate_names=doc["covariate_names"],
            coefficients=np.array(doc["coefficients"], dtype=np.float64),
            overdispersion=doc["overdispersion"],
            fitted_mu=np.zeros(0),
            log_likelihood=doc["log_likelihood"],
            aic=doc["aic"],
            bic=doc["bic"],
            std_errors=None if se is None else np.array(se, dtype=np.float64),
            overdispersion_se=math.nan if doc.get("overdispersion_se") is None else doc["overdispersion_se"],
            poisson_limit=doc.get("poisson_limit", False),
            iterations=doc.get("iterations", 0),
            n_obs=doc.get("n_obs", 0),
        )

    def write_report(self, path, header_lines=()):
        """Coefficient table: parameter, estimate, std_error, p_value, then fit statistics."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["parameter", "estimate", "std_error", "p_value"])
            od_se = "" if math.isnan(self.overdispersion_se) else f"{self.overdispersion_se:.6g}"
            w.writerow(["overdispersion", f"{self.overdispersion:.6g}", od_se, ""])
            pv = self.p_values
            for name, b, se, p in zip(self.covariate_names, self.coefficients, self.std_errors, pv):
                w.writerow([name, f"{b:.6g}", f"{se:.6g}", f"{p:.4g}"])
            w.writerow(["log_likelihood", f"{self.log_likelihood:.6f}", "", ""])
            w.writerow(["aic", f"{self.aic:.6f}", "", ""])
            w.writerow(["bic", f"{self.bic:.6f}", "", ""])


def _split(params):
    params = np.asarray(params, dtype=np.float64)
    return params[:-1], float(params[-1])


def nb_loglike(params, X, y):
    """NB2 log-likelihood at ``params = [beta..., phi]``; phi = 0 gives the Poisson one."""
    beta, phi = _split(params)
    eta = X @ beta
    mu = np.exp(eta)
    if phi <= 0:
        return float(np.sum(y * eta - mu - special.gammaln(y + 1)))
    r = 1.0 / phi
    return float(
        np.sum(
            special.gammaln(y + r) - special.gammaln(r) - special.gammaln(y + 1)
            + y * np.log(phi * mu) - (y + r) * np.log1p(phi * mu)
        )
    )


def nb_score(params, X, y):
    """Gradient of :func:`nb_loglike` with respect to ``[beta..., phi]``."""
    beta, phi = _split(params)
    mu = np.exp(X @ beta)
    g_beta = X.T @ ((y - mu) / (1 + phi * mu))
    if phi <= 0:
        g_phi = 0.5 * float(np.sum((y - mu) ** 2 - y))
    else:
        r = 1.0 / phi
        g_phi = float(
            np.sum(
                r * r * (special.digamma(r) - special.digamma(y + r) + np.log1p(phi * mu))
                + (y - mu) / (phi * (1 + phi * mu))
            )
        )
    return np.append(g_beta, g_phi)


def _phi_curvature(phi, mu, y):
    r = 1.0 / phi
    B = special.digamma(r) - special.digamma(y + r) + np.log1p(phi * mu)
    dB = r * r * (special.polygamma(1, y + r) - special.polygamma(1, r)) + mu / (1 + phi * mu)
    dA = -2 * r ** 3 * B + r * r * dB
    q = phi + phi * phi * mu
    dC = -(y - mu) * (1 + 2 * phi * mu) / (q * q)
    return float(np.sum(dA + dC))


def nb_hessian(params, X, y):
    """Observed Hessian of :func:`nb_loglike` (phi > 0)."""
    beta, phi = _split(params)
    mu = np.exp(X @ beta)
    k = X.shape[1]
    H = np.empty((k + 1, k + 1))
    w = mu * (1 + phi * y) / (1 + phi * mu) ** 2
    H[:k, :k] = -(X.T * w) @ X
    cross = X.T @ (-(y - mu) * mu / (1 + phi * mu) ** 2)
    H[:k, k] = cross
    H[k, :k] = cross
    H[k, k] = _phi_curvature(phi, mu, y) if phi > 0 else math.nan
    return H


def _collinear_columns(X, names):
    keep = []
    bad = []
    for j in range(X.shape[1]):
        trial = keep + [j]
        if np.linalg.matrix_rank(X[:, trial]) == len(trial):
            keep.append(j)
        else:
            bad.append(names[j])
    return bad


def _validate(X, y, names):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise ValueError(f"design {X.shape} does not match response {y.shape}")
    n, k = X.shape
    if names is None:
        names = ["const"] + [f"x{j}" for j in range(1, k)]
    if len(names) != k:
        raise ValueError(f"{len(names)} names for {k} columns")
    if n < k + 1:
        raise ValueError(f"need at least {k + 1} rows for {k} columns, got {n}")
    if np.any(y < 0) or np.any(y != np.floor(y)):
        raise ValueError("response must be nonnegative integer counts")
    zero_cols = [names[j] for j in range(k) if not np.any(X[:, j])]
    if zero_cols:
        raise SingularDesignError(zero_cols)
    if np.linalg.matrix_rank(X) < k:
        raise SingularDesignError(_collinear_columns(X, names))
    return X, y, list(names)


def _irls_step(X, y, beta, phi):
    eta = X @ beta
    mu = np.exp(eta)
    w = mu / (1 + phi * mu)
    z = eta + (y - mu) / mu
    XtW = X.T * w
    return np.linalg.solve(XtW @ X, XtW @ z)


def _beta_update(X, y, beta, phi):
    """IRLS step with step halving so the log-likelihood never decreases."""
    params = np.append(beta, phi)
    ll0 = nb_loglike(params, X, y)
    step = _irls_step(X, y, beta, phi) - beta
    for _ in range(40):
        cand = beta + step
        if nb_loglike(np.append(cand, phi), X, y) >= ll0 - 1e-12 * abs(ll0):
            return cand
        step = step / 2
    return beta


def fit_poisson_regression(X, y, names=None, max_iter=200, tol=1e-8):
    """Poisson regression by IRLS; returns ``(beta, iterations)``."""
    X, y, names = _validate(X, y, names)
    beta = _initial_beta(X, y)
    for it in range(1, max_iter + 1):
        new = _beta_update(X, y, beta, 0.0)
        delta = np.max(np.abs(new - beta))
        beta = new
        if delta < tol:
            return beta, it
    g = np.max(np.abs(nb_score(np.append(beta, 0.0), X, y)[:-1]))
    raise ConvergenceError("Poisson IRLS did not converge", beta, 0.0, g)


def _initial_beta(X, y):
    return np.linalg.lstsq(X, np.log(y + 0.5), rcond=None)[0]


def _phi_update(X, y, beta, phi):
    """One safeguarded Newton step for phi at fixed beta."""
    mu = np.exp(X @ beta)
    g = nb_score(np.append(beta, phi), X, y)[-1]
    h = _phi_curvature(phi, mu, y)
    if h < 0:
        step = -g / h
    else:
        step = math.copysign(0.5 * phi, g)
    ll0 = nb_loglike(np.append(beta, phi), X, y)
    for _ in range(60):
        cand = phi + step
        if cand <= 0:
            step = -0.5 * phi if step < 0 else step / 2
            continue
        if nb_loglike(np.append(beta, cand), X, y) >= ll0 - 1e-12 * abs(ll0):
            return cand
        step /= 2
    return phi


def fit_nb_regression(X, y, names=None, *, max_iter=200, tol=1e-8):
    """Maximum likelihood NB2 fit.

    Starts from an OLS fit of ``log(y + 0.5)`` and a Pearson moment estimate
    of phi, then alternates IRLS (beta) and Newton (phi) until both move by
    less than ``tol``. When the data carry no overdispersion the model falls
    back to the Poisson limit, ``phi = 0`` and ``poisson_limit=True``.
    """
    X, y, names = _validate(X, y, names)
    n, k = X.shape
    beta = _initial_beta(X, y)
    mu = np.exp(X @ beta)
    phi = float(np.sum(((y - mu) ** 2 - mu) / mu ** 2) / (n - k))
    phi = min(max(phi, 0.1), 10.0)

    poisson = False
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        new_beta = _beta_update(X, y, beta, phi)
        mu = np.exp(X @ new_beta)
        if phi < 1e-4 and np.sum((y - mu) ** 2 - y) <= 0:
            poisson = True
            beta = new_beta
            break
        new_phi = _phi_update(X, y, new_beta, phi)
        dbeta = np.max(np.abs(new_beta - beta))
        dphi = abs(new_phi - phi)
        beta, phi = new_beta, new_phi
        if phi < PHI_FLOOR:
            poisson = True
            break
        if dbeta < tol and dphi < tol:
            converged = True
            break

    if poisson:
        beta, extra = fit_poisson_regression(X, y, names, max_iter=max_iter, tol=tol)
        phi = 0.0
        it += extra
        converged = True
        logger.info("overdispersion driven to zero; using the Poisson limit")

    params = np.append(beta, phi)
    if not converged:
        g = float(np.max(np.abs(nb_score(params, X, y))))
        raise ConvergenceError(f"NB fit did not converge in {max_iter} iterations", beta, phi, g)

    ll = nb_loglike(params, X, y)
    if poisson:
        mu = np.exp(X @ beta)
        info = (X.T * mu) @ X
        cov = np.linalg.inv(info)
        se = np.sqrt(np.diag(cov))
        phi_se = math.nan
        p = k
    else:
        cov = np.linalg.inv(-nb_hessian(params, X, y))
        se = np.sqrt(np.diag(cov))[:k]
        phi_se = float(np.sqrt(cov[k, k]))
        p = k + 1
    return SPFModel(
        covariate_names=names,
        coefficients=beta,
        overdispersion=phi,
        fitted_mu=np.exp(X @ beta),
        log_likelihood=ll,
        aic=-2 * ll + 2 * p,
        bic=-2 * ll + p * math.log(n),
        std_errors=se,
        overdispersion_se=phi_se,
        poisson_limit=poisson,
        iterations=it,
        n_obs=n,
    )


def predict_mu(model, X, names=None):
    """``exp(X @ beta)``. When ``names`` is given the columns are matched by name."""
    X = np.asarray(X, dtype=np.float64)
    if names is not None:
        missing = [c for c in model.covariate_names if c not in names]
        if missing:
            raise KeyError(f"design is missing covariates: {', '.join(missing)}")
        X = X[:, [list(names).index(c) for c in model.covariate_names]]
    if X.shape[1] != len(model.covariate_names):
        raise KeyError(f"design has {X.shape[1]} columns, model expects {len(model.covariate_names)}")
    return np.exp(X @ model.coefficients)


def eb_estimate(mu, phi, y):
    """Empirical Bayes expected crashes: ``w * y + (1 - w) * mu`` with ``w = phi mu / (1 + phi mu)``.

    Vectorises over array arguments.
    """
    mu = np.asarray(mu, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if np.any(mu <= 0):
        raise ValueError("mu must be positive")
    if np.any(np.asarray(phi) < 0):
        raise ValueError("phi must be nonnegative")
    pm = phi * mu
    w = pm / (1 + pm)
    out = (1 - w) * mu + w * y
    return float(out) if out.ndim == 0 else out


def design_matrix(dataset, period, covariates=(), categorical=()):
    """Intercept + numeric covariates + one-hot categoricals for one period.

    Sections are stacked in the dataset's (route_id, direction) order.
    ``categorical`` may name ``route_id``, ``direction`` or any covariate
    column; the first level (sorted) is the dropped reference. Returns
    ``(X, y, names)``.
    """
    series = dataset.by_period(period)
    if not series:
        raise KeyError(f"no series for period {period!r}")
    y = np.concatenate([s.counts for s in series]).astype(np.float64)
    cols = [np.ones(y.shape[0])]
    names = ["const"]

    def column(name):
        parts = []
        for s in series:
            if name == "route_id":
                parts.append(np.full(len(s), s.route_id, dtype=object))
            elif name == "direction":
                parts.append(np.full(len(s), s.direction, dtype=object))
            else:
                table = dataset.covariates.get(s.key, {})
                if name not in table:
                    raise KeyError(f"covariate {name!r} missing for series {s.key}")
                parts.append(table[name])
        return np.concatenate(parts)

    for name in covariates:
        cols.append(column(name).astype(np.float64))
        names.append(name)
    for name in categorical:
        values = column(name)
        levels = sorted(set(values.tolist()), key=str)
        for lev in levels[1:]:
            cols.append((values == lev).astype(np.float64))
            names.append(f"{name}[{lev}]")
    return np.column_stack(cols), y, names
