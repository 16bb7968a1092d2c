"""Negative binomial (NB2) count regression with exposure offsets.

Mean model: mu_i = t_i * exp(b0 + b1 x_1i + ... + bp x_pi), variance
mu + alpha * mu^2. Fitting is a three-stage pipeline: Poisson Newton
iterations for starting coefficients, the auxiliary least-squares
dispersion estimate, then joint Newton ascent over (b, ln alpha).

For integer counts the Gamma-function ratio in the NB2 likelihood
telescopes into a finite sum:

    lnG(y + 1/a) - lnG(1/a) = sum_{k<y} ln(1/a + k)

which this module uses throughout. It is exact for every alpha >= 0 and,
unlike the difference of two lgamma calls, loses no precision as alpha
approaches the Poisson limit.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import gammaln

from .errors import (
    FeatureNameMismatch,
    LinearPredictorOverflow,
    NonConvergence,
    SeparationDetected,
)
from .ingest import FeatureTable

MAX_LINEAR_PREDICTOR = 700.0
SEPARATION_BOUND = 30.0


@dataclass
class FitOptions:
    tol: float = 1e-8
    max_iter: int = 100
    alpha_floor: float = 1e-8
    ridge: float = 1e-8


@dataclass
class Diagnostics:
    log_likelihood: float
    iterations: int
    converged: bool
    condition_warning: bool
    alpha_ols: float = 0.0  # two-step initializer kept for reference
    effectively_poisson: bool = False


@dataclass
class Nb2Model:
    feature_names: list[str]
    coefficients: np.ndarray  # length p+1, intercept first
    alpha: float
    diagnostics: Diagnostics
    event_type: str | None = None
    period_kind: str | None = None

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)


# --- mean and pmf ----------------------------------------------------------

def mean_mu(x, t: float, b) -> float:
    """mu = t * exp(b0 + b . x); raises rather than saturating on overflow."""
    b = np.asarray(b, dtype=float)
    x = np.asarray(x, dtype=float)
    if len(x) != len(b) - 1:
        raise ValueError(f"expected {len(b) - 1} covariates, got {len(x)}")
    if t <= 0:
        raise ValueError("exposure must be positive")
    eta = float(b[0] + b[1:] @ x) + float(np.log(t))
    if eta > MAX_LINEAR_PREDICTOR:
        raise LinearPredictorOverflow(f"linear predictor {eta:.1f} exceeds {MAX_LINEAR_PREDICTOR}")
    return float(np.exp(eta))


def _mu_vector(b, t, X) -> np.ndarray:
    eta = b[0] + X @ b[1:] + np.log(t)
    if np.any(eta > MAX_LINEAR_PREDICTOR):
        raise LinearPredictorOverflow(
            f"linear predictor up to {float(np.max(eta)):.1f} exceeds {MAX_LINEAR_PREDICTOR}"
        )
    return np.exp(eta)


def _gamma_ratio_table(max_y: int, alpha: float) -> np.ndarray:
    """table[y] = sum_{k<y} ln(1 + alpha*k), the lnG(y+1/a)-lnG(1/a)+y*ln(a) sum."""
    if max_y == 0:
        return np.zeros(1)
    k = np.arange(max_y, dtype=float)
    return np.concatenate([[0.0], np.cumsum(np.log1p(alpha * k))])


def nb2_logpmf(y, mu, alpha: float) -> np.ndarray:
    """Log of the NB2 pmf; alpha = 0 is the exact Poisson limit."""
    y = np.atleast_1d(np.asarray(y))
    if np.any(y < 0) or np.any(y != np.floor(y)):
        raise ValueError("counts must be non-negative integers")
    yi = y.astype(int)
    mu = np.broadcast_to(np.asarray(mu, dtype=float), y.shape)
    if np.any(mu <= 0):
        raise ValueError("mu must be positive")
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    yf = yi.astype(float)
    if alpha == 0.0:
        return -mu + yf * np.log(mu) - gammaln(yf + 1.0)
    table = _gamma_ratio_table(int(yi.max()), alpha)
    am = alpha * mu
    return (
        table[yi]
        - gammaln(yf + 1.0)
        - np.log1p(am) / alpha
        + yf * np.log(mu)
        - yf * np.log1p(am)
    )


def nb2_pmf(y, mu, alpha: float):
    """NB2 probability of observing count y given mean mu and dispersion alpha."""
    out = np.exp(nb2_logpmf(y, mu, alpha))
    return float(out[0]) if np.isscalar(y) or np.asarray(y).ndim == 0 else out


# --- log-likelihood, gradient, Hessian over (b, ln alpha) ------------------

def _loglik(b, alpha, y, t, X) -> float:
    try:
        mu = _mu_vector(b, t, X)
    except LinearPredictorOverflow:
        return -np.inf
    with np.errstate(over="ignore"):
        ll = float(np.sum(nb2_logpmf(y, mu, alpha)))
    return ll if np.isfinite(ll) else -np.inf


def loglik_gradient(b, alpha: float, y, t, X) -> np.ndarray:
    """Analytic gradient of the NB2 log-likelihood over (b, ln alpha).

    Returns length p+2: intercept, covariates, then the ln(alpha) slot.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive for the gradient")
    b = np.asarray(b, dtype=float)
    y = np.asarray(y, dtype=float)
    yi = y.astype(int)
    mu = _mu_vector(b, t, X)
    u = 1.0 + alpha * mu
    D = np.column_stack([np.ones(len(y)), np.asarray(X, dtype=float)])
    g_b = D.T @ ((y - mu) / u)
    # d ll / d ln(alpha), using sum_{k<y} (a*k)/(1+a*k) for the Gamma part
    k = np.arange(max(int(yi.max()), 1), dtype=float)
    ak = alpha * k
    tab1 = np.concatenate([[0.0], np.cumsum(ak / (1.0 + ak))])
    g_s = float(
        np.sum(tab1[yi] + np.log1p(alpha * mu) / alpha - mu / u - alpha * y * mu / u)
    )
    return np.concatenate([g_b, [g_s]])


def _loglik_hessian(b, alpha, y, t, X) -> np.ndarray:
    """Analytic Hessian over (b, ln alpha); shares structure with the gradient."""
    b = np.asarray(b, dtype=float)
    y = np.asarray(y, dtype=float)
    yi = y.astype(int)
    mu = _mu_vector(b, t, X)
    u = 1.0 + alpha * mu
    D = np.column_stack([np.ones(len(y)), np.asarray(X, dtype=float)])
    w_bb = mu * (1.0 + alpha * y) / u**2
    H_bb = -(D.T * w_bb) @ D
    H_bs = D.T @ (-alpha * mu * (y - mu) / u**2)
    k = np.arange(max(int(yi.max()), 1), dtype=float)
    ak = alpha * k
    tab2 = np.concatenate([[0.0], np.cumsum(ak / (1.0 + ak) ** 2)])
    h_ss = float(
        np.sum(
            tab2[yi]
            - np.log1p(alpha * mu) / alpha
            + mu * (1.0 + 2.0 * alpha * mu) / u**2
            - alpha * y * mu / u**2
        )
    )
    n = len(b) + 1
    H = np.empty((n, n))
    H[:-1, :-1] = H_bb
    H[:-1, -1] = H_bs
    H[-1, :-1] = H_bs
    H[-1, -1] = h_ss
    return H


# --- Poisson initializer ----------------------------------------------------

def _poisson_loglik(b, y, t, X) -> float:
    try:
        mu = _mu_vector(b, t, X)
    except LinearPredictorOverflow:
        return -np.inf
    ll = float(np.sum(-mu + y * np.log(mu) - gammaln(y + 1.0)))
    return ll if np.isfinite(ll) else -np.inf


def fit_poisson(y, t, X, options: FitOptions | None = None) -> tuple[np.ndarray, Diagnostics]:
    """Poisson regression with ln(t) offset by Newton ascent.

    Returns (coefficients, diagnostics). Near-singular normal equations
    get a ridge jitter and set the condition warning.
    """
    opts = options or FitOptions()
    y = np.asarray(y, dtype=float)
    t = np.broadcast_to(np.asarray(t, dtype=float), y.shape)
    X = np.asarray(X, dtype=float).reshape(len(y), -1)
    p = X.shape[1]
    if len(y) < p + 2:
        raise ValueError(f"need at least {p + 2} observations for p={p}")
    if y.sum() == 0:
        raise ValueError("all counts are zero; the log link has no finite fit")

    D = np.column_stack([np.ones(len(y)), X])
    condition_warning = bool(np.linalg.matrix_rank(D) < p + 1)
    b = np.zeros(p + 1)
    b[0] = np.log(y.sum() / t.sum())
    ll = _poisson_loglik(b, y, t, X)
    for iteration in range(1, opts.max_iter + 1):
        mu = _mu_vector(b, t, X)
        grad = D.T @ (y - mu)
        A = (D.T * mu) @ D
        try:
            if condition_warning:
                raise np.linalg.LinAlgError
            step = np.linalg.solve(A, grad)
        except np.linalg.LinAlgError:
            condition_warning = True
            step = np.linalg.solve(A + opts.ridge * np.eye(p + 1), grad)
        lam, ll_new = 1.0, -np.inf
        for _ in range(40):
            ll_new = _poisson_loglik(b + lam * step, y, t, X)
            if ll_new >= ll:
                break
            lam *= 0.5
        if ll_new < ll:
            break
        b = b + lam * step
        if np.any(np.abs(b) > SEPARATION_BOUND):
            raise SeparationDetected(f"|coefficient| exceeded {SEPARATION_BOUND}")
        improved, ll = ll_new - ll, ll_new
        if improved <= opts.tol * (abs(ll) + 1.0):
            return b, Diagnostics(ll, iteration, True, condition_warning)
    raise NonConvergence(opts.max_iter, "Poisson fit did not converge")


def estimate_alpha_ols(y, mu, alpha_floor: float = 1e-8) -> tuple[float, bool]:
    """Auxiliary no-intercept OLS dispersion estimate.

    Regresses z_i = ((y_i - mu_i)^2 - y_i) / mu_i on mu_i, giving
    alpha = sum(z*mu) / sum(mu^2), clamped below at ``alpha_floor``.
    Returns (alpha, effectively_poisson).
    """
    y = np.asarray(y, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if y.shape != mu.shape:
        raise ValueError("y and mu must have equal length")
    if np.any(mu <= 0):
        raise ValueError("fitted means must be positive")
    z = ((y - mu) ** 2 - y) / mu
    raw = float((z @ mu) / (mu @ mu))
    if raw <= alpha_floor:
        return alpha_floor, True
    return raw, False


# --- joint MLE ---------------------------------------------------------------

def fit_nb2(
    y,
    t,
    X,
    feature_names: list[str] | None = None,
    options: FitOptions | None = None,
    event_type: str | None = None,
    period_kind: str | None = None,
    trace: list | None = None,
) -> Nb2Model:
    """Fit the NB2 model by joint Newton ascent over (b, ln alpha).

    Accepted steps never decrease the log-likelihood (step-halving line
    search); a dispersion estimate at the floor marks the fit as
    effectively Poisson. Pass a list as ``trace`` to receive the
    log-likelihood after every accepted step.
    """
    opts = options or FitOptions()
    y = np.asarray(y, dtype=float)
    t = np.broadcast_to(np.asarray(t, dtype=float), y.shape).astype(float)
    X = np.asarray(X, dtype=float).reshape(len(y), -1)
    p = X.shape[1]
    if feature_names is not None and len(feature_names) != p:
        raise ValueError("feature_names length must match the design matrix")

    b, pois_diag = fit_poisson(y, t, X, opts)
    mu0 = _mu_vector(b, t, X)
    alpha_ols, poissonish = estimate_alpha_ols(y, mu0, opts.alpha_floor)
    condition_warning = pois_diag.condition_warning

    s_floor = np.log(opts.alpha_floor)
    theta = np.concatenate([b, [np.log(alpha_ols)]])
    ll = _loglik(theta[:-1], np.exp(theta[-1]), y, t, X)
    if trace is not None:
        trace.append(ll)
    iterations = 0
    converged = False
    for iterations in range(1, opts.max_iter + 1):
        alpha = float(np.exp(theta[-1]))
        grad = loglik_gradient(theta[:-1], alpha, y, t, X)
        H = _loglik_hessian(theta[:-1], alpha, y, t, X)
        at_floor = theta[-1] <= s_floor and grad[-1] < 0
        A = -H
        jitter = 0.0
        step = None
        while step is None:
            try:
                chol = np.linalg.cholesky(A + jitter * np.eye(len(A)))
                step = np.linalg.solve(chol.T, np.linalg.solve(chol, grad))
            except np.linalg.LinAlgError:
                jitter = max(opts.ridge, jitter * 10 if jitter else opts.ridge)
                if jitter > 1e8:
                    raise NonConvergence(iterations, "Hessian irreparably singular")
        if jitter > opts.ridge:
            condition_warning = True
        if at_floor:
            step[-1] = 0.0
        lam, ll_new, accepted = 1.0, -np.inf, None
        for _ in range(40):
            cand = theta + lam * step
            cand[-1] = max(cand[-1], s_floor)
            ll_new = _loglik(cand[:-1], np.exp(cand[-1]), y, t, X)
            if ll_new >= ll:
                accepted = cand
                break
            lam *= 0.5
        if accepted is None:
            # no ascent possible along the Newton direction
            free = grad if not at_floor else grad[:-1]
            if np.max(np.abs(free)) < 1e-6:
                converged = True
            break
        if np.any(np.abs(accepted[:-1]) > SEPARATION_BOUND):
            raise SeparationDetected(f"|coefficient| exceeded {SEPARATION_BOUND}")
        improved = ll_new - ll
        theta, ll = accepted, ll_new
        if trace is not None:
            trace.append(ll)
        if improved <= opts.tol * (abs(ll) + 1.0):
            converged = True
            break
    if not converged:
        raise NonConvergence(iterations, "NB2 fit did not converge")

    alpha = float(np.exp(theta[-1]))
    return Nb2Model(
        feature_names=list(feature_names) if feature_names else [],
        coefficients=theta[:-1].copy(),
        alpha=alpha,
        diagnostics=Diagnostics(
            log_likelihood=ll,
            iterations=iterations,
            converged=True,
            condition_warning=condition_warning,
            alpha_ols=alpha_ols,
            effectively_poisson=poissonish or alpha <= opts.alpha_floor * (1 + 1e-9),
        ),
        event_type=event_type,
        period_kind=period_kind,
    )


def fit_panel(panel, event_type: str, feature_subset: list[str] | None = None,
              options: FitOptions | None = None) -> Nb2Model:
    """Slice a joined panel to one event type and fit NB2 on it."""
    sliced = panel.slice(event_type)
    if not sliced.observations:
        raise ValueError(f"panel has no observations for event type {event_type!r}")
    names = list(feature_subset) if feature_subset is not None else list(panel.feature_names)
    missing = [n for n in names if n not in panel.feature_names]
    if missing:
        raise FeatureNameMismatch(f"features not in panel: {missing}")
    idx = [panel.feature_names.index(n) for n in names]
    y, t, X = sliced.arrays()
    return fit_nb2(
        y, t, X[:, idx] if len(idx) else np.empty((len(y), 0)),
        feature_names=names, options=options,
        event_type=event_type, period_kind=panel.period_kind,
    )


def predict(model: Nb2Model, features: FeatureTable, exposure: float = 1.0) -> dict[str, float]:
    """Expected counts per region for one period of the given exposure."""
    missing = [n for n in model.feature_names if n not in features.feature_names]
    if missing:
        raise FeatureNameMismatch(f"features absent from table: {missing}")
    table = features.subset(model.feature_names) if model.feature_names else features
    out = {}
    for i, rid in enumerate(table.region_ids):
        x = table.values[i][: len(model.feature_names)]
        out[rid] = mean_mu(x, exposure, model.coefficients)
    return out


def predict_panel(model: Nb2Model, panel) -> np.ndarray:
    """Per-observation expected counts for a panel slice."""
    if model.feature_names and list(model.feature_names) != list(panel.feature_names):
        if not set(model.feature_names) <= set(panel.feature_names):
            raise FeatureNameMismatch(
                f"model features {model.feature_names} not all in panel {panel.feature_names}"
            )
        idx = [panel.feature_names.index(n) for n in model.feature_names]
    else:
        idx = list(range(len(model.feature_names)))
    y, t, X = panel.arrays()
    Xs = X[:, idx] if idx else np.empty((len(y), 0))
    return _mu_vector(model.coefficients, t, Xs)


# --- persistence --------------------------------------------------------------

def model_to_json(model: Nb2Model, metadata: dict | None = None) -> str:
    doc = {
        "schema_version": 1,
        "feature_names": list(model.feature_names),
        "coefficients": [float(c) for c in model.coefficients],
        "alpha": float(model.alpha),
        "diagnostics": asdict(model.diagnostics),
        "event_type": model.event_type,
        "period_kind": model.period_kind,
    }
    if metadata:
        doc["metadata"] = metadata
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def model_from_json(text: str) -> Nb2Model:
    doc = json.loads(text)
    if doc.get("schema_version") != 1:
        raise ValueError(f"unsupported model schema {doc.get('schema_version')!r}")
    return Nb2Model(
        feature_names=list(doc["feature_names"]),
        coefficients=np.array(doc["coefficients"], dtype=float),
        alpha=float(doc["alpha"]),
        diagnostics=Diagnostics(**doc["diagnostics"]),
        event_type=doc.get("event_type"),
        period_kind=doc.get("period_kind"),
    )
