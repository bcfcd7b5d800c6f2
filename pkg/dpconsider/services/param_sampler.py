# dpconsider/services/param_sampler.py
"""
Response-model parameter updates.

beta and each delta_k use a tailored Metropolis-Hastings step: Newton-Raphson
finds the conditional mode, the proposal is Gaussian at the mode with the
(scaled) inverse negative Hessian as covariance. The random effects b_i take
random-walk steps with covariance D, and D^{-1} is drawn from its conjugate
Wishart conditional.

The fit loop keeps the utility table V in sync; every function here returns the
updated V alongside the new parameters.
"""

import logging
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, cholesky
from scipy.special import expit
from scipy.stats import multivariate_normal

from dpconsider.errors import InvariantBreach
from dpconsider.models.dataset import PanelDataset
from dpconsider.models.hyper import Hyperparams
from dpconsider.models.state import TailoredProposal
from dpconsider.services.likelihood import occasion_logprobs, response_probs, subject_logliks
from dpconsider.utils.distributions import wishart_rvs

logger = logging.getLogger(__name__)

# objective(x) -> (log target, gradient, Hessian)
Objective = Callable[[np.ndarray], Tuple[float, np.ndarray, np.ndarray]]


def newton_mode(
    objective: Objective, x0: np.ndarray, max_iter: int = 50, tol: float = 1e-8
) -> Tuple[np.ndarray, np.ndarray, int, bool]:
    """Newton-Raphson ascent with step halving; returns (mode, Hessian at mode, iterations, converged)."""
    x = np.array(x0, dtype=float)
    f, g, H = objective(x)
    iterations = 0
    converged = bool(np.max(np.abs(g), initial=0.0) < tol)
    while not converged and iterations < max_iter:
        iterations += 1
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            break
        x_new = x - step
        f_new, g_new, H_new = objective(x_new)
        halvings = 0
        while not f_new >= f and halvings < 30:
            step = step / 2.0
            x_new = x - step
            f_new, g_new, H_new = objective(x_new)
            halvings += 1
        x, f, g, H = x_new, f_new, g_new, H_new
        converged = bool(np.max(np.abs(g), initial=0.0) < tol)
    return x, H, iterations, converged


def tailored_proposal(
    objective: Objective,
    current: np.ndarray,
    prior_cov: np.ndarray,
    scale: float,
    max_iter: int = 50,
    tol: float = 1e-8,
    label: str = "beta",
) -> TailoredProposal:
    """Gaussian at the conditional mode; falls back to a random walk with the prior covariance."""
    mode, H, iterations, converged = newton_mode(objective, current, max_iter, tol)
    try:
        cov = np.linalg.inv(-H)
        cholesky(cov, lower=True)
        if not converged:
            raise LinAlgError("Newton-Raphson did not converge")
    except (LinAlgError, np.linalg.LinAlgError) as e:
        logger.warning("%s: tailored proposal unavailable (%s); using random walk with prior covariance", label, e)
        return TailoredProposal(
            mode=np.array(current, dtype=float), cov=scale * prior_cov, scale=scale,
            iterations=iterations, converged=converged, fallback=True,
        )
    cov = 0.5 * (cov + cov.T)
    return TailoredProposal(mode=mode, cov=scale * cov, scale=scale, iterations=iterations, converged=True)


def tailored_mh_step(
    log_target: Callable[[np.ndarray], float],
    current: np.ndarray,
    proposal: TailoredProposal,
    rng: np.random.Generator,
) -> Tuple[np.ndarray, bool]:
    """Independence M-H at the mode (random walk when the proposal fell back)."""
    L = np.linalg.cholesky(proposal.cov)
    centre = current if proposal.fallback else proposal.mode
    candidate = centre + L @ rng.standard_normal(current.shape[0])
    log_r = log_target(candidate) - log_target(current)
    if not proposal.fallback:
        dist = multivariate_normal(mean=proposal.mode, cov=proposal.cov)
        log_r += dist.logpdf(current) - dist.logpdf(candidate)
    accepted = bool(np.log(rng.random()) < log_r)
    return (candidate if accepted else np.array(current, dtype=float)), accepted


def check_derivatives(objective: Objective, x: np.ndarray, eps: float = 1e-5) -> Tuple[float, float]:
    """Relative errors of the analytic gradient and Hessian against central differences."""
    x = np.asarray(x, dtype=float)
    _, g, H = objective(x)
    d = x.shape[0]
    g_num = np.zeros(d)
    H_num = np.zeros((d, d))
    for k in range(d):
        h = eps * max(1.0, abs(x[k]))
        e = np.zeros(d)
        e[k] = h
        f_plus, g_plus, _ = objective(x + e)
        f_minus, g_minus, _ = objective(x - e)
        g_num[k] = (f_plus - f_minus) / (2 * h)
        H_num[:, k] = (g_plus - g_minus) / (2 * h)
    g_err = np.linalg.norm(g_num - g) / max(np.linalg.norm(g), 1.0)
    H_err = np.linalg.norm(H_num - H) / max(np.linalg.norm(H), 1.0)
    return float(g_err), float(H_err)


# --- beta -----------------------------------------------------------------

def beta_objective(V_rest: np.ndarray, data: PanelDataset, C: np.ndarray, v_beta: float) -> Objective:
    """Log conditional posterior of beta (up to a constant), with gradient and Hessian."""
    X = data.X
    mask = data.mask
    y = data.y_safe
    Cb = C.astype(bool)
    x_chosen = np.take_along_axis(X, y[:, :, None, None], axis=2)[:, :, 0, :]
    d = data.d_x

    def objective(beta: np.ndarray):
        V = V_rest + X @ beta
        loglik = occasion_logprobs(V, Cb, y, mask).sum()
        P = response_probs(V, Cb[:, None, :]) * mask[:, :, None]
        xbar = np.einsum("itj,itjd->itd", P, X)
        grad = np.einsum("it,itd->d", mask, x_chosen - xbar) - beta / v_beta
        second = np.einsum("itj,itjd,itje->de", P, X, X) - np.einsum("itd,ite->de", xbar, xbar)
        hess = -second - np.eye(d) / v_beta
        logpost = loglik - 0.5 * beta @ beta / v_beta
        return float(logpost), grad, hess

    return objective


def sample_beta(
    beta: np.ndarray,
    V: np.ndarray,
    data: PanelDataset,
    C: np.ndarray,
    hyper: Hyperparams,
    rng: np.random.Generator,
    max_iter: int = 50,
    tol: float = 1e-8,
) -> Tuple[np.ndarray, np.ndarray, bool, Optional[TailoredProposal]]:
    """Returns (beta, V, accepted, proposal)."""
    if data.d_x == 0:
        return beta, V, False, None
    V_rest = V - data.X @ beta
    objective = beta_objective(V_rest, data, C, hyper.v_beta)
    proposal = tailored_proposal(
        objective, beta, hyper.v_beta * np.eye(data.d_x), hyper.proposal_scale, max_iter, tol, "beta"
    )
    new_beta, accepted = tailored_mh_step(lambda x: objective(x)[0], beta, proposal, rng)
    if accepted:
        V = V_rest + data.X @ new_beta
    return new_beta, V, accepted, proposal


# --- delta ----------------------------------------------------------------

def delta_objective(V: np.ndarray, delta_k: float, k: int, data: PanelDataset, C: np.ndarray, v_delta: float) -> Objective:
    """Scalar log conditional posterior of delta_k; other categories enter through a log-sum-exp."""
    Cb = C.astype(bool)
    mask = data.mask
    others = Cb.copy()
    others[:, k] = False
    masked = np.where(others[:, None, :], V, -np.inf)
    top = np.max(masked, axis=2)
    safe_top = np.where(np.isfinite(top), top, 0.0)
    with np.errstate(divide="ignore"):
        a = np.log(np.exp(masked - safe_top[:, :, None]).sum(axis=2)) + safe_top
    w = V[:, :, k] - delta_k
    active = mask & Cb[:, k][:, None]
    # a = -inf where k is the only considered category on that occasion
    alone = np.isneginf(a)
    a_safe = np.where(alone, 0.0, a)
    n_k = float(np.sum(mask & (data.y == k)))

    def objective(x: np.ndarray):
        d = float(x[0])
        z = w + d
        log_den = np.where(active, np.where(alone, z, np.logaddexp(a_safe, z)), 0.0)
        s = np.where(active, np.where(alone, 1.0, expit(z - a_safe)), 0.0)
        logpost = n_k * d - log_den.sum() - 0.5 * d * d / v_delta
        grad = n_k - s.sum() - d / v_delta
        hess = -(s * (1.0 - s)).sum() - 1.0 / v_delta
        return float(logpost), np.array([grad]), np.array([[hess]])

    return objective


def sample_delta(
    delta: np.ndarray,
    V: np.ndarray,
    data: PanelDataset,
    C: np.ndarray,
    hyper: Hyperparams,
    rng: np.random.Generator,
    max_iter: int = 50,
    tol: float = 1e-8,
) -> Tuple[np.ndarray, np.ndarray, int, int]:
    """
    Update delta_1..delta_{J-1} one at a time in random order; delta_J stays 0.

    Returns (delta, V, accepted count, updated count).
    """
    delta = np.array(delta, dtype=float)
    V = V.copy()
    free = np.arange(data.J - 1)
    accepted_total = 0
    for k in rng.permutation(free):
        objective = delta_objective(V, delta[k], int(k), data, C, hyper.v_delta)
        proposal = tailored_proposal(
            objective, delta[[k]], np.array([[hyper.v_delta]]), hyper.proposal_scale,
            max_iter, tol, f"delta[{k + 1}]",
        )
        new, accepted = tailored_mh_step(lambda x: objective(x)[0], delta[[k]], proposal, rng)
        if accepted:
            V[:, :, k] += new[0] - delta[k]
            delta[k] = new[0]
            accepted_total += 1
    return delta, V, accepted_total, int(free.size)


# --- random effects -------------------------------------------------------

def _mvn_quadratic(b: np.ndarray, D: np.ndarray) -> np.ndarray:
    factor = cho_factor(D, lower=True)
    return np.einsum("id,id->i", b, cho_solve(factor, b.T).T)


def sample_b(
    b: np.ndarray,
    D: np.ndarray,
    V: np.ndarray,
    data: PanelDataset,
    C: np.ndarray,
    rng: np.random.Generator,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Random-walk step b~_i = b_i + N(0, D) for every subject; returns (b, V, accepted mask)."""
    n, d_z = b.shape
    if d_z == 0 or n == 0:
        return b, V, np.zeros(n, dtype=bool)
    L = np.linalg.cholesky(D)
    step = rng.standard_normal((n, d_z)) @ L.T
    V_new = V + np.einsum("itjd,id->itj", data.Z, step)
    b_new = b + step
    log_r = (
        subject_logliks(V_new, C, data) - 0.5 * _mvn_quadratic(b_new, D)
        - subject_logliks(V, C, data) + 0.5 * _mvn_quadratic(b, D)
    )
    accepted = np.log(rng.random(n)) < log_r
    b_out = np.where(accepted[:, None], b_new, b)
    V_out = np.where(accepted[:, None, None], V_new, V)
    return b_out, V_out, accepted


def sample_D(b: np.ndarray, hyper: Hyperparams, rng: np.random.Generator) -> np.ndarray:
    """D^{-1} ~ Wishart(v + n, [R^{-1} + sum_i b_i b_i']^{-1}); returns D."""
    n, d_z = b.shape
    df = hyper.wishart_v + n
    if df < d_z:
        raise ValueError(f"Wishart degrees of freedom {df} below dimension {d_z}")
    R = hyper.wishart_scale(d_z)
    precision = np.linalg.inv(R) + b.T @ b
    try:
        cholesky(precision, lower=True)
        scale = np.linalg.inv(precision)
        scale = 0.5 * (scale + scale.T)
        cholesky(scale, lower=True)
    except LinAlgError as e:
        raise InvariantBreach(f"Wishart scale matrix is not positive definite: {e}") from e
    W = wishart_rvs(df, scale, rng)
    D = np.linalg.inv(W)
    return 0.5 * (D + D.T)
