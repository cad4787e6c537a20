"""Weighted conditional maximum likelihood for the dichotomous Rasch model.

The conditional likelihood of a response vector given its raw score ``r``
is ``exp(-sum_j y_j beta_j) / gamma_r(exp(-beta))``; person abilities drop
out.  With weights ``w_i`` everything depends on the data only through the
weighted item totals ``S_j = sum_i w_i y_ij`` and the weighted score counts
``W_r = sum_{i: r_i = r} w_i``, which is what the optimizer works with.
"""

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import DataError, ResponseMatrix
from .esf import log_esf, log_esf_leave_one_out

__all__ = [
    "CmlFit",
    "DegenerateItemError",
    "DegenerateItemWarning",
    "conditional_loglik",
    "conditional_gradient",
    "fit_cml",
    "sufficient_stats",
    "person_log_h",
]

CLAMP = 30.0
DEGENERATE_EPS = 1e-10


class DegenerateItemError(DataError):
    """An item was endorsed by everyone or by no one (in weighted terms)."""


class DegenerateItemWarning(UserWarning):
    pass


@dataclass(frozen=True)
class CmlFit:
    beta: np.ndarray
    cond_loglik: float
    gradient_norm: float
    iterations: int
    converged: bool
    clamped: tuple = ()


def _weights(data: ResponseMatrix, weights) -> np.ndarray:
    if weights is None:
        return data.person_weights()
    w = np.asarray(weights, dtype=float)
    if w.shape != (data.n,):
        raise ValueError(f"weights has length {w.size}, expected {data.n}")
    if np.any(w < 0):
        raise ValueError("weights must be non-negative")
    return w


def sufficient_stats(data: ResponseMatrix, weights=None):
    """Weighted item totals ``S`` (length m) and score counts ``W`` (length m + 1)."""
    w = _weights(data, weights)
    item_totals = w @ data.entries
    score_counts = np.bincount(data.scores, weights=w, minlength=data.m + 1)
    return item_totals, score_counts


def _loglik_stats(beta, item_totals, score_counts) -> float:
    lg = log_esf(-beta)
    used = score_counts > 0
    return float(-item_totals @ beta - score_counts[used] @ lg[used])


def _grad_stats(beta, item_totals, score_counts, lg=None):
    """Gradient of the weighted conditional log-likelihood w.r.t. beta."""
    if lg is None:
        lg = log_esf(-beta)
    loo = log_esf_leave_one_out(-beta)  # (m, m): item j out, score 0..m-1
    # P(y_j = 1 | r) for r = 1..m
    probs = np.exp(-beta[None, :] + loo.T - lg[1:, None])
    expected = score_counts[1:] @ probs
    return expected - item_totals, probs


def _derivatives(beta, item_totals, score_counts):
    """Log-likelihood, gradient and Hessian from one batched ESF recurrence.

    Row 0 of the batch is the full ESF, rows ``1..m`` leave out one item and
    the remaining ``m * m`` rows leave out the pair ``(j, k)``.
    """
    m = beta.size
    log_eps = -beta
    idx = np.arange(m)
    masked = np.broadcast_to(log_eps, (1 + m + m * m, m)).copy()
    masked[1 + idx, idx] = -np.inf
    pairs = masked[1 + m :].reshape(m, m, m)
    pairs[idx, :, idx] = -np.inf
    pairs[:, idx, idx] = -np.inf
    table = log_esf(masked)
    lg = table[0]
    loo = table[1 : 1 + m, :m]
    l2 = table[1 + m :].reshape(m, m, m + 1)

    used = score_counts > 0
    ll = float(-item_totals @ beta - score_counts[used] @ lg[used])
    probs = np.exp(-beta[None, :] + loo.T - lg[1:, None])  # rows r = 1..m
    grad = score_counts[1:] @ probs - item_totals

    w = score_counts[1:m]  # scores 1..m-1 carry information
    pr = probs[: m - 1]
    # P(y_j = 1, y_k = 1 | r) = eps_j eps_k gamma_{r-2}^{(jk)} / gamma_r, zero for r = 1
    pair = np.zeros((m - 1, m, m))
    if m >= 3:
        rr = np.arange(2, m)
        pair[1:] = np.exp(
            (log_eps[:, None] + log_eps[None, :])[None]
            + np.moveaxis(l2[:, :, rr - 2], 2, 0)
            - lg[rr][:, None, None]
        )
    cov = pair - pr[:, :, None] * pr[:, None, :]
    cov[:, idx, idx] = pr * (1.0 - pr)
    hess = -np.einsum("r,rjk->jk", w, cov)
    return ll, grad, hess


def conditional_loglik(beta, data: ResponseMatrix, weights=None) -> float:
    """Weighted conditional log-likelihood ``sum_i w_i log h(y_i | r_i, beta)``."""
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (data.m,):
        raise ValueError(f"beta has length {beta.size}, expected {data.m}")
    item_totals, score_counts = sufficient_stats(data, weights)
    return _loglik_stats(beta, item_totals, score_counts)


def conditional_gradient(beta, data: ResponseMatrix, weights=None) -> np.ndarray:
    beta = np.asarray(beta, dtype=float)
    item_totals, score_counts = sufficient_stats(data, weights)
    return _grad_stats(beta, item_totals, score_counts)[0]


def person_log_h(beta, entries: np.ndarray, scores: np.ndarray) -> np.ndarray:
    """Per-person ``log h(y_i | r_i, beta)``."""
    lg = log_esf(-np.asarray(beta, dtype=float))
    return -(entries @ beta) - lg[scores]


def fit_cml_stats(
    item_totals,
    score_counts,
    tol: float = 1e-8,
    max_iter: int = 200,
    degenerate: str = "raise",
    start: Optional[np.ndarray] = None,
    item_names=None,
) -> CmlFit:
    """Damped Newton on sufficient statistics; see :func:`fit_cml`."""
    item_totals = np.asarray(item_totals, dtype=float)
    score_counts = np.asarray(score_counts, dtype=float)
    m = item_totals.size
    total = score_counts.sum()
    if total <= 0:
        raise DataError("total weight is zero")
    means = item_totals / total
    low = means <= DEGENERATE_EPS
    high = means >= 1.0 - DEGENERATE_EPS
    clamped = np.flatnonzero(low | high)
    if clamped.size:
        names = [item_names[j] if item_names else f"item {j}" for j in clamped]
        if degenerate == "raise":
            raise DegenerateItemError(f"degenerate item(s) with no response variation: {', '.join(map(str, names))}")
        warnings.warn(f"clamping degenerate item(s) {', '.join(map(str, names))}", DegenerateItemWarning, stacklevel=3)

    beta = np.zeros(m) if start is None else np.array(start, dtype=float)
    beta[low] = CLAMP
    beta[high] = -CLAMP
    free = np.flatnonzero(~(low | high))
    if free.size == 0:
        raise DegenerateItemError("all items are degenerate")
    ref = free[0]
    free = free[1:]
    beta = beta - beta[ref]
    beta[low] = CLAMP
    beta[high] = -CLAMP

    ll = _loglik_stats(beta, item_totals, score_counts)
    converged = False
    gnorm = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        ll, grad, hess = _derivatives(beta, item_totals, score_counts)
        g = grad[free]
        gnorm = float(np.max(np.abs(g)) / total) if free.size else 0.0
        if gnorm < tol:
            converged = True
            it -= 1
            break
        hess = hess[np.ix_(free, free)]
        step = None
        try:
            eig = np.linalg.eigvalsh(-hess)
            if eig[0] > 0 and eig[-1] / eig[0] < 1e12:
                step = np.linalg.solve(hess, -g)
            elif eig[-1] > 0:
                # ridge the flat directions up to condition number 1e12
                ridge = eig[-1] * 1e-12 - min(eig[0], 0.0)
                step = np.linalg.solve(-hess + ridge * np.eye(free.size), g)
        except np.linalg.LinAlgError:
            step = None
        if step is None or not np.all(np.isfinite(step)) or step @ g <= 0:
            step = g / total
        # cap very long steps; the log-likelihood is concave so halving recovers anyway
        big = np.max(np.abs(step))
        if big > 5.0:
            step *= 5.0 / big
        t = 1.0
        for _ in range(60):
            cand = beta.copy()
            cand[free] += t * step
            ll_new = _loglik_stats(cand, item_totals, score_counts)
            if ll_new >= ll - 1e-12 * abs(ll):
                break
            t *= 0.5
        else:
            break
        beta, ll = cand, ll_new
    else:
        lg = log_esf(-beta)
        grad, _ = _grad_stats(beta, item_totals, score_counts, lg)
        gnorm = float(np.max(np.abs(grad[free])) / total) if free.size else 0.0
        converged = gnorm < tol

    beta = beta - beta.mean()
    return CmlFit(beta, float(ll), gnorm, it, converged, tuple(int(j) for j in clamped))


def fit_cml(
    data: ResponseMatrix,
    weights=None,
    tol: float = 1e-8,
    max_iter: int = 200,
    degenerate: str = "raise",
    start=None,
) -> CmlFit:
    """Weighted CML estimate of item difficulties, reported with sum-zero centering.

    The first non-degenerate item is held at 0 during optimization.  Newton
    steps use the analytic Hessian; steps are halved until the conditional
    log-likelihood does not decrease, and an ill-conditioned Hessian falls
    back to a gradient step.  ``degenerate="clamp"`` pins items with no
    weighted response variation to +/-30 logits instead of raising.
    Non-convergence is reported through ``converged=False``.
    """
    item_totals, score_counts = sufficient_stats(data, weights)
    return fit_cml_stats(item_totals, score_counts, tol, max_iter, degenerate, start, data.item_names)
