"""Elementary symmetric functions of Rasch item easiness parameters.

All values are kept on the log scale.  With easiness ``eps_j = exp(-beta_j)``
the table stores ``log_gamma[r] = log gamma_r(eps)`` and, optionally,
``log_dgamma[j, r] = log d gamma_r / d eps_j = log gamma_{r-1}(eps without j)``.
Raw-scale values are ``exp`` of these and are only materialised on request.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

__all__ = ["EsfTable", "esf", "log_esf", "log_esf_leave_one_out", "log_esf_leave_two_out"]


def _check_beta(beta) -> np.ndarray:
    beta = np.asarray(beta, dtype=float)
    if beta.ndim != 1 or beta.size < 1:
        raise ValueError("beta must be a non-empty vector")
    if not np.all(np.isfinite(beta)):
        raise ValueError("beta contains non-finite values")
    return beta


@njit(cache=True)
def _esf_rows(log_eps):
    """Row-wise log ESFs of a ``(B, m)`` array; ``-inf`` entries are absent items."""
    nb, m = log_eps.shape
    out = np.empty((nb, m + 1))
    g = np.empty(m + 1)
    for b in range(nb):
        shift = -np.inf
        n_present = 0
        for j in range(m):
            if log_eps[b, j] > -np.inf:
                n_present += 1
                if log_eps[b, j] > shift:
                    shift = log_eps[b, j]
        if n_present == 0:
            shift = 0.0
        g[:] = 0.0
        g[0] = 1.0
        top = 0
        for j in range(m):
            le = log_eps[b, j]
            if le == -np.inf:
                continue
            e = np.exp(le - shift)
            top += 1
            for r in range(top, 0, -1):
                g[r] += e * g[r - 1]
        ok = True
        for r in range(top + 1):
            if g[r] < 1e-280:
                ok = False
        if ok:
            for r in range(m + 1):
                out[b, r] = np.log(g[r]) + r * shift if r <= top else -np.inf
        else:
            # log-space recurrence for rows whose scaled values underflow
            for r in range(m + 1):
                out[b, r] = -np.inf
            out[b, 0] = 0.0
            top = 0
            for j in range(m):
                le = log_eps[b, j]
                if le == -np.inf:
                    continue
                top += 1
                for r in range(top, 0, -1):
                    x = out[b, r]
                    y = le + out[b, r - 1]
                    if x == -np.inf:
                        out[b, r] = y
                    elif y == -np.inf:
                        pass
                    elif x > y:
                        out[b, r] = x + np.log1p(np.exp(y - x))
                    else:
                        out[b, r] = y + np.log1p(np.exp(x - y))
    return out


def log_esf(log_eps: np.ndarray) -> np.ndarray:
    """Summation recurrence, returned on the log scale.

    ``log_eps`` may carry leading batch dimensions; the last axis indexes
    items and ``-inf`` marks an absent item.  Returns ``(..., m + 1)``.

    Easiness values are divided by their maximum ``c`` (per batch row) so the
    recurrence cannot overflow; ``log gamma_r = log gamma~_r + r log c``.
    Rows where a reachable ``gamma~_r`` underflows are recomputed with a
    log-sum-exp recurrence.
    """
    log_eps = np.asarray(log_eps, dtype=float)
    m = log_eps.shape[-1]
    flat = np.ascontiguousarray(log_eps.reshape(-1, m))
    return _esf_rows(flat).reshape(log_eps.shape[:-1] + (m + 1,))


def log_esf_leave_one_out(log_eps: np.ndarray) -> np.ndarray:
    """``out[j, r] = log gamma_r`` of all items except ``j``, shape ``(m, m)``."""
    log_eps = np.asarray(log_eps, dtype=float)
    m = log_eps.size
    masked = np.broadcast_to(log_eps, (m, m)).copy()
    masked[np.arange(m), np.arange(m)] = -np.inf
    return log_esf(masked)[:, :m]


def log_esf_leave_two_out(log_eps: np.ndarray) -> np.ndarray:
    """``out[j, k, r] = log gamma_r`` without items ``j`` and ``k``.

    Shape ``(m, m, m - 1)``.  Diagonal entries equal the leave-one-out values
    (truncated) and are not meaningful for Hessian assembly.
    """
    log_eps = np.asarray(log_eps, dtype=float)
    m = log_eps.size
    masked = np.broadcast_to(log_eps, (m, m, m)).copy()
    idx = np.arange(m)
    masked[idx, :, idx] = -np.inf
    masked[:, idx, idx] = -np.inf
    return log_esf(masked)[:, :, : m - 1]


@dataclass(frozen=True)
class EsfTable:
    """Log-scale ESFs of ``eps = exp(-beta)`` and their first derivatives."""

    beta: np.ndarray
    log_gamma: np.ndarray
    log_dgamma: Optional[np.ndarray] = None

    @property
    def m(self) -> int:
        return self.beta.size

    @property
    def gamma(self) -> np.ndarray:
        return np.exp(self.log_gamma)

    @property
    def dgamma(self) -> np.ndarray:
        """Raw-scale ``d gamma_r / d eps_j`` (``m x (m + 1)``); may overflow for extreme beta."""
        if self.log_dgamma is None:
            raise ValueError("table was computed without derivatives")
        return np.exp(self.log_dgamma)

    def conditional_probs(self) -> np.ndarray:
        """``P(y_j = 1 | r)`` as an ``(m + 1) x m`` array: ``eps_j gamma_{r-1}^(j) / gamma_r``."""
        if self.log_dgamma is None:
            raise ValueError("table was computed without derivatives")
        return np.exp(-self.beta[None, :] + self.log_dgamma.T - self.log_gamma[:, None])


def esf(beta, with_derivatives: bool = False) -> EsfTable:
    """Compute the ESF table for item difficulties ``beta``."""
    beta = _check_beta(beta)
    log_eps = -beta
    log_gamma = log_esf(log_eps)
    log_dgamma = None
    if with_derivatives:
        m = beta.size
        loo = log_esf_leave_one_out(log_eps)
        log_dgamma = np.full((m, m + 1), -np.inf)
        log_dgamma[:, 1:] = loo
    return EsfTable(beta=beta, log_gamma=log_gamma, log_dgamma=log_dgamma)
