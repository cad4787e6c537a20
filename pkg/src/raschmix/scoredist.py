"""Raw-score distributions ``g(r | delta)`` completing the mixture likelihood.

Two parametrizations over the informative scores ``1..m-1``:

* ``saturated``: multinomial logit with one free parameter per category
  except the first (the reference, fixed at 0), ``m - 2`` parameters.
* ``mean-variance``: log-linear in ``(r/m, 4 r (m - r) / m^2)``, 2 parameters.

When extreme scorers are kept (``include_extremes=True``) the support is
``0..m`` instead and the saturated model has ``m`` parameters.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

__all__ = ["ScoreModel", "score_prob", "fit_scoredist", "KINDS", "n_score_params", "mv_basis"]

KINDS = ("saturated", "mean-variance")
FLOOR = 1e-10


def n_score_params(kind: str, m: int, include_extremes: bool = False) -> int:
    if kind == "saturated":
        return m if include_extremes else m - 2
    if kind == "mean-variance":
        return 2
    raise ValueError(f"unknown score model kind {kind!r}")


def support(m: int, include_extremes: bool = False) -> np.ndarray:
    return np.arange(0, m + 1) if include_extremes else np.arange(1, m)


def mv_basis(m: int, include_extremes: bool = False) -> np.ndarray:
    r = support(m, include_extremes).astype(float)
    return np.column_stack([r / m, 4.0 * r * (m - r) / m**2])


@dataclass(frozen=True)
class ScoreModel:
    kind: str
    m: int
    delta: np.ndarray
    restricted: bool = False
    include_extremes: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown score model kind {self.kind!r}")
        d = np.asarray(self.delta, dtype=float)
        k = n_score_params(self.kind, self.m, self.include_extremes)
        if d.shape != (k,):
            raise ValueError(f"{self.kind} score model needs {k} parameters, got {d.size}")
        object.__setattr__(self, "delta", d)

    @property
    def scores(self) -> np.ndarray:
        return support(self.m, self.include_extremes)

    @property
    def lo(self) -> int:
        return 0 if self.include_extremes else 1

    def log_probs(self) -> np.ndarray:
        """Log-probabilities over the support, indexed from ``self.lo``."""
        if self.kind == "saturated":
            eta = np.concatenate([[0.0], self.delta])
        else:
            eta = mv_basis(self.m, self.include_extremes) @ self.delta
        return eta - logsumexp(eta)

    def log_prob(self, r) -> np.ndarray:
        r = np.asarray(r)
        lo, hi = self.lo, self.scores[-1]
        if np.any((r < lo) | (r > hi)):
            raise ValueError(f"score outside {lo}..{hi}")
        return self.log_probs()[r - lo]

    def loglik(self, scores, weights=None) -> float:
        lp = self.log_prob(scores)
        w = np.ones(lp.shape) if weights is None else np.asarray(weights, dtype=float)
        return float(w @ lp)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "restricted": self.restricted,
            "include_extremes": self.include_extremes,
            "delta": self.delta.tolist(),
        }


def score_prob(model: ScoreModel, r: int) -> float:
    return float(np.exp(model.log_prob(r)))


def _weighted_counts(scores, weights, m, include_extremes):
    scores = np.asarray(scores, dtype=int)
    if scores.size == 0:
        raise ValueError("no scores to fit")
    lo = 0 if include_extremes else 1
    hi = m if include_extremes else m - 1
    if np.any((scores < lo) | (scores > hi)):
        raise ValueError(f"score outside {lo}..{hi}")
    w = np.ones(scores.size) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != scores.shape:
        raise ValueError("weights and scores differ in length")
    counts = np.bincount(scores - lo, weights=w, minlength=hi - lo + 1)
    if counts.sum() <= 0:
        raise ValueError("total weight must be positive")
    return counts


def mv_fit_counts(counts, m, include_extremes=False, start=None, tol=1e-10, max_iter=100):
    """Newton for the mean-variance model from weighted category counts."""
    x = mv_basis(m, include_extremes)
    total = counts.sum()
    target = counts @ x
    delta = np.zeros(2) if start is None else np.array(start, dtype=float)

    def ll(d):
        eta = x @ d
        return float(counts @ eta - total * logsumexp(eta))

    cur = ll(delta)
    for _ in range(max_iter):
        eta = x @ delta
        p = np.exp(eta - logsumexp(eta))
        mean = p @ x
        grad = target - total * mean
        if np.max(np.abs(grad)) / total < tol:
            break
        cov = (x - mean).T @ ((x - mean) * p[:, None])
        try:
            step = np.linalg.solve(total * cov, grad)
        except np.linalg.LinAlgError:
            step = grad / total
        t = 1.0
        for _ in range(50):
            cand = delta + t * step
            new = ll(cand)
            if new >= cur - 1e-12 * abs(cur):
                break
            t *= 0.5
        else:
            break
        delta, cur = cand, new
    return delta


def saturated_from_counts(counts) -> np.ndarray:
    p = counts / counts.sum()
    p = np.maximum(p, FLOOR)
    p = p / p.sum()
    return np.log(p[1:]) - np.log(p[0])


def fit_scoredist(
    scores,
    weights=None,
    kind: str = "mean-variance",
    m: int = None,
    restricted: bool = False,
    include_extremes: bool = False,
    start=None,
) -> ScoreModel:
    """Weighted maximum-likelihood score model.

    The saturated fit is closed form: normalized weighted frequencies, with
    empty categories floored at 1e-10 and renormalized.
    """
    if m is None:
        raise ValueError("number of items m is required")
    if kind not in KINDS:
        raise ValueError(f"unknown score model kind {kind!r}")
    counts = _weighted_counts(scores, weights, m, include_extremes)
    if kind == "saturated":
        delta = saturated_from_counts(counts)
    else:
        delta = mv_fit_counts(counts, m, include_extremes, start=start)
    return ScoreModel(kind, m, delta, restricted, include_extremes)
