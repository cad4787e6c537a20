"""EM estimation of finite Rasch mixtures with CML item parameters.

Each latent class ``k`` has a mixing weight ``pi_k``, item difficulties
``beta_k`` and a raw-score distribution ``g_k``.  The marginal likelihood of
a person is ``sum_k pi_k h(y | r, beta_k) g_k(r)``; the M-step splits into a
weighted CML fit per class and a weighted score-model fit per class (or one
shared fit when the score model is restricted).
"""

import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from .cml import DegenerateItemError, DegenerateItemWarning, fit_cml_stats, person_log_h
from .data import DataError, ResponseMatrix
from .scoredist import ScoreModel, fit_scoredist, n_score_params

__all__ = [
    "MixtureSpec",
    "MixtureFit",
    "FitError",
    "SelectionRow",
    "Selection",
    "df_count",
    "model_label",
    "mixture_loglik",
    "posterior",
    "em_fit",
    "select_k",
    "select_score_model",
    "SCORE_CANDIDATES",
]

log = logging.getLogger(__name__)

SCORE_CANDIDATES = (
    ("saturated", False),
    ("saturated", True),
    ("mean-variance", False),
    ("mean-variance", True),
)


class FitError(RuntimeError):
    """No usable fit could be produced."""


@dataclass(frozen=True)
class MixtureSpec:
    K: int = 1
    score_kind: str = "mean-variance"
    restricted: bool = True
    n_starts: int = 5
    max_em_iter: int = 500
    em_tol: float = 1e-8
    seed: int = 0
    include_extremes: bool = False
    cml_tol: float = 1e-8
    cml_max_iter: int = 200

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.n_starts < 1:
            raise ValueError("n_starts must be >= 1")
        if not self.em_tol > 0:
            raise ValueError("em_tol must be positive")
        n_score_params(self.score_kind, 3)

    @property
    def label(self) -> str:
        return model_label(self.score_kind, self.restricted)

    def to_dict(self) -> dict:
        return {
            "K": self.K,
            "score_kind": self.score_kind,
            "restricted": self.restricted,
            "n_starts": self.n_starts,
            "max_em_iter": self.max_em_iter,
            "em_tol": self.em_tol,
            "seed": self.seed,
            "include_extremes": self.include_extremes,
        }


def model_label(kind: str, restricted: bool) -> str:
    return f"restricted ({kind})" if restricted else kind


@dataclass(frozen=True)
class MixtureFit:
    spec: MixtureSpec
    pi: np.ndarray
    beta: np.ndarray  # K x m
    score_models: Tuple[ScoreModel, ...]  # one per class; the same object repeated when restricted
    posterior: np.ndarray  # n x K
    loglik: float
    df: int
    n_effective: int
    bic: float
    em_iterations: int
    converged: bool
    best_start_index: int
    loglik_trace: np.ndarray = field(repr=False, default=None)
    start_logliks: Tuple[float, ...] = ()
    person_ids: Optional[np.ndarray] = field(repr=False, default=None)

    @property
    def K(self) -> int:
        return self.pi.size

    def classes(self) -> np.ndarray:
        """Modal class per person."""
        return np.argmax(self.posterior, axis=1)

    def to_dict(self, include_posterior: bool = False) -> dict:
        out = {
            "spec": self.spec.to_dict(),
            "model": self.spec.label,
            "K": self.K,
            "pi": self.pi.tolist(),
            "beta": self.beta.tolist(),
            "delta": [s.delta.tolist() for s in self.score_models[:1]]
            if self.spec.restricted
            else [s.delta.tolist() for s in self.score_models],
            "loglik": self.loglik,
            "df": self.df,
            "n_effective": self.n_effective,
            "bic": self.bic,
            "convergence": {
                "converged": self.converged,
                "em_iterations": self.em_iterations,
                "best_start_index": self.best_start_index,
                "start_logliks": list(self.start_logliks),
            },
            "seed": self.spec.seed,
        }
        if include_posterior:
            ids = self.person_ids if self.person_ids is not None else np.arange(self.posterior.shape[0])
            out["posterior"] = [
                {"id": _jsonable(i), "p": row.tolist()} for i, row in zip(ids, self.posterior)
            ]
        return out


def _jsonable(x):
    return x.item() if hasattr(x, "item") else x


def df_count(K: int, m: int, score_kind: str, restricted: bool, include_extremes: bool = False) -> int:
    """Free parameters: mixing weights, per-class item parameters, score parameters."""
    n_score = n_score_params(score_kind, m, include_extremes)
    return (K - 1) + K * (m - 1) + n_score * (1 if restricted else K)


def _log_components(pi, beta, score_models, entries, scores, with_g=True):
    comp = np.empty((entries.shape[0], pi.size))
    for k in range(pi.size):
        comp[:, k] = person_log_h(beta[k], entries, scores)
        if with_g:
            comp[:, k] += score_models[k].log_prob(scores)
    with np.errstate(divide="ignore"):
        comp += np.log(pi)[None, :]
    return comp


def posterior(pi, beta, score_models, data: ResponseMatrix, with_g: bool = True) -> np.ndarray:
    comp = _log_components(np.asarray(pi, float), np.asarray(beta, float), score_models, data.entries, data.scores, with_g)
    return np.exp(comp - logsumexp(comp, axis=1, keepdims=True))


def mixture_loglik(params, data: ResponseMatrix) -> float:
    """Log of the mixture likelihood, by per-person log-sum-exp over classes.

    ``params`` is a :class:`MixtureFit` or a ``(pi, beta, score_models)`` tuple.
    """
    if isinstance(params, MixtureFit):
        pi, beta, score_models = params.pi, params.beta, params.score_models
    else:
        pi, beta, score_models = params
    pi = np.asarray(pi, dtype=float)
    beta = np.atleast_2d(np.asarray(beta, dtype=float))
    if beta.shape != (pi.size, data.m) or len(score_models) != pi.size:
        raise ValueError(
            f"dimension mismatch: pi has {pi.size} classes, beta {beta.shape}, "
            f"{len(score_models)} score models, data has {data.m} items"
        )
    if any(s.m != data.m for s in score_models):
        raise ValueError("score model item count does not match data")
    comp = _log_components(pi, beta, score_models, data.entries, data.scores)
    return float(data.person_weights() @ logsumexp(comp, axis=1))


class _Degenerate(Exception):
    pass


def _run_start(data: ResponseMatrix, spec: MixtureSpec, post0: np.ndarray, shared: Optional[ScoreModel]):
    Y = data.entries.astype(float)
    r = data.scores
    w = data.person_weights()
    n, m = Y.shape
    K = spec.K
    n_min = 1.0 / (10.0 * n)
    post = post0
    betas = [None] * K
    deltas = [None] * K
    trace = []
    prev = -np.inf
    converged = False
    it = 0
    for it in range(1, spec.max_em_iter + 1):
        # M-step
        wk = post * w[:, None]
        pi = wk.sum(axis=0) / w.sum()
        if np.any(pi < n_min):
            raise _Degenerate(f"class weight below 1/(10n) at iteration {it}")
        new_betas = []
        score_models = []
        for k in range(K):
            item_totals = wk[:, k] @ Y
            score_counts = np.bincount(r, weights=wk[:, k], minlength=m + 1)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", DegenerateItemWarning)
                fit = fit_cml_stats(
                    item_totals, score_counts, spec.cml_tol, spec.cml_max_iter,
                    degenerate="clamp", start=betas[k],
                )
            new_betas.append(fit.beta)
            if shared is not None:
                score_models.append(shared)
            else:
                sm = fit_scoredist(
                    r, wk[:, k], spec.score_kind, m, False, spec.include_extremes, start=deltas[k]
                )
                deltas[k] = sm.delta
                score_models.append(sm)
        betas = new_betas
        beta = np.vstack(betas)
        # E-step
        comp = _log_components(pi, beta, score_models, Y, r)
        ll_i = logsumexp(comp, axis=1)
        post = np.exp(comp - ll_i[:, None])
        ll = float(w @ ll_i)
        trace.append(ll)
        if abs(ll - prev) < spec.em_tol * abs(ll):
            converged = True
            break
        prev = ll
    return pi, beta, tuple(score_models), post, ll, it, converged, np.array(trace)


def _canonical_order(pi, beta):
    return sorted(range(pi.size), key=lambda k: (round(float(pi[k]), 12), float(beta[k, 0])))


def em_fit(data: ResponseMatrix, spec: MixtureSpec, n_effective: Optional[int] = None) -> MixtureFit:
    """Best-of-``n_starts`` EM fit.

    Every start draws the posterior of each person from a symmetric
    Dirichlet(1) and begins with an M-step.  Starts whose smallest class
    weight drops below ``1/(10 n)`` are discarded.  Classes are reported in
    ascending order of ``pi`` (ties broken by the first item difficulty).
    """
    n, m = data.n, data.m
    K = spec.K
    if not spec.include_extremes and np.any((data.scores == 0) | (data.scores == m)):
        raise DataError("data contain extreme scores; filter them or set include_extremes")
    if K > 1:
        n_patterns = np.unique(data.entries, axis=0).shape[0]
        if K > n_patterns:
            raise DataError(f"K={K} exceeds the number of distinct response patterns ({n_patterns})")
    w = data.person_weights()
    if n_effective is None:
        n_effective = int(round(w.sum()))
    shared = None
    if spec.restricted or K == 1:
        shared = fit_scoredist(data.scores, w, spec.score_kind, m, spec.restricted, spec.include_extremes)

    seeds = np.random.SeedSequence(spec.seed).spawn(spec.n_starts)
    best = None
    start_ll = []
    failures = []
    for s, ss in enumerate(seeds):
        rng = np.random.default_rng(ss)
        post0 = rng.dirichlet(np.ones(K), size=n) if K > 1 else np.ones((n, 1))
        try:
            res = _run_start(data, spec, post0, shared if spec.restricted or K == 1 else None)
        except (_Degenerate, DegenerateItemError) as exc:
            failures.append(f"start {s}: {exc}")
            start_ll.append(float("nan"))
            continue
        start_ll.append(res[4])
        if best is None or res[4] > best[1][4] + 1e-10:
            best = (s, res)
        if K == 1:
            # one class: EM is a single M-step and every start is identical
            start_ll.extend([res[4]] * (spec.n_starts - 1))
            break
    if best is None:
        raise FitError(f"all {spec.n_starts} starts failed for K={K}: " + "; ".join(failures))

    s_best, (pi, beta, score_models, post, ll, iters, converged, trace) = best
    order = _canonical_order(pi, beta)
    pi = pi[order]
    beta = beta[order]
    score_models = tuple(score_models[k] for k in order)
    post = post[:, order]
    df = df_count(K, m, spec.score_kind, spec.restricted, spec.include_extremes)
    bic = -2.0 * ll + df * math.log(n_effective)
    if not converged:
        log.warning("EM did not converge for K=%d within %d iterations", K, spec.max_em_iter)
    return MixtureFit(
        spec=spec, pi=pi, beta=beta, score_models=score_models, posterior=post, loglik=ll, df=df,
        n_effective=n_effective, bic=bic, em_iterations=iters, converged=converged,
        best_start_index=s_best, loglik_trace=trace, start_logliks=tuple(start_ll),
        person_ids=data.person_ids,
    )


@dataclass(frozen=True)
class SelectionRow:
    label: str
    k: int
    fit: Optional[MixtureFit]
    error: Optional[str] = None

    @property
    def df(self):
        return None if self.fit is None else self.fit.df

    @property
    def loglik(self):
        return None if self.fit is None else self.fit.loglik

    @property
    def bic(self):
        return None if self.fit is None else self.fit.bic

    def to_dict(self) -> dict:
        return {
            "model": self.label,
            "k": self.k,
            "df": self.df,
            "loglik": self.loglik,
            "bic": self.bic,
            "error": self.error,
        }


@dataclass(frozen=True)
class Selection:
    rows: Tuple[SelectionRow, ...]
    best_index: Optional[int]

    @property
    def best(self) -> Optional[SelectionRow]:
        return None if self.best_index is None else self.rows[self.best_index]

    @property
    def k_hat(self) -> Optional[int]:
        return None if self.best is None else self.best.k

    def to_dict(self) -> dict:
        return {
            "rows": [r.to_dict() for r in self.rows],
            "best_index": self.best_index,
            "k_hat": self.k_hat,
            "best_model": None if self.best is None else self.best.label,
        }


def _argmin_bic(rows: Sequence[SelectionRow]) -> Optional[int]:
    best = None
    for i, row in enumerate(rows):
        if row.fit is None:
            continue
        # parsimony: a later (larger or equal) model must win by more than 1e-6
        if best is None or row.bic < rows[best].bic - 1e-6:
            best = i
    return best


def select_k(data: ResponseMatrix, k_range: Sequence[int], spec: MixtureSpec, n_effective=None) -> Selection:
    """Fit every K in ``k_range`` and pick the BIC minimizer.

    Rows are listed in ascending K; a K whose fit fails is reported with its
    error instead of aborting the whole selection.
    """
    ks = sorted(set(int(k) for k in k_range))
    if not ks:
        raise ValueError("k_range is empty")
    rows = []
    for k in ks:
        try:
            fit = em_fit(data, replace(spec, K=k), n_effective)
            rows.append(SelectionRow(spec.label, k, fit))
        except (FitError, DataError) as exc:
            rows.append(SelectionRow(spec.label, k, None, str(exc)))
    return Selection(tuple(rows), _argmin_bic(rows))


def select_score_model(
    data: ResponseMatrix,
    K: int,
    spec: MixtureSpec,
    candidates: Sequence[Tuple[str, bool]] = SCORE_CANDIDATES,
    n_effective=None,
) -> Selection:
    """Fit each ``(kind, restricted)`` candidate at fixed K and pick the BIC minimizer."""
    if not candidates:
        raise ValueError("no score-model candidates")
    rows = []
    for kind, restricted in candidates:
        s = replace(spec, K=K, score_kind=kind, restricted=restricted)
        try:
            fit = em_fit(data, s, n_effective)
            rows.append(SelectionRow(s.label, K, fit))
        except (FitError, DataError) as exc:
            rows.append(SelectionRow(s.label, K, None, str(exc)))
    best = None
    for i, row in enumerate(rows):
        if row.fit is not None and (best is None or row.bic < rows[best].bic):
            best = i
    return Selection(tuple(rows), best)
