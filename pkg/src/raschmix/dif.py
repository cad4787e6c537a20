"""DIF detection: the mixture criterion (K-hat > 1) and Andersen's likelihood-ratio test."""

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.stats import chi2

from .cml import DegenerateItemError, fit_cml
from .data import DataError, ResponseMatrix
from .mixture import MixtureSpec, Selection, select_k

__all__ = ["DifReport", "detect_dif_mixture", "andersen_lr_test", "chi2_sf"]


def chi2_sf(x: float, df: int) -> float:
    """Upper tail of the chi-square distribution."""
    return float(chi2.sf(x, df))


@dataclass(frozen=True)
class DifReport:
    method: str
    flagged: bool
    per_item_contrast: np.ndarray
    item_names: Tuple[str, ...] = ()
    statistic: Optional[float] = None
    df: Optional[int] = None
    p_value: Optional[float] = None
    alpha: Optional[float] = None
    k_hat: Optional[int] = None
    groups: Tuple[str, ...] = ()
    group_beta: Optional[np.ndarray] = None
    selection: Optional[Selection] = field(default=None, repr=False)

    def to_dict(self) -> dict:
        out = {
            "method": self.method,
            "flagged": self.flagged,
            "item_names": list(self.item_names),
            "per_item_contrast": self.per_item_contrast.tolist(),
        }
        if self.method == "lr":
            out.update(
                statistic=self.statistic,
                df=self.df,
                p_value=self.p_value,
                alpha=self.alpha,
                groups=list(self.groups),
                group_beta=self.group_beta.tolist(),
            )
        else:
            out.update(k_hat=self.k_hat, selection=self.selection.to_dict())
        return out

    def summary(self) -> str:
        lines = []
        if self.method == "lr":
            lines.append(
                f"Andersen LR test: statistic = {self.statistic:.3f}, df = {self.df}, "
                f"p = {self.p_value:.4g} (alpha = {self.alpha})"
            )
        else:
            lines.append(f"Rasch mixture: K-hat = {self.k_hat} by BIC")
        lines.append(f"DIF {'detected' if self.flagged else 'not detected'}")
        width = max(len(n) for n in self.item_names)
        lines.append("item contrasts (centered):")
        for name, c in zip(self.item_names, self.per_item_contrast):
            lines.append(f"  {name:<{width}}  {c:+.3f}")
        return "\n".join(lines)


def detect_dif_mixture(data: ResponseMatrix, spec: MixtureSpec, k_max: int = 3, n_effective=None) -> DifReport:
    """Flag DIF when BIC prefers more than one latent class.

    Needs no group labels.  The contrast is the difference in item
    difficulties between the two largest classes of the selected model.
    """
    if k_max < 2:
        raise ValueError("k_max must be at least 2")
    sel = select_k(data, range(1, k_max + 1), spec, n_effective)
    if sel.best is None:
        raise DataError("no K could be fitted")
    fit = sel.best.fit
    if fit.K > 1:
        # classes are stored in ascending pi, so the two largest are last
        contrast = fit.beta[-1] - fit.beta[-2]
        contrast = contrast - contrast.mean()
    else:
        contrast = np.zeros(data.m)
    return DifReport(
        method="mixture",
        flagged=fit.K > 1,
        per_item_contrast=contrast,
        item_names=data.item_names,
        k_hat=fit.K,
        selection=sel,
    )


def andersen_lr_test(data: ResponseMatrix, grouping: Sequence, alpha: float = 0.05, tol: float = 1e-8) -> DifReport:
    """Andersen's conditional likelihood-ratio test across known groups.

    ``2 * (sum_g logL_g - logL_pooled)`` is referred to a chi-square with
    ``(G - 1)(m - 1)`` degrees of freedom.
    """
    grouping = np.asarray(grouping)
    if grouping.shape != (data.n,):
        raise ValueError(f"grouping has {grouping.size} labels for {data.n} persons")
    labels = sorted(set(grouping.tolist()), key=str)
    if len(labels) < 2:
        raise DataError("the LR test needs at least two groups")
    w = data.person_weights()
    pooled = fit_cml(data, w, tol=tol)
    group_fits = []
    for g in labels:
        sub = data.subset(np.flatnonzero(grouping == g))
        try:
            group_fits.append(fit_cml(sub, tol=tol))
        except DegenerateItemError as exc:
            raise DegenerateItemError(f"group {g!r}: {exc}") from None
    stat = 2.0 * (sum(f.cond_loglik for f in group_fits) - pooled.cond_loglik)
    df = (len(labels) - 1) * (data.m - 1)
    p = min(1.0, max(0.0, chi2_sf(max(stat, 0.0), df)))
    group_beta = np.vstack([f.beta for f in group_fits])
    contrast = group_beta[-1] - group_beta[0]
    return DifReport(
        method="lr",
        flagged=p < alpha,
        per_item_contrast=contrast - contrast.mean(),
        item_names=data.item_names,
        statistic=float(stat),
        df=df,
        p_value=p,
        alpha=alpha,
        groups=tuple(str(g) for g in labels),
        group_beta=group_beta,
    )
