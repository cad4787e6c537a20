"""Plain-text tables, the study-curve SVG, and the data-handling sensitivity sweep."""

import csv
import io
from dataclasses import replace
from typing import Dict, List, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .data import DataError, dichotomize, filter_extremes
from .mixture import MixtureSpec, select_k

__all__ = ["format_selection", "render_svg", "read_study_csv", "sensitivity_report", "format_sensitivity"]


def format_selection(sel: dict) -> str:
    """Render ``Selection.to_dict()`` as a Model / k / #Df / logL / BIC table.

    The selected row is marked with ``*``.
    """
    rows = sel["rows"]
    labels = [r["model"] for r in rows]
    w = max([len("Model")] + [len(s) for s in labels])
    lines = [f"  {'Model':<{w}}  {'k':>2}  {'#Df':>4}  {'logL':>9}  {'BIC':>8}"]
    for i, r in enumerate(rows):
        mark = "*" if i == sel["best_index"] else " "
        if r["error"] is not None:
            lines.append(f"{mark} {r['model']:<{w}}  {r['k']:>2}  {'-':>4}  {'failed':>9}  {'-':>8}  ({r['error']})")
        else:
            lines.append(f"{mark} {r['model']:<{w}}  {r['k']:>2}  {r['df']:>4}  {r['loglik']:>9.1f}  {r['bic']:>8.1f}")
    return "\n".join(lines)


def selection_csv(sel: dict) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["Model", "k", "#Df", "logL", "BIC", "selected"])
    for i, r in enumerate(sel["rows"]):
        wr.writerow([
            r["model"], r["k"],
            "" if r["df"] is None else r["df"],
            "" if r["loglik"] is None else repr(r["loglik"]),
            "" if r["bic"] is None else repr(r["bic"]),
            int(i == sel["best_index"]),
        ])
    return buf.getvalue()


def read_study_csv(text: str) -> List[dict]:
    rows = []
    for r in csv.DictReader(io.StringIO(text)):
        try:
            rows.append({
                "scenario": int(r["scenario"]),
                "theta": float(r["theta"]),
                "delta": float(r["delta"]),
                "rate": float(r["rate"]) if r["rate"] else None,
            })
        except (KeyError, ValueError) as exc:
            raise DataError(f"not a study CSV: {exc}") from None
    if not rows:
        raise DataError("study CSV has no rows")
    return rows


_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def render_svg(rows: Sequence[dict], x: str = None, width: int = 560, height: int = 380) -> str:
    """Line chart of the K-hat > 1 rate against the swept parameter.

    One polyline per scenario (and per value of the other parameter when
    that varies too).  ``x`` is ``"delta"`` or ``"theta"``; by default the
    parameter with more distinct values is used.
    """
    if x is None:
        nd = len({r["delta"] for r in rows})
        nt = len({r["theta"] for r in rows})
        x = "delta" if nd >= nt else "theta"
    other = "theta" if x == "delta" else "delta"
    series: Dict[tuple, list] = {}
    for r in rows:
        if r["rate"] is None:
            continue
        series.setdefault((r["scenario"], r[other]), []).append((r[x], r["rate"]))
    xs = [p[0] for pts in series.values() for p in pts] or [0.0, 1.0]
    x0, x1 = min(xs), max(xs)
    if x1 == x0:
        x1 = x0 + 1.0
    left, right, top, bottom = 60, 150, 20, 50
    pw, ph = width - left - right, height - top - bottom

    def px(v):
        return left + (v - x0) / (x1 - x0) * pw

    def py(v):
        return top + (1.0 - v) * ph

    sym = {"delta": "Δ", "theta": "Θ"}
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>',
    ]
    for t in np.linspace(0, 1, 6):
        out.append(f'<line x1="{left - 4}" y1="{py(t):.1f}" x2="{left}" y2="{py(t):.1f}" stroke="black"/>')
        out.append(f'<text x="{left - 8}" y="{py(t) + 4:.1f}" text-anchor="end">{t:.1f}</text>')
    for v in sorted(set(xs)):
        out.append(f'<line x1="{px(v):.1f}" y1="{top + ph}" x2="{px(v):.1f}" y2="{top + ph + 4}" stroke="black"/>')
        out.append(f'<text x="{px(v):.1f}" y="{top + ph + 18}" text-anchor="middle">{v:g}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 10}" text-anchor="middle">{sym[x]}</text>')
    out.append(
        f'<text x="16" y="{top + ph / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {top + ph / 2:.1f})">rate of K&#770; &gt; 1</text>'
    )
    for i, (key, pts) in enumerate(sorted(series.items())):
        pts = sorted(pts)
        color = _COLORS[i % len(_COLORS)]
        coords = " ".join(f"{px(a):.1f},{py(b):.1f}" for a, b in pts)
        out.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="2"/>')
        for a, b in pts:
            out.append(f'<circle cx="{px(a):.1f}" cy="{py(b):.1f}" r="3" fill="{color}"/>')
        ly = top + 10 + 18 * i
        label = escape(f"scenario {key[0]}, {sym[other]} = {key[1]:g}")
        out.append(f'<line x1="{left + pw + 12}" y1="{ly}" x2="{left + pw + 32}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 36}" y="{ly + 4}">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def sensitivity_report(raw, item_names, ids, k_range: Sequence[int], spec: MixtureSpec) -> List[dict]:
    """Refit the K range under every dichotomization threshold / extreme-score handling.

    Returns one row per ``(threshold, keep_extremes, K)``.
    """
    out = []
    for threshold in (1, 2):
        base = dichotomize(raw, item_names, ids, threshold=threshold)
        for keep in (False, True):
            if keep:
                data = base
                n_eff = base.n
            else:
                try:
                    data, rep = filter_extremes(base)
                except DataError:
                    continue
                n_eff = rep.n_effective
            sel = select_k(data, k_range, replace(spec, include_extremes=keep))
            for row in sel.rows:
                out.append({
                    "threshold": threshold,
                    "keep_extremes": keep,
                    "n_effective": n_eff,
                    "k": row.k,
                    "df": row.df,
                    "loglik": row.loglik,
                    "bic": row.bic,
                    "selected": row is sel.best,
                })
    return out


def format_sensitivity(rows: Sequence[dict]) -> str:
    lines = ["threshold  keep_extremes  n_eff  k  #Df      logL       BIC"]
    for r in rows:
        ll = "failed" if r["loglik"] is None else f"{r['loglik']:.1f}"
        bic = "-" if r["bic"] is None else f"{r['bic']:.1f}"
        lines.append(
            f"{r['threshold']:>9}  {str(r['keep_extremes']):>13}  {r['n_effective']:>5}  {r['k']:>1}  "
            f"{r['df'] if r['df'] is not None else '-':>3}  {ll:>8}  {bic:>8}{' *' if r['selected'] else ''}"
        )
    return "\n".join(lines)
