"""Simulation scenarios for DIF detection and the Monte-Carlo study runner.

Scenarios (``theta`` is the ability impact, ``delta`` the DIF size):

1. no impact, no DIF: one class, all abilities 0
2. no impact, DIF: two classes, all abilities 0
3. impact, no DIF: one class, abilities -theta/2 and +theta/2
4. impact and DIF, not coinciding: class independent of ability group
5. impact and DIF, coinciding: ability -theta/2 is class I, +theta/2 is class II

Class II difficulties are the base difficulties with ``+delta`` on the two
DIF items, re-centered to sum zero (or ``-delta/2, +delta/2`` with
``split_dif``).

Seeds: replication ``j`` of the cell ``(scenario, theta, delta)`` draws its
data and fit seeds from ``SeedSequence(master_seed, spawn_key=(scenario,
round(1000 theta), round(1000 delta), j))``, so results do not depend on
grid order or scheduling.
"""

import csv
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit

from .data import DataError, ResponseMatrix, filter_extremes
from .mixture import MixtureSpec, select_k

__all__ = [
    "ScenarioSpec",
    "GroundTruth",
    "StudyCell",
    "StudyResult",
    "generate_scenario",
    "scenario_cells",
    "replication_seeds",
    "run_study",
    "default_beta",
]

log = logging.getLogger(__name__)


def default_beta(m: int) -> np.ndarray:
    return np.linspace(-2.0, 2.0, m)


@dataclass(frozen=True)
class ScenarioSpec:
    scenario_id: int
    theta: float = 0.0
    delta: float = 0.0
    n: int = 500
    m: int = 20
    base_beta: Optional[Tuple[float, ...]] = None
    dif_items: Optional[Tuple[int, int]] = None
    mix: float = 0.5
    split_dif: bool = False
    seed: int = 0

    def __post_init__(self):
        s, th, de = self.scenario_id, self.theta, self.delta
        if s not in (1, 2, 3, 4, 5):
            raise ValueError(f"scenario must be 1..5, got {s}")
        if th < 0 or de < 0:
            raise ValueError("theta and delta must be non-negative")
        if s == 1 and (th != 0 or de != 0):
            raise ValueError("scenario 1 requires theta = 0 and delta = 0")
        if s == 2 and th != 0:
            raise ValueError("scenario 2 requires theta = 0")
        if s == 3 and (th <= 0 or de != 0):
            raise ValueError("scenario 3 requires theta > 0 and delta = 0")
        if s in (4, 5) and th <= 0:
            raise ValueError(f"scenario {s} requires theta > 0")
        if self.n < 1 or self.m < 2:
            raise ValueError("need n >= 1 and m >= 2")
        if not 0 < self.mix < 1:
            raise ValueError("mix must lie strictly between 0 and 1")
        if self.base_beta is not None and len(self.base_beta) != self.m:
            raise ValueError("base_beta length must equal m")
        d = self.dif_items_resolved
        if len(set(d)) != 2 or not all(0 <= j < self.m for j in d):
            raise ValueError("dif_items must be two distinct item indices")

    @property
    def dif_items_resolved(self) -> Tuple[int, int]:
        if self.dif_items is not None:
            return tuple(int(j) for j in self.dif_items)
        return (self.m // 2 - 1, self.m // 2)

    def class_betas(self) -> np.ndarray:
        """2 x m array: class I and class II difficulties."""
        b1 = default_beta(self.m) if self.base_beta is None else np.asarray(self.base_beta, float)
        b1 = b1 - b1.mean()
        b2 = b1.copy()
        j, k = self.dif_items_resolved
        if self.split_dif:
            b2[j] -= self.delta / 2
            b2[k] += self.delta / 2
        else:
            b2[[j, k]] += self.delta
        return np.vstack([b1, b2 - b2.mean()])


@dataclass(frozen=True)
class GroundTruth:
    classes: np.ndarray  # 0 = class I, 1 = class II
    abilities: np.ndarray
    beta: np.ndarray  # 2 x m


def _split(n, frac):
    n1 = int(round(n * frac))
    return n - n1, n1


def generate_scenario(spec: ScenarioSpec):
    """Draw a response matrix and its ground truth.

    Group sizes are exact (rounded) rather than random; the assignment of
    persons to groups is a random permutation.
    """
    rng = np.random.default_rng(spec.seed)
    n, s, half = spec.n, spec.scenario_id, spec.theta / 2.0
    classes = np.zeros(n, dtype=int)
    abilities = np.zeros(n)
    if s == 2:
        n1, n2 = _split(n, spec.mix)
        classes[n1:] = 1
    elif s == 3:
        na, nb = _split(n, 0.5)
        abilities[:na], abilities[na:] = -half, half
    elif s == 4:
        na, nb = _split(n, 0.5)
        abilities[:na], abilities[na:] = -half, half
        a1, a2 = _split(na, spec.mix)
        b1, b2 = _split(nb, spec.mix)
        classes[a1:na] = 1
        classes[na + b1 :] = 1
    elif s == 5:
        n1, n2 = _split(n, spec.mix)
        abilities[:n1], abilities[n1:] = -half, half
        classes[n1:] = 1
    perm = rng.permutation(n)
    classes, abilities = classes[perm], abilities[perm]
    beta = spec.class_betas()
    p = expit(abilities[:, None] - beta[classes])
    y = (rng.random(p.shape) < p).astype(np.int8)
    names = tuple(f"i{j + 1}" for j in range(spec.m))
    return ResponseMatrix(y, names), GroundTruth(classes, abilities, beta)


def replication_seeds(master_seed: int, scenario: int, theta: float, delta: float, rep: int) -> Tuple[int, int]:
    ss = np.random.SeedSequence(
        master_seed, spawn_key=(scenario, int(round(1000 * theta)), int(round(1000 * delta)), rep)
    )
    data_seed, fit_seed = ss.generate_state(2)
    return int(data_seed), int(fit_seed)


@dataclass(frozen=True)
class StudyCell:
    scenario: int
    theta: float
    delta: float
    replications: int
    k_hats: Tuple[Optional[int], ...]
    seeds: Tuple[int, ...]

    @property
    def n_fitted(self) -> int:
        return sum(k is not None for k in self.k_hats)

    @property
    def rate(self) -> Optional[float]:
        ok = [k for k in self.k_hats if k is not None]
        return sum(k > 1 for k in ok) / len(ok) if ok else None

    @property
    def mean_k(self) -> Optional[float]:
        ok = [k for k in self.k_hats if k is not None]
        return float(np.mean(ok)) if ok else None


CSV_FIELDS = ("scenario", "theta", "delta", "replications", "n_fitted", "rate", "mean_k", "seeds")


@dataclass(frozen=True)
class StudyResult:
    cells: Tuple[StudyCell, ...]
    master_seed: int
    settings: dict = field(default_factory=dict)

    def cell(self, scenario, theta=None, delta=None) -> StudyCell:
        for c in self.cells:
            if c.scenario == scenario and (theta is None or c.theta == theta) and (delta is None or c.delta == delta):
                return c
        raise KeyError((scenario, theta, delta))

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(CSV_FIELDS)
        for c in self.cells:
            wr.writerow([
                c.scenario, repr(float(c.theta)), repr(float(c.delta)), c.replications, c.n_fitted,
                "" if c.rate is None else repr(c.rate),
                "" if c.mean_k is None else repr(c.mean_k),
                " ".join(str(s) for s in c.seeds),
            ])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "master_seed": self.master_seed,
            "settings": self.settings,
            "cells": [
                {
                    "scenario": c.scenario,
                    "theta": c.theta,
                    "delta": c.delta,
                    "replications": c.replications,
                    "n_fitted": c.n_fitted,
                    "rate": c.rate,
                    "mean_k": c.mean_k,
                    "k_hats": list(c.k_hats),
                    "seeds": list(c.seeds),
                }
                for c in self.cells
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def scenario_cells(scenarios: Sequence[int], theta_grid: Sequence[float], delta_grid: Sequence[float]):
    """Valid ``(scenario, theta, delta)`` triples in canonical order."""
    cells = []
    for s in scenarios:
        thetas = [0.0] if s in (1, 2) else [float(t) for t in theta_grid if t > 0]
        deltas = [0.0] if s in (1, 3) else [float(d) for d in delta_grid]
        for th in thetas:
            for de in deltas:
                cells.append((int(s), th, de))
    if not cells:
        raise ValueError("no valid cells for the requested scenarios and grids")
    return cells


def _one_replication(task):
    (s, th, de, rep), master_seed, n, m, fit_spec, k_range, scenario_kw = task
    data_seed, fit_seed = replication_seeds(master_seed, s, th, de, rep)
    spec = ScenarioSpec(s, th, de, n=n, m=m, seed=data_seed, **scenario_kw)
    data, _ = generate_scenario(spec)
    try:
        data, _ = filter_extremes(data)
        sel = select_k(data, k_range, replace(fit_spec, seed=fit_seed))
        k_hat = sel.k_hat
    except DataError as exc:
        log.warning("scenario %d theta=%g delta=%g rep %d failed: %s", s, th, de, rep, exc)
        k_hat = None
    return data_seed, k_hat


def run_study(
    scenarios: Sequence[int],
    theta_grid: Sequence[float],
    delta_grid: Sequence[float],
    replications: int,
    fit_spec: MixtureSpec = None,
    k_range: Sequence[int] = (1, 2, 3),
    seed: int = 0,
    n: int = 500,
    m: int = 20,
    n_jobs: int = 1,
    progress=None,
    **scenario_kw,
) -> StudyResult:
    """Rate of selecting K-hat > 1 per cell over seeded replications."""
    if replications < 1:
        raise ValueError("replications must be >= 1")
    if fit_spec is None:
        fit_spec = MixtureSpec()
    cells = scenario_cells(scenarios, theta_grid, delta_grid)
    tasks = [
        ((s, th, de, rep), seed, n, m, fit_spec, tuple(k_range), scenario_kw)
        for (s, th, de) in cells
        for rep in range(replications)
    ]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as ex:
            results = list(ex.map(_one_replication, tasks))
    else:
        results = []
        for t in tasks:
            results.append(_one_replication(t))
            if progress is not None:
                progress(len(results), len(tasks))
    out = []
    for c, (s, th, de) in enumerate(cells):
        chunk = results[c * replications : (c + 1) * replications]
        out.append(StudyCell(s, th, de, replications, tuple(k for _, k in chunk), tuple(sd for sd, _ in chunk)))
    settings = {
        "scenarios": [int(s) for s in scenarios],
        "theta_grid": [float(t) for t in theta_grid],
        "delta_grid": [float(d) for d in delta_grid],
        "replications": replications,
        "n": n,
        "m": m,
        "k_range": list(k_range),
        "fit_spec": fit_spec.to_dict(),
    }
    return StudyResult(tuple(out), seed, settings)
