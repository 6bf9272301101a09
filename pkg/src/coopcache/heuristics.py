"""Polynomial-time caching heuristics and their analytic guarantees."""

from __future__ import annotations

from dataclasses import dataclass
from math import sqrt

import numpy as np

from coopcache.lp import LpProblem, solve
from coopcache.planner import CacheVector, symmetric_weights
from coopcache.probmodel import ProbabilityMatrix, expected_degrees

IAD = "IAD"
PSC = "PSC"
ALGCOV = "AlgCov"

FEASIBILITY_TOL = 1e-8
# cost weight on max(x) that picks the most balanced optimal PSC point
TIE_EPS = 1e-9


@dataclass(frozen=True)
class HeuristicResult:
    x: CacheVector
    method: str
    lower_bound_used: float
    branch: str = ""

    def to_dict(self) -> dict:
        d = {"method": self.method, "x": self.x.x.tolist(), "lower_bound": self.lower_bound_used}
        if self.branch:
            d["branch"] = self.branch
        return d


@dataclass(frozen=True)
class GapReport:
    kind: str  # "sym" or "asym"
    gap: float
    p_star: float | None = None
    worst_case: float | None = None
    p_m: float | None = None
    p_M: float | None = None

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if v is not None}


def iad(pm: ProbabilityMatrix) -> HeuristicResult:
    """Inverse average degree: each user caches ``1 / E(C_i)``."""
    x = 1.0 / expected_degrees(pm)
    return HeuristicResult(CacheVector(x), IAD, float(x.sum()))


def psc_lp(pm: ProbabilityMatrix) -> LpProblem:
    return LpProblem(np.ones(pm.n), pm.p, np.ones(pm.n))


def psc(pm: ProbabilityMatrix) -> HeuristicResult:
    """Probabilistic set cover: ``min 1'x  s.t.  P x >= 1, x >= 0``.

    When the optimum is not unique, the optimal point with the smallest
    ``max_i x_i`` is returned, so symmetric instances give a uniform vector.
    """
    n = pm.n
    sol = solve(psc_lp(pm))
    if not sol.is_optimal:
        raise RuntimeError(f"PSC LP returned status {sol.status}")
    # variables (x, t): min 1'x + TIE_EPS t  s.t.  P x >= 1,  t - x_i >= 0
    G = np.zeros((2 * n, n + 1))
    G[:n, :n] = pm.p
    G[n:, :n] = -np.eye(n)
    G[n:, n] = 1.0
    h = np.concatenate([np.ones(n), np.zeros(n)])
    c = np.concatenate([np.ones(n), [TIE_EPS]])
    balanced = solve(LpProblem(c, G, h))
    x = sol.point
    if balanced.is_optimal and balanced.point[:n].sum() <= sol.optimum + 1e-12 * max(1.0, sol.optimum):
        x = balanced.point[:n]
    return HeuristicResult(CacheVector(x), PSC, sol.optimum)


def algcov(pm: ProbabilityMatrix) -> HeuristicResult:
    """Pick between the PSC and IAD vectors using their lower bounds.

    If the IAD vector already satisfies the covering constraints, the PSC
    vector is returned.  Otherwise the vector with the smaller sum wins, with
    IAD taking ties.
    """
    r_psc = psc(pm)
    r_iad = iad(pm)
    feasible = bool(np.all(pm.p @ r_iad.x.x >= 1.0 - FEASIBILITY_TOL))
    if feasible:
        return HeuristicResult(r_psc.x, ALGCOV, r_psc.lower_bound_used, "PSC selected (IAD feasible)")
    s_iad, s_psc = r_iad.lower_bound_used, r_psc.lower_bound_used
    if s_iad <= s_psc:
        return HeuristicResult(r_iad.x, ALGCOV, s_iad, "IAD selected")
    return HeuristicResult(r_psc.x, ALGCOV, s_psc, "PSC selected")


def lower_bound_flb(n: int, p: float) -> float:
    """Symmetric lower bound ``N / (1 + (N-1) p)`` on the optimal expected cost."""
    return n / (1.0 + (n - 1) * p)


def gap_sum(n: int, p: float) -> float:
    i = np.arange(1, n + 1)
    ec = 1.0 + (n - 1) * p
    return float(np.maximum(0.0, 1.0 - i / ec) @ symmetric_weights(n, p))


def p_star(n: int) -> float | None:
    """Meeting probability where the single-meeting term of the symmetric gap peaks."""
    if n < 2:
        return None
    return (-n + sqrt(5 * n * n - 8 * n + 4)) / (2 * (n - 1) ** 2)


def gap_symmetric(n: int, p: float) -> GapReport:
    return GapReport("sym", gap_sum(n, p), p_star=p_star(n), worst_case=0.25 * n)


def gap_asymmetric(pm: ProbabilityMatrix) -> GapReport:
    n = pm.n
    if n < 2:
        raise ValueError("asymmetric gap needs at least two users")
    off = pm.offdiagonal()
    p_m, p_M = float(off.min()), float(off.max())
    spread = n * (n - 1) * (p_M - p_m) / ((1 + (n - 1) * p_m) * (1 + (n - 1) * p_M))
    return GapReport("asym", gap_sum(n, p_m) + spread, p_m=p_m, p_M=p_M)
