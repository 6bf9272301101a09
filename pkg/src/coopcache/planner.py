"""Optimal caching LPs and expected-cost evaluation.

The download cost per unit of data is fixed to 1 and the requested file has
unit size, so cache amounts are fractions and costs count file-downloads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from math import comb

import numpy as np

from coopcache.errors import CapacityError, DimensionError
from coopcache.lp import LpProblem, LpSolution, solve
from coopcache.probmodel import (
    ProbabilityMatrix,
    adjacency_from_mask,
    config_probabilities,
    neighborhood_distribution,
    num_configurations,
    selection_weights,
    subset_membership,
    check_full_enumeration,
)

MAX_REDUCED_LP_USERS = 16
# relative cost discount on x that breaks ties between optimal plans
TIE_EPS = 1e-9


@dataclass(frozen=True, eq=False)
class CacheVector:
    """Fractions of the file each user downloads before sharing starts."""

    x: np.ndarray

    def __post_init__(self):
        arr = np.array(self.x, dtype=float, copy=True).ravel()
        if arr.size < 1:
            raise ValueError("cache vector must be non-empty")
        if np.any(arr < -1e-9):
            raise ValueError("cache amounts must be nonnegative")
        arr = np.maximum(arr, 0.0)
        arr.setflags(write=False)
        object.__setattr__(self, "x", arr)

    @property
    def n(self) -> int:
        return self.x.size

    @property
    def total(self) -> float:
        return float(self.x.sum())

    def lint(self) -> list[str]:
        """Warnings for amounts that are feasible but never optimal."""
        return [f"user {i} caches {v:.6g} > 1" for i, v in enumerate(self.x) if v > 1 + 1e-9]

    @classmethod
    def uniform(cls, n: int, value: float) -> "CacheVector":
        return cls(np.full(n, float(value)))

    def to_dict(self) -> dict:
        return {"n": self.n, "x": self.x.tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> "CacheVector":
        cv = cls(doc["x"])
        if "n" in doc and int(doc["n"]) != cv.n:
            raise ValueError(f"declared n={doc['n']} but x has {cv.n} entries")
        return cv


@dataclass(frozen=True)
class EvaluatedCost:
    total: float
    caching: float
    postsharing: float
    per_user_postsharing: tuple[float, ...] | None = None
    stderr: float | None = None

    def to_dict(self) -> dict:
        d = {"total": self.total, "caching": self.caching, "postsharing": self.postsharing}
        if self.per_user_postsharing is not None:
            d["per_user_postsharing"] = list(self.per_user_postsharing)
        if self.stderr is not None:
            d["stderr"] = self.stderr
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def build_full_lp(pm: ProbabilityMatrix) -> LpProblem:
    """LP over every configuration: variables ``x`` then ``y[k, i]`` (row-major in k)."""
    check_full_enumeration(pm.n)
    if not pm.is_symmetric:
        raise ValueError("the configuration LP needs a symmetric matrix; use build_reduced_lp")
    n = pm.n
    K = num_configurations(n)
    pk = config_probabilities(pm)
    c = np.concatenate([np.ones(n), np.repeat(pk, n)])
    G = np.zeros((K * n, n + K * n))
    for k in range(K):
        G[k * n : (k + 1) * n, :n] = adjacency_from_mask(n, k)
    G[:, n:] = np.eye(K * n)
    names = tuple(f"x{i}" for i in range(n)) + tuple(f"y{i},{k}" for k in range(K) for i in range(n))
    return LpProblem(c, G, np.ones(K * n), var_names=names)


def reduced_weights(pm: ProbabilityMatrix) -> np.ndarray:
    return selection_weights(pm)


def build_reduced_lp(pm: ProbabilityMatrix | int, weights: np.ndarray | None = None) -> LpProblem:
    """LP over selection vectors: variables ``x`` then ``y_v`` for masks ``v = 1 .. 2^n - 1``.

    ``weights`` (indexed by mask, length ``2**n``) overrides the weights derived
    from ``pm``; pass an integer user count in that case.
    """
    n = pm if isinstance(pm, int) else pm.n
    if n > MAX_REDUCED_LP_USERS:
        raise CapacityError(f"reduced LP supports n <= {MAX_REDUCED_LP_USERS}, got n={n}")
    if weights is None:
        if isinstance(pm, int):
            raise ValueError("weights are required when only a user count is given")
        weights = selection_weights(pm)
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (1 << n,):
        raise DimensionError(f"weights must have length 2^{n}")
    V = (1 << n) - 1
    c = np.concatenate([np.ones(n), weights[1:]])
    G = np.zeros((V, n + V))
    G[:, :n] = subset_membership(n)[1:]
    G[:, n:] = np.eye(V)
    names = tuple(f"x{i}" for i in range(n)) + tuple(f"y{v}" for v in range(1, V + 1))
    return LpProblem(c, G, np.ones(V), var_names=names)


def symmetric_weights(n: int, p: float) -> np.ndarray:
    """``w[i-1] = C(n-1, i-1) n p^(i-1) (1-p)^(n-i)`` for ``i = 1 .. n``."""
    i = np.arange(1, n + 1)
    binom = np.array([comb(n - 1, k - 1) for k in i], dtype=float)
    with np.errstate(invalid="ignore"):
        w = binom * n * np.power(p, i - 1) * np.power(1.0 - p, n - i)
    return w


def build_symmetric_lp(n: int, p: float) -> LpProblem:
    """LP in a scalar ``x`` shared by all users and ``y_1 .. y_n``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    w = symmetric_weights(n, p)
    c = np.concatenate([[float(n)], w])
    G = np.zeros((n, n + 1))
    G[:, 0] = np.arange(1, n + 1)
    G[:, 1:] = np.eye(n)
    names = ("x",) + tuple(f"y{i}" for i in range(1, n + 1))
    return LpProblem(c, G, np.ones(n), var_names=names)


def _symmetric_objective(x: float, n: int, w: np.ndarray) -> float:
    i = np.arange(1, n + 1)
    return float(w @ np.maximum(0.0, 1.0 - i * x) + n * x)


def solve_symmetric_closed(n: int, p: float) -> tuple[CacheVector, EvaluatedCost]:
    """Minimize the symmetric objective by checking its breakpoints 1, 1/2, ..., 1/n and 0."""
    if n < 1 or not 0.0 <= p <= 1.0:
        raise ValueError("need n >= 1 and p in [0, 1]")
    w = symmetric_weights(n, p)
    best_x, best = None, np.inf
    for x in [1.0 / i for i in range(1, n + 1)] + [0.0]:
        g = _symmetric_objective(x, n, w)
        if g < best - 1e-12:
            best_x, best = x, g
    caching = n * best_x
    return CacheVector.uniform(n, best_x), EvaluatedCost(best, caching, best - caching)


def solve_lp_plan(lp: LpProblem, n: int) -> tuple[CacheVector, LpSolution]:
    """Solve a planner LP and return the cache amounts (first ``n`` variables).

    Ties are broken towards caching: the cost of the ``x`` variables is
    lowered by a relative ``TIE_EPS`` so that among optimal points one with
    the largest ``sum(x)`` is returned (e.g. ``x = 1`` rather than ``x = 0``
    when nobody ever meets).  The reported optimum uses the true costs.
    """
    c = lp.objective.copy()
    c[:n] *= 1.0 - TIE_EPS
    sol = solve(LpProblem(c, lp.G, lp.h, lp.var_names))
    if not sol.is_optimal:
        raise RuntimeError(f"planner LP returned status {sol.status}")
    value = float(lp.objective @ sol.point)
    sol = LpSolution(sol.status, value, sol.point, sol.dual, sol.iterations, sol.extra)
    return CacheVector(sol.point[:n]), sol


def optimal_plan(pm: ProbabilityMatrix, method: str = "reduced") -> tuple[CacheVector, float]:
    """Optimal cache vector and objective via the full, reduced or symmetric LP."""
    if method == "full":
        cv, sol = solve_lp_plan(build_full_lp(pm), pm.n)
    elif method == "reduced":
        cv, sol = solve_lp_plan(build_reduced_lp(pm), pm.n)
    elif method == "symmetric":
        if not pm.is_uniform or not pm.is_symmetric:
            raise ValueError("symmetric method needs a uniform probability matrix")
        p = float(pm.offdiagonal()[0]) if pm.n > 1 else 0.0
        cv1, sol = solve_lp_plan(build_symmetric_lp(pm.n, p), 1)
        cv = CacheVector.uniform(pm.n, float(cv1.x[0]))
    else:
        raise ValueError(f"unknown method {method!r}")
    return cv, sol.optimum


def evaluate_cost(
    pm: ProbabilityMatrix,
    cv: CacheVector,
    mode: str = "exact",
    *,
    seed: int | None = None,
    trials: int = 100_000,
) -> EvaluatedCost:
    """Expected total cost of caching ``cv`` when encounters follow ``pm``.

    Post-sharing demand of user ``i`` in a configuration is ``[1 - (A x)_i]^+``.
    ``mode`` is ``"exact"`` (enumerates each user's neighborhoods),
    ``"symmetric"`` (closed form, uniform ``pm`` and ``cv`` only) or
    ``"montecarlo"`` (sampled configurations, reports a standard error).
    """
    if not isinstance(cv, CacheVector):
        cv = CacheVector(cv)
    if cv.n != pm.n:
        raise DimensionError(f"cache vector has {cv.n} entries, matrix has n={pm.n}")
    n, x = pm.n, cv.x
    caching = float(x.sum())

    if mode == "exact":
        received = subset_membership(n) @ x
        short = np.maximum(0.0, 1.0 - received)
        per_user = tuple(float(neighborhood_distribution(pm, u) @ short) for u in range(n))
        post = float(sum(per_user))
        return EvaluatedCost(caching + post, caching, post, per_user)

    if mode == "symmetric":
        if not (pm.is_uniform and pm.is_symmetric):
            raise ValueError("symmetric mode needs a uniform probability matrix")
        if np.ptp(x) > 1e-12:
            raise ValueError("symmetric mode needs a uniform cache vector")
        p = float(pm.offdiagonal()[0]) if n > 1 else 0.0
        w = symmetric_weights(n, p)
        i = np.arange(1, n + 1)
        post = float(w @ np.maximum(0.0, 1.0 - i * x[0]))
        return EvaluatedCost(caching + post, caching, post)

    if mode == "montecarlo":
        if trials < 2:
            raise ValueError("montecarlo mode needs at least 2 trials")
        rng = np.random.default_rng(seed)
        batch = max(1, min(trials, 2_000_000 // max(1, n * n)))
        samples = []
        done = 0
        iu = np.triu_indices(n, 1)
        while done < trials:
            b = min(batch, trials - done)
            draws = rng.random((b, n, n))
            if pm.is_symmetric:
                A = np.zeros((b, n, n))
                A[:, iu[0], iu[1]] = draws[:, iu[0], iu[1]] < pm.p[iu]
                A = A + A.transpose(0, 2, 1)
                A[:, np.arange(n), np.arange(n)] = 1.0
            else:
                A = (draws < pm.p).astype(float)
                A[:, np.arange(n), np.arange(n)] = 1.0
            samples.append(np.maximum(0.0, 1.0 - A @ x).sum(axis=1))
            done += b
        s = np.concatenate(samples)
        post = float(s.mean())
        stderr = float(s.std(ddof=1) / np.sqrt(s.size))
        return EvaluatedCost(caching + post, caching, post, stderr=stderr)

    raise ValueError(f"unknown evaluation mode {mode!r}")
