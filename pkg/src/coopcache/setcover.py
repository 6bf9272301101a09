"""Set-cover lower bound on the optimal expected cost.

For each configuration the fractional set cover ``min 1'x  s.t.  A x >= 1``
is solved; weighting these optima by the configuration probabilities gives a
lower bound on the optimal caching LP.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from coopcache.errors import CapacityError
from coopcache.lp import LpProblem, solve
from coopcache.probmodel import (
    MAX_FULL_ENUMERATION_USERS,
    Configuration,
    ProbabilityMatrix,
    adjacency_from_mask,
    config_probabilities,
    pair_list,
)


@dataclass(frozen=True)
class SetCoverBound:
    value: float
    exact: bool
    stderr: float | None = None
    samples: int | None = None

    def to_dict(self) -> dict:
        d = {"value": self.value, "exact": self.exact}
        if not self.exact:
            d.update(stderr=self.stderr, samples=self.samples, label="estimate")
        return d


@lru_cache(maxsize=1 << 16)
def _cover_value(n: int, edges: int) -> float:
    A = adjacency_from_mask(n, edges)
    sol = solve(LpProblem(np.ones(n), A, np.ones(n)))
    if not sol.is_optimal:
        raise RuntimeError(f"set-cover LP returned status {sol.status}")
    return sol.optimum


def setcover_lp_value(cfg: Configuration) -> float:
    """Fractional set-cover optimum for one configuration, in ``[1, n]``."""
    return _cover_value(cfg.n, cfg.edges)


def weighted_setcover_bound(pm: ProbabilityMatrix) -> float:
    """Exact ``sum_k p_k f(k)`` over every configuration (``n <= 6``)."""
    if pm.n > MAX_FULL_ENUMERATION_USERS:
        raise CapacityError(
            f"exact set-cover bound supports n <= {MAX_FULL_ENUMERATION_USERS}; use sampled_setcover_bound"
        )
    pk = config_probabilities(pm)
    total = 0.0
    for k in np.nonzero(pk > 0.0)[0]:
        total += pk[k] * _cover_value(pm.n, int(k))
    return float(total)


def sampled_setcover_bound(pm: ProbabilityMatrix, samples: int, seed: int) -> SetCoverBound:
    """Monte-Carlo estimate of the bound for larger groups; not a certified bound."""
    if samples < 2:
        raise ValueError("need at least 2 samples")
    rng = np.random.default_rng(seed)
    pairs = pair_list(pm.n)
    probs = np.array([pm.p[i, j] for i, j in pairs])
    vals = np.empty(samples)
    for s in range(samples):
        present = rng.random(len(pairs)) < probs
        A = np.eye(pm.n)
        for (i, j), on in zip(pairs, present):
            if on:
                A[i, j] = A[j, i] = 1.0
        vals[s] = solve(LpProblem(np.ones(pm.n), A, np.ones(pm.n))).optimum
    return SetCoverBound(float(vals.mean()), False, float(vals.std(ddof=1) / np.sqrt(samples)), samples)
