"""Probabilistic encounter model.

A :class:`ProbabilityMatrix` holds pairwise meeting probabilities with a unit
diagonal.  Row ``i`` is read as the *receiving* side: ``p[i, j]`` is the
probability that user ``i`` gets access to the cache of user ``j`` before the
deadline.  For direct sharing the matrix is symmetric, so the orientation only
matters for the (possibly asymmetric) matrices produced by
:func:`coopcache.indirect.effective_direct_model`.

Bitmask conventions
-------------------
* user sets: bit ``j`` is user ``j``.
* configurations: bit ``b`` is the ``b``-th unordered pair in lexicographic
  order ``(0,1), (0,2), ..., (0,n-1), (1,2), ...``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations
from pathlib import Path
from typing import Iterator

import numpy as np

from coopcache.errors import CapacityError, DimensionError

MAX_FULL_ENUMERATION_USERS = 6
MAX_SUBSET_USERS = 20
_ATOL = 1e-12


@dataclass(frozen=True, eq=False)
class ProbabilityMatrix:
    """Pairwise encounter probabilities with ones on the diagonal."""

    p: np.ndarray

    def __post_init__(self):
        arr = np.array(self.p, dtype=float, copy=True)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] < 1:
            raise ValueError(f"probability matrix must be square and non-empty, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("probability matrix contains non-finite entries")
        if np.any(arr < -_ATOL) or np.any(arr > 1 + _ATOL):
            raise ValueError("probabilities must lie in [0, 1]")
        if not np.allclose(np.diag(arr), 1.0, atol=1e-9):
            raise ValueError("diagonal entries must equal 1")
        arr = np.clip(arr, 0.0, 1.0)
        np.fill_diagonal(arr, 1.0)
        arr.setflags(write=False)
        object.__setattr__(self, "p", arr)

    @property
    def n(self) -> int:
        return self.p.shape[0]

    @property
    def is_symmetric(self) -> bool:
        """True when ``p[i, j] == p[j, i]`` for every pair."""
        return bool(np.allclose(self.p, self.p.T, atol=1e-12, rtol=0.0))

    @property
    def is_uniform(self) -> bool:
        """True when every off-diagonal entry equals the same value."""
        off = self.offdiagonal()
        return off.size == 0 or bool(np.ptp(off) <= 1e-12)

    def offdiagonal(self) -> np.ndarray:
        mask = ~np.eye(self.n, dtype=bool)
        return self.p[mask]

    def __getitem__(self, idx):
        return self.p[idx]

    def __eq__(self, other):
        if not isinstance(other, ProbabilityMatrix):
            return NotImplemented
        return self.p.shape == other.p.shape and bool(np.array_equal(self.p, other.p))

    def __hash__(self):
        return hash(self.p.tobytes())

    def __repr__(self):
        return f"ProbabilityMatrix(n={self.n}, symmetric={self.is_symmetric})"

    # constructors

    @classmethod
    def uniform(cls, n: int, p: float) -> "ProbabilityMatrix":
        if n < 1:
            raise ValueError("n must be >= 1")
        arr = np.full((n, n), float(p))
        np.fill_diagonal(arr, 1.0)
        return cls(arr)

    @classmethod
    def star(cls, n: int, hub: int = 0, p_hub: float = 1.0, p_leaf: float = 0.0) -> "ProbabilityMatrix":
        """Hub meets every leaf with ``p_hub``; leaves meet each other with ``p_leaf``."""
        arr = np.full((n, n), float(p_leaf))
        arr[hub, :] = p_hub
        arr[:, hub] = p_hub
        np.fill_diagonal(arr, 1.0)
        return cls(arr)

    @classmethod
    def direct(cls, p, *, check: bool = True) -> "ProbabilityMatrix":
        """Build a matrix for direct sharing, which must be symmetric."""
        pm = cls(p)
        if check and not pm.is_symmetric:
            raise ValueError("direct-sharing probability matrix must be symmetric")
        return pm

    @classmethod
    def random(cls, n: int, rng: np.random.Generator, symmetric: bool = True) -> "ProbabilityMatrix":
        arr = rng.random((n, n))
        if symmetric:
            arr = np.triu(arr, 1)
            arr = arr + arr.T
        np.fill_diagonal(arr, 1.0)
        return cls(arr)

    # serialization

    def to_dict(self) -> dict:
        return {"n": self.n, "p": self.p.tolist()}

    @classmethod
    def from_dict(cls, doc: dict, *, require_symmetric: bool = False) -> "ProbabilityMatrix":
        try:
            n = int(doc["n"])
            p = doc["p"]
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed probability matrix document: {exc}") from exc
        pm = cls(p)
        if pm.n != n:
            raise ValueError(f"declared n={n} but matrix is {pm.n}x{pm.n}")
        if require_symmetric and not pm.is_symmetric:
            raise ValueError("direct-sharing probability matrix must be symmetric")
        return pm

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def load(cls, path, *, require_symmetric: bool = False) -> "ProbabilityMatrix":
        with open(Path(path), encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh), require_symmetric=require_symmetric)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")


@lru_cache(maxsize=None)
def pair_list(n: int) -> tuple[tuple[int, int], ...]:
    """Unordered pairs in the fixed bit order used by configuration masks."""
    return tuple(combinations(range(n), 2))


def num_configurations(n: int) -> int:
    return 1 << len(pair_list(n))


def check_full_enumeration(n: int) -> None:
    if n > MAX_FULL_ENUMERATION_USERS:
        raise CapacityError(
            f"full configuration enumeration supports n <= {MAX_FULL_ENUMERATION_USERS}, got n={n}"
        )


def check_subsets(n: int) -> None:
    if n > MAX_SUBSET_USERS:
        raise CapacityError(f"per-user subset enumeration supports n <= {MAX_SUBSET_USERS}, got n={n}")


@dataclass(frozen=True)
class Configuration:
    """One realization of the undirected encounter graph."""

    n: int
    edges: int  # bitmask over pair_list(n)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not 0 <= self.edges < num_configurations(self.n):
            raise ValueError(f"edge mask {self.edges} out of range for n={self.n}")

    @property
    def index(self) -> int:
        """1-based configuration index k."""
        return self.edges + 1

    def has_edge(self, i: int, j: int) -> bool:
        if i == j:
            return True
        a, b = min(i, j), max(i, j)
        return bool(self.edges >> pair_list(self.n).index((a, b)) & 1)

    def adjacency(self) -> np.ndarray:
        return adjacency_from_mask(self.n, self.edges)

    @classmethod
    def from_pairs(cls, n: int, pairs) -> "Configuration":
        order = {pr: b for b, pr in enumerate(pair_list(n))}
        mask = 0
        for i, j in pairs:
            if i == j:
                continue
            mask |= 1 << order[(min(i, j), max(i, j))]
        return cls(n, mask)

    @classmethod
    def empty(cls, n: int) -> "Configuration":
        return cls(n, 0)

    @classmethod
    def complete(cls, n: int) -> "Configuration":
        return cls(n, num_configurations(n) - 1)


def adjacency_from_mask(n: int, edges: int) -> np.ndarray:
    a = np.eye(n)
    for b, (i, j) in enumerate(pair_list(n)):
        if edges >> b & 1:
            a[i, j] = a[j, i] = 1.0
    return a


def iter_configurations(n: int) -> Iterator[Configuration]:
    check_full_enumeration(n)
    for mask in range(num_configurations(n)):
        yield Configuration(n, mask)


@dataclass(frozen=True)
class SelectionVector:
    """A nonempty subset of users, stored as a bitmask."""

    n: int
    members: int

    def __post_init__(self):
        if not 0 < self.members < (1 << self.n):
            raise ValueError(f"selection vector mask must be in [1, 2^{self.n} - 1], got {self.members}")

    @property
    def index(self) -> int:
        return self.members

    def __contains__(self, user: int) -> bool:
        return bool(self.members >> user & 1)

    @property
    def users(self) -> list[int]:
        return mask_to_users(self.members)

    def as_row(self) -> np.ndarray:
        return mask_to_vector(self.members, self.n)

    @classmethod
    def of(cls, n: int, users) -> "SelectionVector":
        return cls(n, users_to_mask(users))


def users_to_mask(users) -> int:
    mask = 0
    for u in users:
        mask |= 1 << int(u)
    return mask


def mask_to_users(mask: int) -> list[int]:
    out, j = [], 0
    while mask:
        if mask & 1:
            out.append(j)
        mask >>= 1
        j += 1
    return out


def mask_to_vector(mask: int, n: int) -> np.ndarray:
    return np.array([(mask >> j) & 1 for j in range(n)], dtype=float)


@lru_cache(maxsize=32)
def subset_membership(n: int) -> np.ndarray:
    """Boolean ``(2**n, n)`` table: row ``mask`` flags the members of ``mask``."""
    masks = np.arange(1 << n, dtype=np.int64)
    table = ((masks[:, None] >> np.arange(n)) & 1).astype(bool)
    table.setflags(write=False)
    return table


def _check_same_n(pm: ProbabilityMatrix, n: int) -> None:
    if pm.n != n:
        raise DimensionError(f"probability matrix has n={pm.n}, object has n={n}")


def config_probability(pm: ProbabilityMatrix, cfg: Configuration) -> float:
    """Probability of one configuration under independent Bernoulli pairs.

    Uses the upper triangle ``p[i, j], i < j``; the matrix should be symmetric.
    """
    _check_same_n(pm, cfg.n)
    prob = 1.0
    for b, (i, j) in enumerate(pair_list(cfg.n)):
        q = pm.p[i, j]
        prob *= q if cfg.edges >> b & 1 else 1.0 - q
    return prob


def config_probabilities(pm: ProbabilityMatrix) -> np.ndarray:
    """Probabilities of all ``K`` configurations, indexed by edge mask."""
    check_full_enumeration(pm.n)
    dist = np.ones(1)
    for i, j in pair_list(pm.n):
        q = pm.p[i, j]
        dist = np.concatenate([dist * (1.0 - q), dist * q])
    return dist


def exact_neighborhood_probability(pm: ProbabilityMatrix, u: int, sv: SelectionVector) -> float:
    """Probability that the neighborhood of ``u`` (itself included) is exactly ``sv``."""
    _check_same_n(pm, sv.n)
    if u not in sv:
        return 0.0
    prob = 1.0
    for j in range(pm.n):
        if j == u:
            continue
        q = pm.p[u, j]
        prob *= q if j in sv else 1.0 - q
    return prob


def neighborhood_distribution(pm: ProbabilityMatrix, u: int) -> np.ndarray:
    """Vector over all user masks of ``exact_neighborhood_probability(pm, u, mask)``."""
    check_subsets(pm.n)
    dist = np.ones(1)
    for j in range(pm.n):
        q = 1.0 if j == u else pm.p[u, j]
        dist = np.concatenate([dist * (1.0 - q), dist * q])
    return dist


def selection_weights(pm: ProbabilityMatrix) -> np.ndarray:
    """``w[mask] = sum over u in mask of Pr(u -> mask)``; entry 0 is always 0."""
    w = np.zeros(1 << pm.n)
    for u in range(pm.n):
        w += neighborhood_distribution(pm, u)
    return w


def expected_degree(pm: ProbabilityMatrix, i: int) -> float:
    """Expected number of users met by ``i``, counting ``i`` itself."""
    if not 0 <= i < pm.n:
        raise IndexError(f"user {i} out of range for n={pm.n}")
    return float(pm.p[i].sum())


def expected_degrees(pm: ProbabilityMatrix) -> np.ndarray:
    return pm.p.sum(axis=1)
