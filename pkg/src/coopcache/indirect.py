"""Indirect sharing over a time-expanded encounter graph.

The sharing window is split into ``T`` segments, each with its own pairwise
probability matrix.  Within a segment a user can pick up data only from users
met in that segment (one hop), but data received in earlier segments is
passed on later, so the order of encounters matters.

``multi_step`` evaluates the layered recursion with one step at
the *last* segment, then recursion on the earlier block.  The set it grows is
therefore the set of users whose caches reach ``s_in`` by the end of the
window (a reverse-time sweep).  For the planner that is exactly what is
needed: user ``u``'s post-sharing demand depends on which caches reach ``u``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from coopcache.errors import CapacityError
from coopcache.probmodel import ProbabilityMatrix, users_to_mask

MAX_INDIRECT_USERS = 12
MAX_SUBSET_TERMS = 1 << 20


@dataclass(frozen=True, eq=False)
class LayeredModel:
    """Per-segment probability matrices, earliest segment first."""

    layers: tuple[ProbabilityMatrix, ...]

    def __post_init__(self):
        layers = tuple(l if isinstance(l, ProbabilityMatrix) else ProbabilityMatrix(l) for l in self.layers)
        if not layers:
            raise ValueError("a layered model needs at least one segment")
        if len({l.n for l in layers}) != 1:
            raise ValueError("all layers must have the same user count")
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "_memo", {})
        object.__setattr__(self, "_transitions", {})

    @property
    def n(self) -> int:
        return self.layers[0].n

    @property
    def T(self) -> int:
        return len(self.layers)

    @classmethod
    def repeated(cls, pm: ProbabilityMatrix, T: int) -> "LayeredModel":
        return cls(tuple([pm] * T))

    def to_dict(self) -> dict:
        return {"n": self.n, "layers": [l.p.tolist() for l in self.layers]}

    @classmethod
    def from_dict(cls, doc: dict) -> "LayeredModel":
        model = cls(tuple(ProbabilityMatrix(l) for l in doc["layers"]))
        if "n" in doc and int(doc["n"]) != model.n:
            raise ValueError(f"declared n={doc['n']} but layers are {model.n}x{model.n}")
        return model

    @classmethod
    def load(cls, path) -> "LayeredModel":
        with open(Path(path), encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _as_mask(s, n: int) -> int:
    mask = s if isinstance(s, (int, np.integer)) else users_to_mask(s)
    mask = int(mask)
    if mask < 0 or mask >= 1 << n:
        raise ValueError(f"user set {s!r} out of range for n={n}")
    return mask


def _check_segment(model: LayeredModel, ell: int) -> None:
    if not 0 <= ell < model.T:
        raise ValueError(f"segment {ell} out of range [0, {model.T - 1}]")


def _reach_probs(p: np.ndarray, s_in: int) -> np.ndarray:
    """Probability each user meets at least one member of ``s_in`` in one segment."""
    n = p.shape[0]
    members = np.array([(s_in >> d) & 1 for d in range(n)], dtype=bool)
    miss = np.prod(np.where(members[None, :], 1.0 - p, 1.0), axis=1)
    return 1.0 - miss


def single_step(model: LayeredModel, s_in, s_out, ell: int) -> float:
    """Probability that one segment grows ``s_in`` into exactly ``s_out``."""
    _check_segment(model, ell)
    n = model.n
    a, b = _as_mask(s_in, n), _as_mask(s_out, n)
    if a & ~b:
        return 0.0
    q = _reach_probs(model.layers[ell].p, a)
    prob = 1.0
    for c in range(n):
        if a >> c & 1:
            continue
        prob *= q[c] if b >> c & 1 else 1.0 - q[c]
    return float(prob)


def _subsets(mask: int):
    sub = mask
    while True:
        yield sub
        if sub == 0:
            return
        sub = (sub - 1) & mask


def multi_step(model: LayeredModel, s_in, s_out, ell: int, steps: int) -> float:
    """Probability for ``steps`` segments starting at ``ell`` (memoized recursion)."""
    n = model.n
    a, b = _as_mask(s_in, n), _as_mask(s_out, n)
    if steps < 1 or ell < 0 or ell + steps > model.T:
        raise ValueError(f"need 1 <= steps and ell + steps <= T={model.T}")
    if 1 << bin(b & ~a).count("1") > MAX_SUBSET_TERMS:
        raise CapacityError("too many subset terms in the layered recursion")
    return _multi(model, a, b, ell, steps)


def _multi(model: LayeredModel, a: int, b: int, ell: int, steps: int) -> float:
    if a & ~b:
        return 0.0
    if steps == 1:
        return single_step(model, a, b, ell)
    key = (a, b, ell, steps)
    memo = model._memo
    if key in memo:
        return memo[key]
    last = ell + steps - 1
    total = 0.0
    for u in _subsets(b & ~a):
        head = single_step(model, a, a | u, last)
        if head:
            total += head * _multi(model, a | u, b, ell, steps - 1)
    memo[key] = total
    return total


def transition_matrix(model: LayeredModel, ell: int) -> np.ndarray:
    """``M[s, s2] = single_step(model, s, s2, ell)`` for all user masks."""
    _check_segment(model, ell)
    if ell in model._transitions:
        return model._transitions[ell]
    n = model.n
    if n > MAX_INDIRECT_USERS:
        raise CapacityError(f"layered model supports n <= {MAX_INDIRECT_USERS}, got n={n}")
    p = model.layers[ell].p
    size = 1 << n
    M = np.zeros((size, size))
    for s in range(size):
        q = _reach_probs(p, s)
        dist = np.ones(1)
        for c in range(n):
            qc = 1.0 if s >> c & 1 else q[c]
            dist = np.concatenate([dist * (1.0 - qc), dist * qc])
        M[s] = dist
    M.setflags(write=False)
    model._transitions[ell] = M
    return M


def reach_matrix(model: LayeredModel, ell: int = 0, steps: int | None = None) -> np.ndarray:
    """All ``multi_step`` values at once: ``R[s_in, s_out]``."""
    steps = model.T - ell if steps is None else steps
    if steps < 1 or ell + steps > model.T:
        raise ValueError(f"need 1 <= steps and ell + steps <= T={model.T}")
    R = transition_matrix(model, ell)
    for seg in range(ell + 1, ell + steps):
        R = transition_matrix(model, seg) @ R
    return R


@dataclass(frozen=True, eq=False)
class EffectiveModel:
    """Direct-sharing stand-in for an indirect model.

    ``paths[i, j]`` is the probability that user ``i``'s cache reaches user
    ``j`` by the end of the window.  ``weights`` are the reduced-LP weights
    (indexed by user mask).  ``coverage`` is the receive-oriented matrix
    (``paths`` transposed) expected by the planner and the heuristics.
    """

    paths: ProbabilityMatrix
    weights: np.ndarray

    @property
    def coverage(self) -> ProbabilityMatrix:
        return ProbabilityMatrix(self.paths.p.T)

    def __iter__(self):
        return iter((self.paths, self.weights))


def effective_direct_model(model: LayeredModel) -> EffectiveModel:
    n = model.n
    R = reach_matrix(model)
    size = 1 << n
    masks = np.arange(size)
    member = ((masks[:, None] >> np.arange(n)) & 1).astype(bool)
    paths = np.empty((n, n))
    weights = np.zeros(size)
    for j in range(n):
        row = R[1 << j]
        # Pr(user i is among the sources that reach j)
        paths[:, j] = row @ member
        weights += np.where(member[:, j], row, 0.0)
    paths = np.clip(paths, 0.0, 1.0)
    np.fill_diagonal(paths, 1.0)
    return EffectiveModel(ProbabilityMatrix(paths), weights)
