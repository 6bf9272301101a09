"""Replay caching strategies against recorded contacts.

All window-level functions take a boolean contact tensor ``adj`` of shape
``(intervals, N, N)`` (symmetric, diagonal ignored) for one deadline window.
Downloaded data is network coded, so fractions obtained from distinct caches
add up, capped at the whole file.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from coopcache.errors import DimensionError, TraceError
from coopcache.planner import CacheVector
from coopcache.probmodel import ProbabilityMatrix
from coopcache.sim.trace import IntervalizedTrace

DIRECT = "direct"
INDIRECT = "indirect"
MODES = (DIRECT, INDIRECT)


def _check_mode(mode: str) -> None:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")


def source_sets(adj: np.ndarray, mode: str) -> np.ndarray:
    """``S[..., i, j]`` is True when user ``i`` holds user ``j``'s cache at the deadline.

    ``adj`` is ``(intervals, N, N)`` or a stack ``(windows, intervals, N, N)``.
    Direct: ``j`` met ``i`` at least once.  Indirect: at the end of each
    interval a user absorbs what her contacts held at the start of it, so
    data moves at most one hop per interval.
    """
    _check_mode(mode)
    n = adj.shape[-1]
    eye = np.eye(n, dtype=bool)
    if mode == DIRECT:
        return adj.any(axis=-3) | eye
    held = np.broadcast_to(eye, adj.shape[:-3] + (n, n)).astype(np.int64)
    for l in range(adj.shape[-3]):
        a = (adj[..., l, :, :] | eye).astype(np.int64)
        held = ((a @ held) > 0).astype(np.int64)
    return held.astype(bool)


def received_fractions(adj: np.ndarray, x: np.ndarray, mode: str) -> np.ndarray:
    return np.minimum(1.0, source_sets(adj, mode) @ x)


def _as_x(x, n: int) -> np.ndarray:
    x = np.asarray(x.x if isinstance(x, CacheVector) else x, dtype=float)
    if x.size != n:
        raise DimensionError(f"cache vector has {x.size} entries, group has {n} users")
    return x


def replay_window(adj: np.ndarray, x, mode: str) -> float:
    """Realized total cost ``sum(x) + sum([1 - r_i]^+)`` for one window."""
    x = _as_x(x, adj.shape[-1])
    r = received_fractions(adj, x, mode)
    return float(x.sum() + np.maximum(0.0, 1.0 - r).sum())


def replay_windows(windows: np.ndarray, x, mode: str) -> np.ndarray:
    """``replay_window`` over a ``(windows, intervals, N, N)`` stack."""
    x = _as_x(x, windows.shape[-1])
    r = received_fractions(windows, x, mode)
    return x.sum() + np.maximum(0.0, 1.0 - r).sum(axis=-1)


def _window(itrace: IntervalizedTrace, group: Sequence[int], deadline_intervals: int, start: int) -> np.ndarray:
    if deadline_intervals < 1:
        raise ValueError("deadline must span at least one interval")
    if start + deadline_intervals > itrace.num_intervals:
        raise TraceError(
            f"deadline window [{start}, {start + deadline_intervals}) exceeds trace length {itrace.num_intervals}"
        )
    return itrace.group_adjacency(group, start, deadline_intervals)


def replay(
    itrace: IntervalizedTrace,
    group: Sequence[int],
    x,
    deadline_intervals: int,
    mode: str = DIRECT,
    start: int = 0,
) -> float:
    return replay_window(_window(itrace, group, deadline_intervals, start), x, mode)


def _components(a: np.ndarray) -> list[list[int]]:
    n = a.shape[0]
    seen = np.zeros(n, dtype=bool)
    comps = []
    for s in range(n):
        if seen[s]:
            continue
        stack, comp = [s], []
        seen[s] = True
        while stack:
            u = stack.pop()
            comp.append(u)
            for v in np.nonzero(a[u] & ~seen)[0]:
                seen[v] = True
                stack.append(int(v))
        comps.append(sorted(comp))
    return comps


def copcash_window(adj: np.ndarray, mode: str) -> float:
    """Total download cost of the cooperative-download baseline for one window.

    Each interval, the contact graph's connected components are the clusters.
    A cluster of ``m >= 2`` users with no satisfied member downloads ``1/m``
    per member and completes everyone.  Otherwise satisfied members serve the
    cluster: the whole file (indirect) or only what they personally
    downloaded (direct).  Unsatisfied users fetch what they miss at the
    deadline.
    """
    _check_mode(mode)
    L, n, _ = adj.shape
    own = np.zeros(n)  # amount each user downloaded on its own
    recv = np.zeros((n, n))  # recv[i, j]: part of j's own download that i holds
    full = np.zeros(n, dtype=bool)
    spent = 0.0
    for l in range(L):
        own0, full0 = own.copy(), full.copy()
        for comp in _components(adj[l]):
            m = len(comp)
            if m < 2:
                continue
            if not full0[comp].any():
                spent += 1.0
                own[comp] += 1.0 / m
                full[comp] = True
                continue
            if mode == INDIRECT:
                full[comp] = True
                continue
            for u in comp:
                for v in comp:
                    if v != u:
                        recv[u, v] = max(recv[u, v], own0[v])
            for u in comp:
                if own[u] + recv[u].sum() >= 1.0 - 1e-12:
                    full[u] = True
    have = np.where(full, 1.0, np.minimum(1.0, own + recv.sum(axis=1)))
    return float(spent + np.maximum(0.0, 1.0 - have).sum())


def copcash(
    itrace: IntervalizedTrace,
    group: Sequence[int],
    deadline_intervals: int,
    mode: str = DIRECT,
    start: int = 0,
) -> float:
    return copcash_window(_window(itrace, group, deadline_intervals, start), mode)


def target_user(pm: ProbabilityMatrix) -> int:
    """User with the largest ``sum_j p[i, j]``; ties go to the lowest index."""
    score = pm.p.sum(axis=1) - np.diag(pm.p)
    return int(np.flatnonzero(score >= score.max() - 1e-12)[0])


def target_set_vector(pm: ProbabilityMatrix) -> CacheVector:
    x = np.zeros(pm.n)
    x[target_user(pm)] = 1.0
    return CacheVector(x)


def target_set(
    itrace: IntervalizedTrace,
    group: Sequence[int],
    pm: ProbabilityMatrix,
    deadline_intervals: int,
    mode: str = DIRECT,
    start: int = 0,
) -> float:
    """Single-user target set: the best-connected user caches the whole file.

    ``pm[i, j]`` is read as "``i``'s data reaches ``j``"; for direct sharing
    the matrix is symmetric.
    """
    if pm.n != len(group):
        raise DimensionError("probability matrix does not match the group size")
    return replay(itrace, group, target_set_vector(pm), deadline_intervals, mode, start)
