"""Encounter traces and their discretization into sharing intervals.

Trace CSV format (UTF-8, one contact per line)::

    t_sec,user_a,user_b              # point contacts
    t_sec,user_a,user_b,kind         # kind is "begin" or "end"

User ids are nonnegative integers.  In the duration variant each ``begin``
row must be closed by a later ``end`` row for the same unordered pair;
contacts still open at the end of the file are closed at the last timestamp.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from coopcache.errors import TraceError
from coopcache.probmodel import ProbabilityMatrix


@dataclass(frozen=True, eq=False)
class EncounterTrace:
    """Undirected contacts as ``[start, end]`` spans; point contacts have ``start == end``."""

    start: np.ndarray
    end: np.ndarray
    user_a: np.ndarray
    user_b: np.ndarray
    num_users: int
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        s = np.asarray(self.start, dtype=float).ravel()
        e = np.asarray(self.end, dtype=float).ravel()
        a = np.asarray(self.user_a, dtype=np.int64).ravel()
        b = np.asarray(self.user_b, dtype=np.int64).ravel()
        if not (s.size == e.size == a.size == b.size):
            raise TraceError("contact columns have different lengths")
        if np.any(a == b):
            raise TraceError("a contact must involve two distinct users")
        if np.any(e < s):
            raise TraceError("contact ends before it starts")
        if a.size and (min(a.min(), b.min()) < 0 or max(a.max(), b.max()) >= self.num_users):
            raise TraceError(f"user ids must lie in [0, {self.num_users - 1}]")
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        order = np.lexsort((hi, lo, e, s))
        for name, arr in (("start", s), ("end", e), ("user_a", lo), ("user_b", hi)):
            arr = arr[order]
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return self.start.size

    @property
    def t_min(self) -> float:
        return float(self.metadata.get("window_start", self.start.min() if len(self) else 0.0))

    @property
    def t_max(self) -> float:
        return float(self.metadata.get("window_end", self.end.max() if len(self) else 0.0))

    @classmethod
    def from_events(cls, events: Iterable[Sequence], num_users: int | None = None, **metadata):
        """Point contacts given as ``(t, a, b)`` triples."""
        rows = list(events)
        t = np.array([r[0] for r in rows], dtype=float)
        a = np.array([r[1] for r in rows], dtype=np.int64)
        b = np.array([r[2] for r in rows], dtype=np.int64)
        if num_users is None:
            num_users = int(max(a.max(), b.max()) + 1) if rows else 0
        return cls(t, t.copy(), a, b, num_users, dict(metadata))

    @classmethod
    def from_spans(cls, spans: Iterable[Sequence], num_users: int | None = None, **metadata):
        """Duration contacts given as ``(start, end, a, b)``."""
        rows = list(spans)
        s = np.array([r[0] for r in rows], dtype=float)
        e = np.array([r[1] for r in rows], dtype=float)
        a = np.array([r[2] for r in rows], dtype=np.int64)
        b = np.array([r[3] for r in rows], dtype=np.int64)
        if num_users is None:
            num_users = int(max(a.max(), b.max()) + 1) if rows else 0
        return cls(s, e, a, b, num_users, dict(metadata))


def read_trace_csv(path, num_users: int | None = None) -> EncounterTrace:
    with open(Path(path), newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise TraceError("empty trace file") from None
        if header[:3] != ["t_sec", "user_a", "user_b"] or len(header) not in (3, 4):
            raise TraceError(f"unexpected trace header {header}")
        durations = len(header) == 4
        points, spans, open_ = [], [], {}
        last_t = -math.inf
        for lineno, row in enumerate(reader, start=2):
            if not row or not "".join(row).strip():
                continue
            if len(row) != len(header):
                raise TraceError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                t = float(row[0])
                a, b = int(row[1]), int(row[2])
            except ValueError as exc:
                raise TraceError(f"line {lineno}: {exc}") from None
            if a == b:
                raise TraceError(f"line {lineno}: self-contact for user {a}")
            last_t = max(last_t, t)
            if not durations:
                points.append((t, a, b))
                continue
            kind = row[3].strip().lower()
            key = (min(a, b), max(a, b))
            if kind == "begin":
                open_.setdefault(key, []).append(t)
            elif kind == "end":
                if not open_.get(key):
                    raise TraceError(f"line {lineno}: 'end' without matching 'begin' for pair {key}")
                t0 = open_[key].pop()
                if t < t0:
                    raise TraceError(f"line {lineno}: contact ends before it begins")
                spans.append((t0, t, a, b))
            else:
                raise TraceError(f"line {lineno}: kind must be 'begin' or 'end', got {row[3]!r}")
        for (a, b), starts in open_.items():
            for t0 in starts:
                spans.append((t0, last_t, a, b))
    rows = [(t, t, a, b) for t, a, b in points] + spans
    if num_users is None:
        num_users = max((max(r[2], r[3]) for r in rows), default=-1) + 1
    return EncounterTrace.from_spans(rows, num_users)


def write_trace_csv(trace: EncounterTrace, path) -> None:
    """Write point contacts as ``t_sec,user_a,user_b``; spans use begin/end rows."""
    spans = bool(np.any(trace.end > trace.start))
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if not spans:
            w.writerow(["t_sec", "user_a", "user_b"])
            for t, a, b in zip(trace.start, trace.user_a, trace.user_b):
                w.writerow([repr(float(t)), int(a), int(b)])
            return
        w.writerow(["t_sec", "user_a", "user_b", "kind"])
        rows = []
        for s, e, a, b in zip(trace.start, trace.end, trace.user_a, trace.user_b):
            rows.append((float(s), 0, int(a), int(b), "begin"))
            rows.append((float(e), 1, int(a), int(b), "end"))
        rows.sort()
        for t, _, a, b, kind in rows:
            w.writerow([repr(t), a, b, kind])


@dataclass(frozen=True, eq=False)
class IntervalizedTrace:
    """Per-interval contact sets; ``contacts[l]`` is a ``(m, 2)`` array of pairs ``a < b``."""

    interval_seconds: float
    contacts: tuple[np.ndarray, ...]
    num_users: int
    t0: float = 0.0

    def __post_init__(self):
        if self.interval_seconds <= 0:
            raise ValueError("interval length must be positive")
        cleaned = []
        for pairs in self.contacts:
            arr = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
            if arr.size:
                arr = np.sort(arr, axis=1)
                if np.any(arr[:, 0] == arr[:, 1]):
                    raise TraceError("self-contact inside an interval")
                if arr.max() >= self.num_users or arr.min() < 0:
                    raise TraceError("contact user id out of range")
                arr = np.unique(arr, axis=0)
            arr.setflags(write=False)
            cleaned.append(arr)
        object.__setattr__(self, "contacts", tuple(cleaned))

    @property
    def num_intervals(self) -> int:
        return len(self.contacts)

    def pair_sets(self) -> list[set[tuple[int, int]]]:
        return [set(map(tuple, c.tolist())) for c in self.contacts]

    def group_adjacency(self, group: Sequence[int], start: int = 0, length: int | None = None) -> np.ndarray:
        """Boolean ``(length, N, N)`` contact tensor restricted to ``group`` (no self loops)."""
        length = self.num_intervals - start if length is None else length
        if start < 0 or start + length > self.num_intervals:
            raise TraceError(f"intervals [{start}, {start + length}) exceed trace length {self.num_intervals}")
        index = np.full(self.num_users, -1, dtype=np.int64)
        index[np.asarray(group, dtype=np.int64)] = np.arange(len(group))
        out = np.zeros((length, len(group), len(group)), dtype=bool)
        for l in range(length):
            pairs = self.contacts[start + l]
            if not pairs.size:
                continue
            ia, ib = index[pairs[:, 0]], index[pairs[:, 1]]
            keep = (ia >= 0) & (ib >= 0)
            out[l, ia[keep], ib[keep]] = True
            out[l, ib[keep], ia[keep]] = True
        return out

    def universe_adjacency(self) -> np.ndarray:
        return self.group_adjacency(np.arange(self.num_users))

    def to_encounter_trace(self) -> EncounterTrace:
        """Point contacts at each interval's midpoint."""
        rows = []
        for l, pairs in enumerate(self.contacts):
            t = self.t0 + (l + 0.5) * self.interval_seconds
            rows.extend((t, int(a), int(b)) for a, b in pairs)
        end = self.t0 + self.num_intervals * self.interval_seconds
        return EncounterTrace.from_events(rows, self.num_users, window_start=self.t0, window_end=end)


def _merge_spans(spans: list[tuple[float, float]]) -> list[tuple[float, float]]:
    spans.sort()
    merged = [list(spans[0])]
    for s, e in spans[1:]:
        if s <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], e)
        else:
            merged.append([s, e])
    return [(s, e) for s, e in merged]


def intervalize(
    trace: EncounterTrace,
    interval_seconds: float,
    min_contact_fraction: float = 0.0,
    *,
    start: float | None = None,
    end: float | None = None,
) -> IntervalizedTrace:
    """Discretize contacts into intervals of ``interval_seconds``.

    A pair is connected in an interval when its total contact time there is at
    least ``min_contact_fraction * interval_seconds``.  With a fraction of 0 any
    contact touching the interval counts, including point contacts.
    Intervals are half-open ``[t0 + l*d, t0 + (l+1)*d)``.
    """
    if interval_seconds <= 0:
        raise ValueError("interval_seconds must be positive")
    if not 0.0 <= min_contact_fraction <= 1.0:
        raise ValueError("min_contact_fraction must lie in [0, 1]")
    t0 = trace.t_min if start is None else float(start)
    t1 = trace.t_max if end is None else float(end)
    if t1 < t0:
        raise TraceError("trace window ends before it starts")
    d = interval_seconds
    if end is None and "window_end" not in trace.metadata:
        # inferred from the last contact: include one sitting exactly on the final boundary
        L = int(math.floor((t1 - t0) / d)) + 1
    else:
        L = max(1, math.ceil((t1 - t0) / d - 1e-9))
    by_pair: dict[tuple[int, int], list[tuple[float, float]]] = {}
    for s, e, a, b in zip(trace.start, trace.end, trace.user_a, trace.user_b):
        if e < t0 or s >= t0 + L * d:
            continue
        by_pair.setdefault((int(a), int(b)), []).append((float(s), float(e)))

    per_interval: list[list[tuple[int, int]]] = [[] for _ in range(L)]
    need = min_contact_fraction * d
    for pair, spans in by_pair.items():
        covered = np.zeros(L)
        touched = np.zeros(L, dtype=bool)
        for s, e in _merge_spans(spans):
            s_c, e_c = max(s, t0), min(e, t0 + L * d)
            first = min(L - 1, int(math.floor((s_c - t0) / d)))
            last = min(L - 1, int(math.floor((e_c - t0) / d)))
            if e_c > s_c and (e_c - t0) / d == math.floor((e_c - t0) / d):
                last = max(first, last - 1)  # span ends exactly on a boundary
            for l in range(first, last + 1):
                lo, hi = t0 + l * d, t0 + (l + 1) * d
                covered[l] += max(0.0, min(e_c, hi) - max(s_c, lo))
                touched[l] = True
        if min_contact_fraction == 0.0:
            hit = touched
        else:
            hit = covered >= need - 1e-9 * d
        for l in np.nonzero(hit)[0]:
            per_interval[l].append(pair)
    contacts = tuple(np.array(p, dtype=np.int64).reshape(-1, 2) for p in per_interval)
    return IntervalizedTrace(d, contacts, trace.num_users, t0)


def generate_bernoulli_trace(
    pm: ProbabilityMatrix | Sequence[ProbabilityMatrix],
    intervals: int,
    seed: int,
    interval_seconds: float = 900.0,
) -> IntervalizedTrace:
    """Sample every pair independently in every interval.

    ``pm`` may be one matrix for all intervals or a sequence that is cycled
    (useful for time-varying layers).  Upper-triangle entries are used.
    """
    mats = [pm] if isinstance(pm, ProbabilityMatrix) else list(pm)
    if not mats:
        raise ValueError("need at least one probability matrix")
    n = mats[0].n
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, 1)
    probs = [m.p[iu, ju] for m in mats]
    contacts = []
    for l in range(intervals):
        hit = rng.random(iu.size) < probs[l % len(probs)]
        contacts.append(np.stack([iu[hit], ju[hit]], axis=1))
    return IntervalizedTrace(interval_seconds, tuple(contacts), n, 0.0)
