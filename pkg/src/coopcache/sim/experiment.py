"""Trace-driven experiments: group selection, planning, replay and reporting."""

from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from itertools import combinations
from math import comb
from pathlib import Path
from typing import Sequence

import numpy as np

from coopcache.errors import InsufficientGroupsError, TraceError
from coopcache.heuristics import algcov, iad, psc
from coopcache.indirect import LayeredModel, effective_direct_model
from coopcache.planner import CacheVector, build_reduced_lp, solve_lp_plan
from coopcache.probmodel import ProbabilityMatrix
from coopcache.sim.replay import DIRECT, INDIRECT, MODES, copcash_window, replay_windows, target_set_vector
from coopcache.sim.trace import IntervalizedTrace

log = logging.getLogger(__name__)

STRATEGIES = ("full-download", "optimal", "algcov", "iad", "psc", "1/N", "copcash", "target-set")
GROUP_TYPES = ("symmetric", "asymmetric", "any")

# enumerate every candidate group below this count, sample above it
ENUMERATION_LIMIT = 200_000
SAMPLING_ATTEMPTS_PER_GROUP = 2_000


@dataclass
class ExperimentConfig:
    group_size: int = 6
    deadlines: list[float] = field(default_factory=lambda: [3600.0, 7200.0, 14400.0])
    group_trials: int = 50
    th_asym: float = 1.3
    th_sym: float = 0.2
    th_max: float = 1.2
    interval_seconds: float = 900.0
    min_contact_fraction: float = 0.0
    modes: list[str] = field(default_factory=lambda: [DIRECT])
    strategies: list[str] = field(default_factory=lambda: list(STRATEGIES))
    group_type: str = "symmetric"
    seed: int = 0
    selection_deadline: float | None = None
    # experiment window in trace seconds; the end defaults to the last contact
    window_start: float = 0.0
    window_end: float | None = None

    def __post_init__(self):
        if isinstance(self.modes, str):
            self.modes = [self.modes]
        self.deadlines = [float(d) for d in self.deadlines]
        self.validate()

    def validate(self) -> None:
        if self.group_size < 1:
            raise ValueError("group_size must be >= 1")
        if self.group_trials < 1:
            raise ValueError("group_trials must be >= 1")
        if not self.th_sym < self.th_asym:
            raise ValueError("th_sym must be smaller than th_asym")
        if self.interval_seconds <= 0:
            raise ValueError("interval_seconds must be positive")
        if not self.deadlines:
            raise ValueError("at least one deadline is required")
        for d in self.deadlines + ([self.selection_deadline] if self.selection_deadline else []):
            k = d / self.interval_seconds
            if d <= 0 or abs(k - round(k)) > 1e-9:
                raise ValueError(f"deadline {d} is not a positive multiple of the interval length")
        for m in self.modes:
            if m not in MODES:
                raise ValueError(f"unknown sharing mode {m!r}")
        for s in self.strategies:
            if s not in STRATEGIES:
                raise ValueError(f"unknown strategy {s!r}; choose from {STRATEGIES}")
        if self.window_end is not None and self.window_end <= self.window_start:
            raise ValueError("window_end must be after window_start")
        if self.group_type not in GROUP_TYPES:
            raise ValueError(f"group_type must be one of {GROUP_TYPES}")

    def deadline_intervals(self, deadline: float) -> int:
        return int(round(deadline / self.interval_seconds))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        if "mode" in doc and "modes" not in doc:
            doc["modes"] = doc.pop("mode")
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(Path(path), encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")


def window_starts(itrace: IntervalizedTrace, deadline_intervals: int) -> list[int]:
    """Start intervals of the complete, non-overlapping deadline windows."""
    count = itrace.num_intervals // deadline_intervals
    return [k * deadline_intervals for k in range(count)]


def _window_tensor(itrace: IntervalizedTrace, group: Sequence[int], deadline_intervals: int) -> np.ndarray:
    """``(windows, intervals, N, N)`` contacts of ``group`` over all deadline windows."""
    starts = window_starts(itrace, deadline_intervals)
    if not starts:
        raise TraceError(
            f"trace has {itrace.num_intervals} intervals, fewer than one deadline of {deadline_intervals}"
        )
    adj = itrace.group_adjacency(group, 0, len(starts) * deadline_intervals)
    return adj.reshape(len(starts), deadline_intervals, len(group), len(group))


def estimate_probabilities(
    itrace: IntervalizedTrace, group: Sequence[int], deadline_intervals: int
) -> ProbabilityMatrix:
    """Fraction of deadline windows in which each pair meets at least once."""
    w = _window_tensor(itrace, group, deadline_intervals)
    p = w.any(axis=1).mean(axis=0)
    np.fill_diagonal(p, 1.0)
    return ProbabilityMatrix(p)


def estimate_layered(itrace: IntervalizedTrace, group: Sequence[int], deadline_intervals: int) -> LayeredModel:
    """Per-interval meeting frequencies, position ``l`` within the window as layer ``l``."""
    w = _window_tensor(itrace, group, deadline_intervals)
    layers = []
    for l in range(deadline_intervals):
        p = w[:, l].mean(axis=0)
        np.fill_diagonal(p, 1.0)
        layers.append(ProbabilityMatrix(p))
    return LayeredModel(tuple(layers))


def expectation_deviation(pm: ProbabilityMatrix, group: Sequence[int] | None = None) -> float:
    """Spread ``max E(C_i) - min E(C_i)`` of expected encounter counts within a group."""
    idx = np.arange(pm.n) if group is None else np.asarray(group, dtype=np.int64)
    if idx.size == 0:
        raise ValueError("group must be nonempty")
    deg = pm.p[np.ix_(idx, idx)].sum(axis=1)
    return float(deg.max() - deg.min())


def _qualifies(sub: np.ndarray, cfg: ExperimentConfig) -> bool:
    deg = sub.sum(axis=1)
    ed = deg.max() - deg.min()
    if cfg.group_type == "asymmetric":
        return ed >= cfg.th_asym
    if cfg.group_type == "symmetric":
        return ed <= cfg.th_sym and deg.max() >= cfg.th_max
    return True


def select_groups(itrace: IntervalizedTrace, cfg: ExperimentConfig, count: int | None = None) -> list[tuple[int, ...]]:
    """Draw ``count`` distinct groups meeting the configured ED criterion.

    Probabilities for the criterion are estimated over the whole universe
    with windows of ``cfg.selection_deadline`` (default: the first deadline).
    """
    count = cfg.group_trials if count is None else count
    n, U = cfg.group_size, itrace.num_users
    if U < n:
        raise InsufficientGroupsError(0, count, f"universe has {U} users, group size is {n}")
    sel = cfg.selection_deadline or cfg.deadlines[0]
    pm = estimate_probabilities(itrace, range(U), cfg.deadline_intervals(sel)).p
    rng = np.random.default_rng([cfg.seed, 0x5E1EC7])
    crit = f"group_type={cfg.group_type}"

    if comb(U, n) <= ENUMERATION_LIMIT:
        found = [g for g in combinations(range(U), n) if _qualifies(pm[np.ix_(g, g)], cfg)]
        if len(found) < count:
            raise InsufficientGroupsError(len(found), count, crit)
        pick = rng.choice(len(found), size=count, replace=False)
        return [found[i] for i in pick]

    chosen: dict[tuple[int, ...], None] = {}
    for _ in range(SAMPLING_ATTEMPTS_PER_GROUP * count):
        g = tuple(sorted(rng.choice(U, size=n, replace=False).tolist()))
        if g not in chosen and _qualifies(pm[np.ix_(g, g)], cfg):
            chosen[g] = None
            if len(chosen) == count:
                return list(chosen)
    raise InsufficientGroupsError(len(chosen), count, crit + " (sampled)")


@dataclass(frozen=True)
class CostRow:
    strategy: str
    deadline_sec: float
    mode: str
    mean_cost: float
    stderr: float
    trials: int


@dataclass
class CostReport:
    rows: list[CostRow]
    groups: list[tuple[int, ...]] = field(default_factory=list)

    HEADER = ("strategy", "deadline_sec", "mode", "mean_cost", "stderr", "trials")

    def get(self, strategy: str, deadline_sec: float, mode: str) -> CostRow:
        for r in self.rows:
            if r.strategy == strategy and r.mode == mode and abs(r.deadline_sec - deadline_sec) < 1e-9:
                return r
        raise KeyError((strategy, deadline_sec, mode))

    def to_csv_string(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.HEADER)
        for r in self.rows:
            w.writerow([r.strategy, repr(r.deadline_sec), r.mode, repr(r.mean_cost), repr(r.stderr), r.trials])
        return buf.getvalue()

    def write_csv(self, path) -> None:
        Path(path).write_text(self.to_csv_string(), encoding="utf-8")

    @classmethod
    def read_csv(cls, path) -> "CostReport":
        rows = []
        with open(Path(path), newline="", encoding="utf-8") as fh:
            for rec in csv.DictReader(fh):
                rows.append(
                    CostRow(
                        rec["strategy"],
                        float(rec["deadline_sec"]),
                        rec["mode"],
                        float(rec["mean_cost"]),
                        float(rec["stderr"]),
                        int(rec["trials"]),
                    )
                )
        return cls(rows)


def plan_vectors(
    direct_pm: ProbabilityMatrix,
    mode: str,
    strategies: Sequence[str],
    layered: LayeredModel | None = None,
) -> dict[str, CacheVector]:
    """Cache vectors for every planned strategy of one group and deadline."""
    n = direct_pm.n
    if mode == INDIRECT:
        if layered is None:
            raise ValueError("indirect planning needs a layered model")
        eff = effective_direct_model(layered)
        cover, reach, weights = eff.coverage, eff.paths, eff.weights
    else:
        cover, reach, weights = direct_pm, direct_pm, None
    out = {}
    for s in strategies:
        if s == "full-download":
            out[s] = CacheVector(np.ones(n))
        elif s == "1/N":
            out[s] = CacheVector.uniform(n, 1.0 / n)
        elif s == "optimal":
            lp = build_reduced_lp(cover) if weights is None else build_reduced_lp(n, weights)
            out[s] = solve_lp_plan(lp, n)[0]
        elif s == "algcov":
            out[s] = algcov(cover).x
        elif s == "iad":
            out[s] = iad(cover).x
        elif s == "psc":
            out[s] = psc(cover).x
        elif s == "target-set":
            out[s] = target_set_vector(reach)
    return out


def _run_group(args) -> dict[tuple[str, float, str], np.ndarray]:
    cfg, itrace, group = args
    out = {}
    for deadline in cfg.deadlines:
        D = cfg.deadline_intervals(deadline)
        windows = _window_tensor(itrace, group, D)
        pm = estimate_probabilities(itrace, group, D)
        for mode in cfg.modes:
            layered = estimate_layered(itrace, group, D) if mode == INDIRECT else None
            vectors = plan_vectors(pm, mode, cfg.strategies, layered)
            for s in cfg.strategies:
                if s == "copcash":
                    costs = np.array([copcash_window(w, mode) for w in windows])
                else:
                    costs = replay_windows(windows, vectors[s], mode)
                out[(s, deadline, mode)] = costs
    return out


def run_experiment(cfg: ExperimentConfig, itrace: IntervalizedTrace, jobs: int = 1) -> CostReport:
    """Average realized cost per strategy, deadline and mode over group and deadline trials.

    Results do not depend on ``jobs``: groups are drawn before any work is
    distributed and per-group results are combined in group order.
    """
    if abs(itrace.interval_seconds - cfg.interval_seconds) > 1e-9:
        raise ValueError("trace interval length does not match the configuration")
    groups = select_groups(itrace, cfg)
    tasks = [(cfg, itrace, g) for g in groups]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_group, tasks))
    else:
        results = [_run_group(t) for t in tasks]

    rows = []
    for mode in cfg.modes:
        for s in cfg.strategies:
            for deadline in cfg.deadlines:
                try:
                    costs = np.concatenate([r[(s, deadline, mode)] for r in results])
                except KeyError as exc:
                    raise RuntimeError(f"missing result for {exc}") from None
                se = float(costs.std(ddof=1) / np.sqrt(costs.size)) if costs.size > 1 else 0.0
                rows.append(CostRow(s, deadline, mode, float(costs.mean()), se, int(costs.size)))
    log.info("experiment finished: %d groups, %d rows", len(groups), len(rows))
    return CostReport(rows, groups)
