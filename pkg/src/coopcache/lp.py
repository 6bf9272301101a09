"""Dense two-phase simplex for ``min c.z  s.t.  G z >= h,  z >= 0``.

Every LP in this package is small (a few hundred rows at most), so the solver
keeps a full tableau in a numpy array.  Entering columns follow Dantzig's rule
until the objective stalls, after which Bland's rule takes over to rule out
cycling.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from coopcache.errors import CapacityError, LpNumericalError

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

MAX_ITERATIONS = 10**6
MAX_TABLEAU_ENTRIES = 60_000_000
STALL_THRESHOLD = 50

_PIVOT_TOL = 1e-9
_COST_TOL = 1e-10
_FEAS_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class LpProblem:
    """Minimization LP in inequality form; nonnegativity of ``z`` is implicit."""

    objective: np.ndarray
    G: np.ndarray
    h: np.ndarray
    var_names: tuple[str, ...] | None = None

    def __post_init__(self):
        c = np.asarray(self.objective, dtype=float).ravel()
        G = np.asarray(self.G, dtype=float)
        h = np.asarray(self.h, dtype=float).ravel()
        if G.size == 0:
            G = G.reshape(0, c.size)
        if G.ndim != 2 or G.shape[1] != c.size:
            raise ValueError(f"constraint matrix shape {G.shape} does not match {c.size} variables")
        if h.size != G.shape[0]:
            raise ValueError(f"{G.shape[0]} constraint rows but {h.size} bounds")
        if self.var_names is not None and len(self.var_names) != c.size:
            raise ValueError("var_names length does not match number of variables")
        object.__setattr__(self, "objective", c)
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "h", h)

    @property
    def num_vars(self) -> int:
        return self.objective.size

    @property
    def num_constraints(self) -> int:
        return self.h.size

    @property
    def constraints(self) -> list[tuple[np.ndarray, float]]:
        return [(self.G[i], float(self.h[i])) for i in range(self.num_constraints)]

    @classmethod
    def from_rows(cls, objective: Sequence[float], constraints: Sequence[tuple[Sequence[float], float]]):
        objective = np.asarray(objective, dtype=float)
        if constraints:
            G = np.array([row for row, _ in constraints], dtype=float)
            h = np.array([b for _, b in constraints], dtype=float)
        else:
            G = np.zeros((0, objective.size))
            h = np.zeros(0)
        return cls(objective, G, h)

    def is_feasible(self, z, tol: float = 1e-8) -> bool:
        z = np.asarray(z, dtype=float)
        return bool(np.all(z >= -tol) and np.all(self.G @ z >= self.h - tol))


@dataclass(frozen=True, eq=False)
class LpSolution:
    status: str
    optimum: float
    point: np.ndarray
    dual: np.ndarray | None = None
    iterations: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def is_optimal(self) -> bool:
        return self.status == OPTIMAL


class _Tableau:
    """Row-reduced tableau ``[A | b]`` with an objective row at the bottom."""

    def __init__(self, T: np.ndarray, basis: np.ndarray, max_iter: int):
        self.T = T
        self.basis = basis
        self.iterations = 0
        self.max_iter = max_iter

    def pivot(self, r: int, c: int) -> None:
        T = self.T
        T[r] /= T[r, c]
        col = T[:, c].copy()
        col[r] = 0.0
        nz = np.nonzero(np.abs(col) > 0.0)[0]
        if nz.size:
            T[nz] -= np.outer(col[nz], T[r])
        T[nz, c] = 0.0
        self.basis[r] = c

    def run(self, allowed: np.ndarray) -> str:
        """Optimize the current objective row over ``allowed`` columns."""
        T = self.T
        m = T.shape[0] - 1
        bland = False
        best = -T[-1, -1]
        stall = 0
        while True:
            if self.iterations >= self.max_iter:
                raise LpNumericalError(f"simplex exceeded {self.max_iter} iterations")
            d = T[-1, :-1]
            cand = np.nonzero(allowed & (d < -_COST_TOL))[0]
            if cand.size == 0:
                return OPTIMAL
            c = int(cand[0]) if bland else int(cand[np.argmin(d[cand])])
            col = T[:m, c]
            rows = np.nonzero(col > _PIVOT_TOL)[0]
            if rows.size == 0:
                return UNBOUNDED
            ratios = T[rows, -1] / col[rows]
            rmin = ratios.min()
            ties = rows[ratios <= rmin + 1e-12 * max(1.0, abs(rmin))]
            # lexicographic tie-break on basic variable index keeps pivoting deterministic
            r = int(ties[np.argmin(self.basis[ties])])
            self.pivot(r, c)
            self.iterations += 1
            obj = -T[-1, -1]
            if obj < best - 1e-12 * max(1.0, abs(best)):
                best = obj
                stall = 0
            else:
                stall += 1
                if stall >= STALL_THRESHOLD:
                    bland = True


def solve(lp: LpProblem, max_iter: int = MAX_ITERATIONS) -> LpSolution:
    """Solve ``lp`` and return an optimal basic solution or a failure status.

    LPs with penalty columns (see :func:`_penalty_split`) are solved through
    their bounded dual, whose tableau has one row per remaining column
    instead of one per constraint.  Everything else goes through a dense
    two-phase tableau.

    Raises :class:`LpNumericalError` if pivoting does not terminate within
    ``max_iter`` iterations.
    """
    split = _penalty_split(lp)
    if split is not None:
        sol = _solve_bounded_dual(lp, *split, max_iter=max_iter)
        if sol is not None:
            return sol
    return _solve_dense(lp, max_iter)


def _penalty_split(lp: LpProblem):
    """Split columns into penalty columns and core columns, or return None.

    A penalty column has a single positive entry and a nonnegative cost: it
    only buys slack for one row.  The split is used when at least one such
    column exists and every core column has a nonnegative cost (so the dual
    starts feasible).
    """
    G, c = lp.G, lp.objective
    if G.shape[0] == 0:
        return None
    nz = G != 0.0
    count = nz.sum(axis=0)
    single = (count == 1) & (c >= 0)
    row_of = np.argmax(nz, axis=0)
    single &= G[row_of, np.arange(G.shape[1])] > 0
    if not single.any():
        return None
    core = np.nonzero(~single)[0]
    if np.any(c[core] < 0):
        return None
    return core, np.nonzero(single)[0], row_of


def _solve_bounded_dual(lp: LpProblem, core, pen, row_of, max_iter: int) -> LpSolution | None:
    """Solve ``max h.u  s.t.  G_core' u <= c_core,  0 <= u <= ub`` by bounded simplex.

    ``ub[r]`` is the cheapest penalty price ``c_j / G[r, j]`` of row ``r``.
    The primal core values are the final reduced costs of the dual's slack
    columns; penalty columns then absorb whatever each row still lacks.
    Returns None if the recovered point fails verification.
    """
    c, G, h = lp.objective, lp.G, lp.h
    m, n = G.shape
    k = core.size
    ub = np.full(m, np.inf)
    cheapest = np.full(m, -1, dtype=np.int64)
    for j in pen:
        r = row_of[j]
        price = c[j] / G[r, j]
        if price < ub[r]:
            ub[r], cheapest[r] = price, j
    ub = np.concatenate([ub, np.full(k, np.inf)])

    # columns: u (m) then slacks (k); rows: one per core column
    W = np.hstack([G[:, core].T, np.eye(k)])
    d = np.concatenate([-h, np.zeros(k)])
    xb = c[core].astype(float).copy()
    basis = np.arange(m, m + k)
    is_basic = np.zeros(m + k, dtype=bool)
    is_basic[basis] = True
    at_upper = np.zeros(m + k, dtype=bool)
    obj = 0.0
    best, stall, bland, it = 0.0, 0, False, 0

    while True:
        if it >= max_iter:
            raise LpNumericalError(f"simplex exceeded {max_iter} iterations")
        elig = ~is_basic & np.where(at_upper, d > _COST_TOL, d < -_COST_TOL)
        cand = np.nonzero(elig)[0]
        if cand.size == 0:
            break
        j = int(cand[0]) if bland else int(cand[np.argmax(np.abs(d[cand]))])
        direction = -1.0 if at_upper[j] else 1.0
        alpha = W[:, j] * direction
        t_row, r = np.inf, -1
        if k:
            dec = alpha > _PIVOT_TOL
            inc = alpha < -_PIVOT_TOL
            ratios = np.full(k, np.inf)
            ratios[dec] = xb[dec] / alpha[dec]
            ratios[inc] = (ub[basis[inc]] - xb[inc]) / -alpha[inc]
            t_row = ratios.min()
            if np.isfinite(t_row):
                ties = np.nonzero(ratios <= t_row + 1e-12 * max(1.0, abs(t_row)))[0]
                r = int(ties[np.argmin(basis[ties])])
        t_flip = ub[j]
        if not np.isfinite(t_row) and not np.isfinite(t_flip):
            return LpSolution(INFEASIBLE, np.nan, np.full(n, np.nan), iterations=it)
        t = max(0.0, min(t_row, t_flip))
        xb -= t * alpha
        obj += d[j] * direction * t
        if t_flip < t_row:
            at_upper[j] = not at_upper[j]
        else:
            start = ub[j] if at_upper[j] else 0.0
            leaving = basis[r]
            hit_upper = alpha[r] < 0
            piv = W[r, j]
            W[r] /= piv
            col = W[:, j].copy()
            col[r] = 0.0
            rows = np.nonzero(col)[0]
            if rows.size:
                W[rows] -= np.outer(col[rows], W[r])
            d -= d[j] * W[r]
            d[j] = 0.0
            xb[r] = start + direction * t
            basis[r] = j
            is_basic[j], is_basic[leaving] = True, False
            at_upper[j] = False
            at_upper[leaving] = bool(hit_upper)
        it += 1
        if obj < best - 1e-12 * max(1.0, abs(best)):
            best, stall = obj, 0
        else:
            stall += 1
            if stall >= STALL_THRESHOLD:
                bland = True

    u = np.where(at_upper, ub, 0.0)
    u[basis] = xb
    u = u[:m]
    z = np.zeros(n)
    z[core] = np.maximum(0.0, d[m:])
    resid = h - G[:, core] @ z[core]
    short = np.nonzero(resid > 0)[0]
    if np.any(cheapest[short] < 0):
        return None
    js = cheapest[short]
    z[js] += resid[short] / G[short, js]
    z[np.abs(z) < 1e-13] = 0.0
    primal = float(c @ z)
    dual_obj = float(h @ u)
    scale = max(1.0, abs(primal))
    if not lp.is_feasible(z, tol=1e-9 * scale) or abs(primal - dual_obj) > 1e-9 * scale:
        return None
    return LpSolution(OPTIMAL, primal, z, dual=u, iterations=it, extra={"method": "bounded-dual"})


def _solve_dense(lp: LpProblem, max_iter: int) -> LpSolution:
    c, G, h = lp.objective, lp.G, lp.h
    m, n = G.shape
    if m == 0:
        if np.any(c < 0):
            return LpSolution(UNBOUNDED, -np.inf, np.zeros(n))
        return LpSolution(OPTIMAL, 0.0, np.zeros(n), dual=np.zeros(0))

    # standard form: G z - s = h, flip rows with h <= 0 so the surplus is basic.
    flip = h <= 0
    sign = np.where(flip, -1.0, 1.0)
    A = np.hstack([G * sign[:, None], -np.eye(m) * sign[:, None]])
    b = h * sign

    basis = np.full(m, -1, dtype=np.int64)
    basis[flip] = n + np.nonzero(flip)[0]

    # crash: a positive singleton structural column can start basic in its row
    need = np.nonzero(~flip)[0]
    if need.size:
        nz_per_col = np.count_nonzero(G, axis=0)
        used = set()
        for i in need:
            cols = np.nonzero((G[i] > 0) & (nz_per_col == 1))[0]
            for j in cols:
                if j not in used:
                    basis[i] = j
                    used.add(int(j))
                    break

    art_rows = np.nonzero(basis < 0)[0]
    n_art = art_rows.size
    n_tot = n + m + n_art
    if (m + 1) * (n_tot + 1) > MAX_TABLEAU_ENTRIES:
        raise CapacityError(f"LP with {m} rows and {n_tot} columns exceeds the dense tableau limit")

    T = np.zeros((m + 1, n_tot + 1))
    T[:m, : n + m] = A
    T[:m, -1] = b
    for k, i in enumerate(art_rows):
        T[i, n + m + k] = 1.0
        basis[i] = n + m + k
    # singleton-crashed rows: scale so the basic column is a unit vector
    for i in np.nonzero(basis < n)[0]:
        T[i] /= T[i, basis[i]]

    tab = _Tableau(T, basis, max_iter)

    if n_art:
        T[-1, :] = 0.0
        T[-1, n + m : n + m + n_art] = 1.0
        T[-1] -= T[art_rows].sum(axis=0)
        allowed = np.ones(n_tot, dtype=bool)
        tab.run(allowed)
        infeas = -T[-1, -1]
        if infeas > _FEAS_TOL * max(1.0, np.abs(b).max()):
            return LpSolution(INFEASIBLE, np.nan, np.full(n, np.nan), iterations=tab.iterations)
        # drive zero-level artificials out of the basis, dropping redundant rows
        keep = np.ones(m + 1, dtype=bool)
        for r in range(m):
            if tab.basis[r] >= n + m:
                row = T[r, : n + m]
                cand = np.nonzero(np.abs(row) > _PIVOT_TOL)[0]
                if cand.size:
                    tab.pivot(r, int(cand[np.argmax(np.abs(row[cand]))]))
                else:
                    keep[r] = False
        T = np.delete(T, np.s_[n + m : n + m + n_art], axis=1)
        T = T[keep]
        tab.T = T
        tab.basis = tab.basis[keep[:-1]]

    # phase 2 objective row: reduced costs c - c_B B^-1 A
    cost = np.concatenate([c, np.zeros(m)])
    T[-1, :] = 0.0
    T[-1, : n + m] = cost
    cb = cost[tab.basis]
    T[-1] -= cb @ T[:-1]
    status = tab.run(np.ones(n + m, dtype=bool))
    if status == UNBOUNDED:
        return LpSolution(UNBOUNDED, -np.inf, np.full(n, np.nan), iterations=tab.iterations)

    full = np.zeros(n + m)
    full[tab.basis] = T[:-1, -1]
    z = full[:n].copy()
    z[np.abs(z) < 1e-13] = 0.0
    dual = T[-1, n : n + m].copy()
    return LpSolution(OPTIMAL, float(c @ z), z, dual=dual, iterations=tab.iterations)
