"""Finite linear programming core for the multimarginal solver.

The discrete coupling problem is an equality-form LP: one variable per
N-tuple of support cells, one mass-balance row per (marginal, cell) pair.
The rows are redundant (each marginal's rows sum to the same total), so
for every marginal after the first the row of the last support cell is
dropped; the dropped constraints are implied and their dual values are
zero by convention.

The engine is a revised simplex with an explicit basis inverse, rank-one
updates, periodic refactorization, and Bland's rule as a fallback once
the objective stalls on degenerate pivots.  Entering columns come from a
candidate queue refreshed by full deterministic scans (partial pricing);
optimality is always confirmed by a full scan.  When the cost of the
coincident tuple (j, ..., j) is finite, the diagonal coupling supplies a
feasible starting basis and phase 1 is skipped; otherwise a two-phase
start with artificial columns is used.  Artificial columns carry stable
negative ids so the column pool can grow between re-optimizations
without renumbering; a zero-level basic artificial on a row pins that
row's dual to zero, which silently neutralizes any residual redundancy
in a restricted pool.

Column generation prices every support tuple against the current duals
in vectorized two-dimensional slabs and injects the first violators in
enumeration order.  An empty pricing round is an unconditional
optimality certificate because the scan is exhaustive, not sampled.

The dual returned for the coupling problem is refined after optimality:
among all dual solutions tight on the (permutation-closed) optimal
support, the minimum-norm one is selected when it stays feasible, which
makes the reported potentials independent of arbitrary pivot-order and
dropped-row choices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import permutations, product as iter_product

import numpy as np

from .cost import CostModel
from .errors import InsufficientSupport, NumericalBreakdown
from .measure import DiscreteMeasure
from .transport import (
    PotentialVector,
    TransportPlan,
    _support_recip,
    max_dual_excess,
    plan_cost,
)

_PIVOT_TOL = 1e-10
_FEAS_TOL = 1e-9
_ZERO_TOL = 1e-11
_REFACTOR_EVERY = 100
_SMALL_PIVOT = 1e-6
_STALL_LIMIT = 256
_MAX_ITERS = 500_000
_CANDIDATES = 1024
_SCAN_CHUNK = 32_768

# column pools beyond this size start from the diagonal coupling instead
# of the full product support
_POOL_CAP = 1_100_000
_PRICE_BATCH = 50
_MAX_ROUNDS = 2_000


@dataclass(frozen=True)
class StandardLP:
    """min c.x subject to A x = b, x >= 0, with dense data."""

    c: np.ndarray
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        c = np.asarray(self.c, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if A.ndim != 2 or c.ndim != 1 or b.ndim != 1:
            raise ValueError("A must be a matrix, c and b vectors")
        if A.shape != (b.size, c.size):
            raise ValueError(
                f"shape mismatch: A is {A.shape}, expected ({b.size}, {c.size})"
            )
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "b", b)


@dataclass
class LPSolution:
    """Outcome of one LP solve.

    status is 'optimal', 'infeasible', or 'unbounded'.  primal maps column
    ids to values (basic columns only).  dual is the row multiplier vector.
    certificate holds a Farkas vector y (y.b > 0, A^T y <= tol) when
    infeasible, or an unbounded ray as a column-id map when unbounded.
    """

    status: str
    primal: dict[int, float]
    dual: np.ndarray
    objective_value: float
    certificate: object = None


def _top_violators(red: np.ndarray, tol: float, topk: int) -> np.ndarray:
    """Ids of the topk most negative entries below -tol, most negative
    first, ties broken by id; deterministic."""
    hits = np.flatnonzero(red < -tol)
    if hits.size == 0:
        return hits
    if hits.size > topk:
        part = hits[np.argpartition(red[hits], topk - 1)[:topk]]
    else:
        part = hits
    return part[np.lexsort((part, red[part]))]


class _DenseColumns:
    """Column provider backed by an explicit matrix."""

    def __init__(self, A: np.ndarray, c: np.ndarray):
        self.A = A
        self.c = c
        self._y = None

    def ncols(self) -> int:
        return self.c.size

    def column(self, j: int) -> np.ndarray:
        return self.A[:, j]

    def cost(self, j: int) -> float:
        return float(self.c[j])

    def max_abs_cost(self) -> float:
        return float(np.max(np.abs(self.c))) if self.c.size else 0.0

    def begin_iteration(self, y: np.ndarray) -> None:
        self._y = y

    def _reduced(self, phase: int) -> np.ndarray:
        red = -(self._y @ self.A)
        if phase == 2:
            red = self.c + red
        return red

    def reduced_for(self, phase: int, ids: np.ndarray) -> np.ndarray:
        red = -(self._y @ self.A[:, ids])
        if phase == 2:
            red = self.c[ids] + red
        return red

    def full_scan(self, phase, tol, topk, exclude) -> np.ndarray:
        red = self._reduced(phase)
        for j in exclude:
            red[j] = 0.0
        return _top_violators(red, tol, topk)

    def entering_bland(self, phase, tol, exclude):
        red = self._reduced(phase)
        for j in exclude:
            red[j] = 0.0
        hits = np.flatnonzero(red < -tol)
        return int(hits[0]) if hits.size else None

    def first_nonzero(self, w: np.ndarray, tol: float, exclude: set[int]):
        vals = w @ self.A
        for j in np.flatnonzero(np.abs(vals) > tol):
            if int(j) not in exclude:
                return int(j)
        return None


class _TupleColumns:
    """Columns indexed by N-tuples of support-cell positions.

    Stores the pool as an integer array and evaluates costs, reduced
    costs, and row incidences by gathers instead of materializing the
    constraint matrix.  Rows: marginal 0 keeps all m cells, marginals
    1..N-1 drop their last cell.
    """

    def __init__(self, m: int, n_marginals: int, cost_eval, pool: np.ndarray):
        self.m = m
        self.n = n_marginals
        self.cost_eval = cost_eval
        self.nrows = m + (n_marginals - 1) * (m - 1)
        self.pool = np.asarray(pool, dtype=np.int64).reshape(-1, n_marginals)
        self.pool_index = {
            tuple(int(v) for v in row): i for i, row in enumerate(self.pool)
        }
        self.costs = np.asarray(cost_eval(self.pool), dtype=float)
        self._u = None

    def ncols(self) -> int:
        return self.pool.shape[0]

    def row_of(self, slot: int, cell_idx: int) -> int:
        if slot == 0:
            return cell_idx
        if cell_idx == self.m - 1:
            return -1
        return self.m + (slot - 1) * (self.m - 1) + cell_idx

    def column(self, j: int) -> np.ndarray:
        col = np.zeros(self.nrows)
        for slot, idx in enumerate(self.pool[j]):
            r = self.row_of(slot, int(idx))
            if r >= 0:
                col[r] += 1.0
        return col

    def cost(self, j: int) -> float:
        return float(self.costs[j])

    def max_abs_cost(self) -> float:
        finite = self.costs[np.isfinite(self.costs)]
        return float(np.max(np.abs(finite))) if finite.size else 0.0

    def _u_matrix(self, y: np.ndarray) -> np.ndarray:
        u = np.zeros((self.n, self.m))
        u[0] = y[: self.m]
        for i in range(1, self.n):
            lo = self.m + (i - 1) * (self.m - 1)
            u[i, : self.m - 1] = y[lo : lo + self.m - 1]
        return u

    def _gather(self, u: np.ndarray, pool: np.ndarray) -> np.ndarray:
        used = u[0].take(pool[:, 0])
        for i in range(1, self.n):
            used += u[i].take(pool[:, i])
        return used

    def begin_iteration(self, y: np.ndarray) -> None:
        self._u = self._u_matrix(y)

    def _reduced_slice(self, phase: int, lo: int, hi: int) -> np.ndarray:
        used = self._gather(self._u, self.pool[lo:hi])
        return self.costs[lo:hi] - used if phase == 2 else -used

    def reduced_for(self, phase: int, ids: np.ndarray) -> np.ndarray:
        used = self._gather(self._u, self.pool[ids])
        return self.costs[ids] - used if phase == 2 else -used

    def full_scan(self, phase, tol, topk, exclude) -> np.ndarray:
        red = self._reduced_slice(phase, 0, self.pool.shape[0])
        if exclude:
            red[np.fromiter(exclude, dtype=np.int64)] = 0.0
        return _top_violators(red, tol, topk)

    def entering_bland(self, phase, tol, exclude):
        # chunked scan in id order; the first violating chunk already
        # contains the globally smallest violating id
        P = self.pool.shape[0]
        for lo in range(0, P, _SCAN_CHUNK):
            hi = min(lo + _SCAN_CHUNK, P)
            red = self._reduced_slice(phase, lo, hi)
            hits = np.flatnonzero(red < -tol)
            for h in hits:
                j = lo + int(h)
                if j not in exclude:
                    return j
        return None

    def first_nonzero(self, w: np.ndarray, tol: float, exclude: set[int]):
        vals = self._gather(self._u_matrix(w), self.pool)
        for j in np.flatnonzero(np.abs(vals) > tol):
            if int(j) not in exclude:
                return int(j)
        return None

    def add_tuples(self, tuples) -> int:
        fresh = [t for t in tuples if t not in self.pool_index]
        if not fresh:
            return 0
        base = self.pool.shape[0]
        block = np.array(fresh, dtype=np.int64).reshape(-1, self.n)
        self.pool = np.concatenate([self.pool, block], axis=0)
        self.costs = np.concatenate([self.costs, np.asarray(self.cost_eval(block), dtype=float)])
        for i, t in enumerate(fresh):
            self.pool_index[t] = base + i
        return len(fresh)


class _PairCost:
    """Tuple cost as a sum of reciprocal pair interactions."""

    def __init__(self, recip: np.ndarray, n_marginals: int):
        self.recip = recip
        self.n = n_marginals

    def __call__(self, pool: np.ndarray) -> np.ndarray:
        total = np.zeros(pool.shape[0])
        for i in range(self.n):
            for j in range(i + 1, self.n):
                total += self.recip[pool[:, i], pool[:, j]]
        return total

    def slab(self, prefix: tuple[int, ...]) -> np.ndarray:
        m = self.recip.shape[0]
        const = 0.0
        vec = np.zeros(m)
        for a in range(len(prefix)):
            vec += self.recip[prefix[a], :]
            for b in range(a + 1, len(prefix)):
                const += self.recip[prefix[a], prefix[b]]
        return const + vec[:, None] + vec[None, :] + self.recip

    def max_finite(self) -> float:
        finite = self.recip[np.isfinite(self.recip)]
        peak = float(finite.max()) if finite.size else 0.0
        return peak * self.n * (self.n - 1) / 2.0


class _TensorCost:
    """Tuple cost read off a dense N-way tensor."""

    def __init__(self, tensor: np.ndarray):
        self.tensor = tensor
        self.n = tensor.ndim

    def __call__(self, pool: np.ndarray) -> np.ndarray:
        return self.tensor[tuple(pool[:, i] for i in range(self.n))].astype(float)

    def slab(self, prefix: tuple[int, ...]) -> np.ndarray:
        return self.tensor[prefix]

    def max_finite(self) -> float:
        finite = self.tensor[np.isfinite(self.tensor)]
        return float(np.max(np.abs(finite))) if finite.size else 0.0


def price_columns(
    u_mat: np.ndarray,
    cost_eval,
    *,
    tol: float,
    skip=None,
    batch: int = _PRICE_BATCH,
) -> list[tuple[int, ...]]:
    """Exhaustively scan all m^N tuples for dual violations.

    Returns the first tuples in enumeration (lexicographic) order, at
    most batch of them, whose dual sum exceeds the cost by more than tol,
    excluding those in skip.  An empty return certifies dual feasibility
    over the whole tuple space, since every slab is inspected.
    """
    n, m = u_mat.shape
    skip = skip if skip is not None else set()
    found: list[tuple[int, ...]] = []
    tail = u_mat[n - 2][:, None] + u_mat[n - 1][None, :]
    for prefix in iter_product(range(m), repeat=n - 2):
        u_pre = 0.0
        for a, pa in enumerate(prefix):
            u_pre += u_mat[a, pa]
        excess = (u_pre + tail) - cost_eval.slab(prefix)
        hits = np.argwhere(excess > tol)
        for i, j in hits:
            t = prefix + (int(i), int(j))
            if t not in skip:
                found.append(t)
                if len(found) >= batch:
                    return found
    return found


class _Unbounded(Exception):
    def __init__(self, ray):
        self.ray = ray


class _LostFeasibility(Exception):
    """Raised when a fresh factorization reveals that accumulated update
    error pushed the basic solution out of the feasible region."""


class _SimplexEngine:
    """Revised simplex over an abstract column provider.

    Rows with negative right-hand side are sign-flipped internally;
    providers always see raw-space row vectors.  Artificial ids are
    -(row + 1), never renumbered, never re-entered.  An initial_basis of
    column ids (real or artificial, one per row) may be supplied; it must
    be nonsingular and primal feasible, and rows whose basic artificial
    sits at a positive level still go through phase 1.
    """

    def __init__(
        self,
        provider,
        b: np.ndarray,
        *,
        feas_tol: float = _FEAS_TOL,
        pivot_tol: float = _PIVOT_TOL,
        max_iters: int = _MAX_ITERS,
        initial_basis=None,
    ):
        self.prov = provider
        b = np.asarray(b, dtype=float)
        self.k = b.size
        self.row_sign = np.where(b < 0.0, -1.0, 1.0)
        self.b = self.row_sign * b
        self.feas_tol = feas_tol
        self.pivot_tol = pivot_tol
        self.max_iters = max_iters
        if initial_basis is None:
            self.basis = [-(r + 1) for r in range(self.k)]
        else:
            if len(initial_basis) != self.k:
                raise ValueError("initial basis must have one column per row")
            self.basis = [int(j) for j in initial_basis]
        self.basis_arr = np.array(self.basis, dtype=np.int64)
        self.phase = 1
        self.cB = np.zeros(self.k)
        self.refactor_every = _REFACTOR_EVERY
        try:
            self._refactor()
        except _LostFeasibility as exc:
            raise NumericalBreakdown("initial basis is primal infeasible") from exc
        art_mass = float(self.xB[self.basis_arr < 0].sum()) if self.k else 0.0
        self.phase1_done = art_mass <= feas_tol * (1.0 + float(np.abs(self.b).max(initial=0.0)))
        self.pivots = 0

    def _column(self, j: int) -> np.ndarray:
        if j < 0:
            col = np.zeros(self.k)
            col[-j - 1] = 1.0
            return col
        return self.row_sign * self.prov.column(j)

    def _cost(self, j: int, phase: int) -> float:
        if j < 0:
            return 1.0 if phase == 1 else 0.0
        return 0.0 if phase == 1 else self.prov.cost(j)

    def _set_phase(self, phase: int) -> None:
        self.phase = phase
        self.cB = np.array([self._cost(j, phase) for j in self.basis])

    def _refactor(self):
        B = np.empty((self.k, self.k))
        for r, j in enumerate(self.basis):
            B[:, r] = self._column(j)
        try:
            self.Binv = np.linalg.inv(B)
        except np.linalg.LinAlgError as exc:
            raise NumericalBreakdown("basis matrix became singular") from exc
        self.xB = self.Binv @ self.b
        if self.xB.min(initial=0.0) < -1e-7 * (1.0 + float(np.abs(self.b).max(initial=0.0))):
            raise _LostFeasibility(float(self.xB.min()))
        np.clip(self.xB, 0.0, None, out=self.xB)
        self.cB = np.array([self._cost(j, self.phase) for j in self.basis])

    def _duals(self) -> np.ndarray:
        return self.cB @ self.Binv

    def _objective(self) -> float:
        return float(self.cB @ self.xB)

    def _ratio_test(self, d: np.ndarray, bland: bool):
        """Leaving row: zero-level basic artificials with a usable pivot
        leave first (at ratio zero, either pivot sign), otherwise the
        classic minimum ratio.  Ties prefer the largest pivot magnitude
        for stability, except under Bland's rule where the smallest basis
        id keeps the anti-cycling argument intact."""
        art_kick = (
            (self.basis_arr < 0)
            & (np.abs(d) > self.pivot_tol)
            & (self.xB <= _ZERO_TOL)
        )
        pos = d > self.pivot_tol
        ratios = np.full(self.k, math.inf)
        ratios[pos] = np.maximum(self.xB[pos], 0.0) / d[pos]
        ratios[art_kick] = 0.0
        best = ratios.min(initial=math.inf)
        if not math.isfinite(best):
            return None, math.inf
        cand = np.flatnonzero(ratios <= best * (1.0 + 1e-9) + 1e-15)
        if bland:
            leave = int(cand[np.argmin(self.basis_arr[cand])])
        else:
            mags = np.abs(d[cand])
            peak = mags.max()
            strong = cand[mags >= 0.9 * peak]
            leave = int(strong[np.argmin(self.basis_arr[strong])])
        return leave, float(ratios[leave])

    def _pivot(self, j_in: int, leave: int, d: np.ndarray, theta: float):
        piv = d[leave]
        self.xB -= theta * d
        self.xB[leave] = theta
        np.clip(self.xB, 0.0, None, out=self.xB)
        self.Binv[leave] /= piv
        scale = d.copy()
        scale[leave] = 0.0
        self.Binv -= np.outer(scale, self.Binv[leave])
        self.basis[leave] = j_in
        self.basis_arr[leave] = j_in
        self.cB[leave] = self._cost(j_in, self.phase)
        self.pivots += 1
        # A tiny pivot element leaves an ill-conditioned update behind;
        # rebuilding the inverse from the exact columns right away keeps
        # the damage from compounding.
        if abs(piv) < _SMALL_PIVOT or self.pivots % self.refactor_every == 0:
            self._refactor()

    def _optimize_phase(self, phase: int) -> None:
        self._set_phase(phase)
        tol = self.feas_tol * (1.0 + (self.prov.max_abs_cost() if phase == 2 else 0.0))
        bland = False
        stall = 0
        last_obj = self._objective()
        cand = np.empty(0, dtype=np.int64)
        for _ in range(self.max_iters):
            y = self.row_sign * self._duals()
            self.prov.begin_iteration(y)
            basic = {int(j) for j in self.basis if j >= 0}
            if bland:
                j = self.prov.entering_bland(phase, tol, basic)
                if j is None:
                    return
            else:
                j = None
                if cand.size:
                    cand = cand[[int(c) not in basic for c in cand]]
                if cand.size:
                    red = self.prov.reduced_for(phase, cand)
                    keep = red < -tol
                    cand = cand[keep]
                    if cand.size:
                        j = int(cand[int(np.argmin(red[keep]))])
                if j is None:
                    cand = self.prov.full_scan(phase, tol, _CANDIDATES, basic)
                    if cand.size == 0:
                        return
                    j = int(cand[0])
                cand = cand[cand != j]
            d = self.Binv @ self._column(j)
            leave, theta = self._ratio_test(d, bland)
            if leave is None:
                if phase == 1:
                    raise NumericalBreakdown(
                        "phase-1 objective is bounded but no pivot row qualifies"
                    )
                ray = {j: 1.0}
                for r in range(self.k):
                    if abs(d[r]) > _ZERO_TOL:
                        ray[self.basis[r]] = -float(d[r])
                raise _Unbounded(ray)
            self._pivot(j, leave, d, theta)
            obj = self._objective()
            if obj < last_obj - 1e-12 * (1.0 + abs(last_obj)):
                stall = 0
                bland = False
            else:
                stall += 1
                if stall >= _STALL_LIMIT:
                    bland = True
            last_obj = obj
        raise NumericalBreakdown(f"simplex exceeded {self.max_iters} iterations")

    def _drive_out_artificials(self) -> None:
        for r in range(self.k):
            if self.basis[r] >= 0 or self.xB[r] > _ZERO_TOL:
                continue
            w = self.row_sign * self.Binv[r]
            exclude = {j for j in self.basis if j >= 0}
            j = self.prov.first_nonzero(w, self.pivot_tol, exclude)
            if j is None:
                continue
            d = self.Binv @ self._column(j)
            if abs(d[r]) > self.pivot_tol:
                self._pivot(j, r, d, 0.0)

    def optimize(self):
        """Run to optimality (phase 1 first if artificials still carry
        mass).  Returns (status, primal, dual_raw, objective,
        certificate)."""
        restarts = 0
        try:
            while True:
                try:
                    if not self.phase1_done:
                        self._optimize_phase(1)
                        obj1 = self._objective()
                        scale = 1.0 + float(np.abs(self.b).max(initial=0.0))
                        if obj1 > self.feas_tol * scale:
                            y = self.row_sign * self._duals()
                            return "infeasible", {}, y, obj1, y
                        self.phase1_done = True
                    self._drive_out_artificials()
                    self._optimize_phase(2)
                    self._refactor()
                    self._optimize_phase(2)
                    break
                except _LostFeasibility as exc:
                    restarts += 1
                    if restarts > 3:
                        raise NumericalBreakdown(
                            f"basis updates kept losing feasibility ({exc.args[0]!r})"
                        ) from exc
                    # Restore feasibility honestly: fall back to the
                    # all-artificial basis and rerun phase 1 with tighter
                    # refactoring.  Generated columns are retained.
                    self.refactor_every = max(10, self.refactor_every // 4)
                    self.basis = [-(r + 1) for r in range(self.k)]
                    self.basis_arr = np.array(self.basis, dtype=np.int64)
                    self.phase = 1
                    self._refactor()
                    self.phase1_done = False
        except _Unbounded as exc:
            return "unbounded", {}, np.zeros(self.k), -math.inf, exc.ray
        primal = {}
        for r in range(self.k):
            if self.basis[r] >= 0 and self.xB[r] > 0.0:
                primal[self.basis[r]] = float(self.xB[r])
        y = self.row_sign * self._duals()
        return "optimal", primal, y, self._objective(), None


def solve_lp(lp: StandardLP, *, feas_tol: float = _FEAS_TOL) -> LPSolution:
    """Solve a dense equality-form LP with the revised simplex engine."""
    prov = _DenseColumns(lp.A, lp.c)
    engine = _SimplexEngine(prov, lp.b, feas_tol=feas_tol)
    status, primal, dual, obj, cert = engine.optimize()
    if status == "unbounded":
        obj = -math.inf
    return LPSolution(status, primal, dual, obj, cert)


def _initial_pool(m: int, n: int, injective: bool, cap: int) -> list[tuple[int, ...]]:
    if m**n <= cap:
        pool = list(iter_product(range(m), repeat=n))
        if injective:
            pool = [t for t in pool if len(set(t)) == n]
        return pool
    if injective:
        raise InsufficientSupport(
            f"pointwise mode enumerates all {m}^{n} support tuples, which "
            f"exceeds the cap {cap}; coarsen the grid or use cell mode"
        )
    return [(j,) * n for j in range(m)]


def _diagonal_basis(prov: _TupleColumns) -> list[int] | None:
    """Feasible starting basis from the diagonal coupling, when every
    coincident tuple is pooled with finite cost: the diagonal column of
    cell j hosts row (0, j); every other row keeps a zero-level
    artificial.  Disjoint row supports make the basis triangular."""
    m, n = prov.m, prov.n
    basis = [-(r + 1) for r in range(prov.nrows)]
    for j in range(m):
        idx = prov.pool_index.get((j,) * n)
        if idx is None or not math.isfinite(prov.costs[idx]):
            return None
        basis[j] = idx
    return basis


def solve_transport(
    weights: np.ndarray,
    cost: np.ndarray,
    n_marginals: int,
    *,
    feas_tol: float = _FEAS_TOL,
    pool_cap: int = _POOL_CAP,
    batch: int = _PRICE_BATCH,
    max_rounds: int = _MAX_ROUNDS,
    init_tuples=None,
):
    """Solve the abstract equal-marginal coupling LP by column generation.

    weights is the common marginal over m abstract points.  cost is either
    an (m, m) pair-interaction matrix (tuple cost = sum over unordered
    slot pairs) or a full N-way tensor.  Returns (atoms, u_mat, value):
    optimal tuple weights, the per-marginal dual potentials as an (N, m)
    array with the dropped-row convention u[i >= 1, m-1] = 0, and the
    optimal value.
    """
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise ValueError("weights must be a nonempty vector")
    if (w <= 0).any():
        raise ValueError("weights must be strictly positive")
    if abs(math.fsum(w.tolist()) - 1.0) > 1e-8:
        raise ValueError("weights must sum to one")
    m = w.size
    n = int(n_marginals)
    if n < 2:
        raise ValueError("need at least two marginals")
    cost = np.asarray(cost, dtype=float)
    if cost.ndim == 2 and cost.shape == (m, m):
        cost_eval = _PairCost(cost, n)
    elif cost.ndim == n and cost.shape == (m,) * n:
        cost_eval = _TensorCost(cost)
    else:
        raise ValueError(
            f"cost must be an ({m}, {m}) pair matrix or an {n}-way tensor"
        )
    diag_costs = cost_eval(np.arange(m, dtype=np.int64)[:, None].repeat(n, axis=1))
    injective = bool(np.isinf(diag_costs).all())
    if injective and w.max() > 1.0 / n + 1e-12:
        raise InsufficientSupport(
            f"largest weight {w.max()!r} exceeds 1/{n}; no off-diagonal "
            f"coupling can reproduce this marginal"
        )
    pool = _initial_pool(m, n, injective, pool_cap)
    if init_tuples:
        seen = set(pool)
        for t in init_tuples:
            t = tuple(int(v) for v in t)
            if t not in seen and (not injective or len(set(t)) == n):
                pool.append(t)
                seen.add(t)
    # infinite-cost columns must never reach the basis (phase 1 ignores
    # costs); feasibility is judged on the finite columns alone
    arr = np.array(pool, dtype=np.int64).reshape(-1, n)
    finite = np.isfinite(cost_eval(arr))
    if not finite.all():
        arr = arr[finite]
    if arr.shape[0] == 0:
        raise InsufficientSupport("every candidate coupling tuple has infinite cost")
    prov = _TupleColumns(m, n, cost_eval, arr)
    b = np.concatenate([w] + [w[: m - 1]] * (n - 1)) if m > 1 else w.copy()
    engine = _SimplexEngine(
        prov, b, feas_tol=feas_tol, initial_basis=_diagonal_basis(prov)
    )
    price_tol = feas_tol * (1.0 + cost_eval.max_finite())
    for _ in range(max_rounds):
        status, primal, y, obj, cert = engine.optimize()
        if status == "infeasible":
            raise InsufficientSupport(
                "the coupling constraints admit no nonnegative solution on "
                "the available support"
            )
        if status == "unbounded":
            raise NumericalBreakdown(
                "coupling LP reported unbounded despite nonnegative costs"
            )
        u_mat = prov._u_matrix(y)
        fresh = price_columns(
            u_mat, cost_eval, tol=price_tol, skip=prov.pool_index, batch=batch
        )
        if not fresh:
            atoms = {
                tuple(int(v) for v in prov.pool[j]): x
                for j, x in sorted(primal.items())
            }
            return atoms, u_mat, obj
        prov.add_tuples(fresh)
    raise NumericalBreakdown(f"column generation did not settle in {max_rounds} rounds")


def _refine_dual(
    atoms_idx: dict[tuple[int, ...], float],
    u_mat: np.ndarray,
    cost_eval,
    recip: np.ndarray,
    value: float,
    feas_tol: float,
    *,
    max_rows: int = 6000,
    max_vars: int = 2400,
) -> np.ndarray:
    """Replace the vertex dual with the minimum-norm dual tight on the
    permutation closure of the optimal support, when that refinement
    stays dual feasible.

    Permuting a tight support tuple keeps the constraint tight at any
    optimal dual (the cost is permutation invariant and the permuted
    plan is also optimal), so the closure is a legitimate equality set.
    The minimum-norm solution is basis independent, which stabilizes the
    reported potentials across pivot orders; it also commutes with any
    symmetry of the instance.  Falls back to the input on any size,
    residual, or feasibility failure.
    """
    n, m = u_mat.shape
    closure = sorted({p for t in atoms_idx for p in permutations(t)})
    q, v = len(closure), n * m
    if q == 0 or q > max_rows or v > max_vars:
        return u_mat
    tight = np.array(closure, dtype=np.int64)
    costs = np.asarray(cost_eval(tight), dtype=float)
    if not np.isfinite(costs).all():
        return u_mat
    A = np.zeros((q, v))
    rows = np.repeat(np.arange(q), n)
    cols = (np.arange(n)[None, :] * m + tight).ravel()
    np.add.at(A, (rows, cols), 1.0)
    sol, *_ = np.linalg.lstsq(A, costs, rcond=None)
    if not np.isfinite(sol).all():
        return u_mat
    resid = float(np.max(np.abs(A @ sol - costs)))
    scale = 1.0 + float(np.max(np.abs(costs)))
    if resid > 1e-9 * scale:
        return u_mat
    refined = sol.reshape(n, m)
    tol = feas_tol * (1.0 + cost_eval.max_finite())
    if max_dual_excess(refined, recip) > tol:
        return u_mat
    return refined


def solve_mmot(
    measure: DiscreteMeasure,
    model: CostModel,
    *,
    cost_mode: str = "cell",
    feas_tol: float = _FEAS_TOL,
    gap_tol: float = 1e-8,
    pool_cap: int = _POOL_CAP,
    batch: int = _PRICE_BATCH,
    max_rounds: int = _MAX_ROUNDS,
    init_columns=None,
    refine_duals: bool = True,
) -> tuple[TransportPlan, PotentialVector, float]:
    """Solve the discrete multimarginal problem for one measure.

    Returns the optimal plan, the per-marginal dual potentials, and the
    optimal value.  In cell mode tuples are priced by the finite
    pairwise-separable lower bound, so diagonal tuples are admissible; in
    pointwise mode coincident tuples cost infinity and are excluded, which
    requires every cell weight to stay at or below 1/N.
    """
    if cost_mode not in ("cell", "pointwise"):
        raise ValueError(f"cost_mode must be 'cell' or 'pointwise', got {cost_mode!r}")
    n = model.n_marginals
    support = measure.support()
    m = len(support)
    if m == 0:
        raise InsufficientSupport("measure has empty support")
    if cost_mode == "pointwise":
        if m < n:
            raise InsufficientSupport(
                f"pointwise mode needs at least {n} distinct support cells, got {m}"
            )
        wmax = max(measure.atoms.values())
        if wmax > 1.0 / n + 1e-12:
            raise InsufficientSupport(
                f"cell weight {wmax!r} exceeds 1/{n}; no plan avoiding "
                f"coincident points can reproduce this marginal"
            )
    recip = _support_recip(model, measure.grid, support, cost_mode, measure.positions)
    w = np.array([measure.atoms[c] for c in support])
    index = {c: i for i, c in enumerate(support)}
    init_tuples = None
    if init_columns:
        init_tuples = []
        for cells in init_columns:
            try:
                init_tuples.append(tuple(index[c] for c in cells))
            except KeyError:
                continue
    atoms_idx, u_mat, value = solve_transport(
        w,
        recip,
        n,
        feas_tol=feas_tol,
        pool_cap=pool_cap,
        batch=batch,
        max_rounds=max_rounds,
        init_tuples=init_tuples,
    )
    if refine_duals:
        u_mat = _refine_dual(
            atoms_idx, u_mat, _PairCost(recip, n), recip, value, feas_tol
        )
    atoms = {}
    for t, x in atoms_idx.items():
        if x < -1e-9:
            raise NumericalBreakdown(f"negative plan weight {x!r}")
        if x <= 1e-12:
            continue
        atoms[tuple(support[i] for i in t)] = x
    plan = TransportPlan(measure.grid, n, dict(sorted(atoms.items())))
    plan.validate()
    residual = max(
        abs(plan.marginal(0).get(c, 0.0) - measure.atoms[c]) for c in support
    )
    if residual > 1e-8:
        raise NumericalBreakdown(f"plan marginal drifts from the measure by {residual!r}")
    values = tuple(
        {support[j]: float(u_mat[i, j]) for j in range(m)} for i in range(n)
    )
    potentials = PotentialVector(measure.grid, values)
    primal = plan_cost(plan, model, cost_mode=cost_mode, positions=measure.positions)
    dual = potentials.dual_objective(measure.atoms)
    if abs(primal - dual) > gap_tol * (1.0 + abs(primal)):
        raise NumericalBreakdown(
            f"duality gap {abs(primal - dual)!r} exceeds tolerance at the "
            f"claimed optimum (primal {primal!r}, dual {dual!r})"
        )
    return plan, potentials, primal
