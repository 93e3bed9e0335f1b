"""Dense linear programming with primal/dual recovery and parametric sensitivity.

Solves maximization problems in standard form

    max  c^T x   s.t.   A x = b,  x >= 0

with a revised simplex that keeps an explicit basis inverse. The solver is
deterministic (Dantzig pricing, lowest-index tie breaking, Bland's rule as the
anti-cycling fallback) so repeated solves of the same problem produce
bit-identical bases. The optimal basis and the dual vector y* = A_B^{-T} c_B
are first-class outputs: downstream sensitivity analysis evaluates
d(a*)/d(theta) = -y*^T G x* for constraint matrices A(theta) = F + G theta.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

FEAS_TOL = 1e-9
REDUCED_COST_TOL = 1e-9
COND_LIMIT = 1e12

# Consecutive degenerate pivots tolerated before switching to Bland's rule.
_STALL_LIMIT = 30
_MAX_ITERS = 20000
_REFACTOR_PERIOD = 64


class LPError(RuntimeError):
    """Solver fault (iteration cap, broken invariants); not a model status."""


@dataclass(frozen=True)
class VariableSplit:
    """Map from pre-conversion variables to standard-form columns.

    Free variables are split into positive/negative parts; ``neg_col`` is -1
    for variables that were already sign-constrained. Slack columns introduced
    for inequality rows live at indices >= ``n_structural`` and have no entry
    here.
    """

    pos_col: np.ndarray
    neg_col: np.ndarray

    def to_original(self, x_std: np.ndarray) -> np.ndarray:
        x = x_std[self.pos_col].copy()
        has_neg = self.neg_col >= 0
        x[has_neg] -= x_std[self.neg_col[has_neg]]
        return x

    def lift_matrix(self, g_orig: np.ndarray, n_cols_std: int) -> np.ndarray:
        """Expand a matrix over original variables to standard-form columns."""
        g_std = np.zeros((g_orig.shape[0], n_cols_std))
        g_std[:, self.pos_col] = g_orig
        has_neg = self.neg_col >= 0
        g_std[:, self.neg_col[has_neg]] = -g_orig[:, has_neg]
        return g_std


@dataclass(frozen=True)
class StandardFormLP:
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    n_structural: int
    split: VariableSplit
    n_core_rows: int  # leading rows that were equalities before slack rows

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def m(self) -> int:
        return self.A.shape[0]

    def with_objective(self, c: np.ndarray) -> "StandardFormLP":
        return replace(self, c=np.asarray(c, dtype=float))

    def lift_direction(self, g_orig: np.ndarray) -> "ParametricDirection":
        """Lift a variation of the original equality block to standard form.

        ``g_orig`` has one row per core equality and one column per original
        variable. Slack rows/columns do not vary, so they are zero-padded.
        """
        g_std = np.zeros_like(self.A)
        g_std[: g_orig.shape[0], :] = self.split.lift_matrix(g_orig, self.n)
        return ParametricDirection(G=g_std)


@dataclass(frozen=True)
class ParametricDirection:
    """Direction G of a constraint-matrix variation A(theta) = A + G theta."""

    G: np.ndarray


@dataclass(frozen=True)
class LPSolution:
    status: str  # optimal | infeasible | unbounded
    x: Optional[np.ndarray] = None
    y: Optional[np.ndarray] = None
    basis: tuple[int, ...] = ()
    objective: float = np.nan
    degenerate: bool = False
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


# Sentinel returned by fixed_basis_resolve when the cached basis is no longer
# primal feasible (or is singular) for the updated problem.
INFEASIBLE_BASIS = object()


def standardize(
    c: np.ndarray,
    a_eq: np.ndarray,
    b_eq: np.ndarray,
    a_ub: Optional[np.ndarray] = None,
    b_ub: Optional[np.ndarray] = None,
    free_mask: Optional[np.ndarray] = None,
) -> StandardFormLP:
    """Convert max c^T x, A_eq x = b_eq, A_ub x <= b_ub into standard form.

    Variables flagged in ``free_mask`` are split into nonnegative pairs; the
    rest are assumed nonnegative already. Each inequality row gets one slack.
    """
    c = np.asarray(c, dtype=float)
    a_eq = np.atleast_2d(np.asarray(a_eq, dtype=float))
    b_eq = np.asarray(b_eq, dtype=float)
    n_orig = c.shape[0]
    if a_eq.shape != (b_eq.shape[0], n_orig):
        raise ValueError(f"equality block shape mismatch: {a_eq.shape} vs ({b_eq.shape[0]}, {n_orig})")
    if free_mask is None:
        free_mask = np.zeros(n_orig, dtype=bool)
    free_mask = np.asarray(free_mask, dtype=bool)

    if a_ub is None:
        a_ub = np.zeros((0, n_orig))
        b_ub = np.zeros(0)
    else:
        a_ub = np.atleast_2d(np.asarray(a_ub, dtype=float))
        b_ub = np.asarray(b_ub, dtype=float)

    pos_col = np.zeros(n_orig, dtype=int)
    neg_col = np.full(n_orig, -1, dtype=int)
    col = 0
    for j in range(n_orig):
        pos_col[j] = col
        col += 1
        if free_mask[j]:
            neg_col[j] = col
            col += 1
    n_structural = col
    split = VariableSplit(pos_col=pos_col, neg_col=neg_col)

    n_slack = a_ub.shape[0]
    n_std = n_structural + n_slack
    m = a_eq.shape[0] + n_slack

    a_std = np.zeros((m, n_std))
    a_std[: a_eq.shape[0], :n_structural] = split.lift_matrix(a_eq, n_structural)
    a_std[a_eq.shape[0] :, :n_structural] = split.lift_matrix(a_ub, n_structural)
    a_std[a_eq.shape[0] :, n_structural:] = np.eye(n_slack)
    b_std = np.concatenate([b_eq, b_ub])

    c_std = np.zeros(n_std)
    c_std[:n_structural] = split.lift_matrix(c[None, :], n_structural)[0]

    return StandardFormLP(
        c=c_std, A=a_std, b=b_std, n_structural=n_structural, split=split, n_core_rows=a_eq.shape[0]
    )


class _Basis:
    """Basis bookkeeping with an explicitly maintained inverse."""

    def __init__(self, a: np.ndarray, b: np.ndarray, basis: Sequence[int]):
        self.a = a
        self.b = b
        self.idx = list(basis)
        self.pivots_since_factor = 0
        self._refactor()

    def _refactor(self) -> None:
        b_mat = self.a[:, self.idx]
        try:
            self.inv = np.linalg.inv(b_mat)
        except np.linalg.LinAlgError as exc:
            raise LPError("singular basis during refactorization") from exc
        self.xb = self.inv @ self.b
        self.pivots_since_factor = 0

    def pivot(self, row: int, entering: int, d: np.ndarray) -> None:
        """Replace the basic variable in ``row`` by ``entering``; d = B^-1 a_e."""
        self.idx[row] = entering
        piv = d[row]
        if abs(piv) < 1e-12:
            raise LPError("zero pivot")
        self.inv[row, :] /= piv
        other = np.arange(len(self.idx)) != row
        self.inv[other, :] -= np.outer(d[other], self.inv[row, :])
        self.pivots_since_factor += 1
        if self.pivots_since_factor >= _REFACTOR_PERIOD:
            self._refactor()
        else:
            self.xb = self.inv @ self.b

    def duals(self, c: np.ndarray) -> np.ndarray:
        return c[self.idx] @ self.inv


def _simplex(
    lp_a: np.ndarray,
    lp_b: np.ndarray,
    c: np.ndarray,
    basis: Sequence[int],
    banned: frozenset[int] = frozenset(),
) -> tuple[str, _Basis, int]:
    """Run primal simplex from a primal-feasible basis. Returns (status, basis, iters)."""
    bs = _Basis(lp_a, lp_b, basis)
    stall = 0
    use_bland = False
    for it in range(_MAX_ITERS):
        y = bs.duals(c)
        rc = c - y @ lp_a
        rc[bs.idx] = 0.0
        candidates = np.flatnonzero(rc > REDUCED_COST_TOL)
        if banned:
            candidates = candidates[~np.isin(candidates, list(banned))]
        if candidates.size == 0:
            return "optimal", bs, it
        if use_bland:
            entering = int(candidates[0])
        else:
            # Dantzig pricing; np.argmax takes the lowest index on ties.
            entering = int(candidates[np.argmax(rc[candidates])])
        d = bs.inv @ lp_a[:, entering]
        pos = d > FEAS_TOL
        if not np.any(pos):
            return "unbounded", bs, it
        ratios = np.full(len(bs.idx), np.inf)
        ratios[pos] = np.maximum(bs.xb[pos], 0.0) / d[pos]
        best = ratios.min()
        tied = np.flatnonzero(ratios <= best + 1e-12)
        # Bland-style leaving rule: lowest basic variable index among ties.
        row = int(min(tied, key=lambda r: bs.idx[r]))
        if best < FEAS_TOL:
            stall += 1
            if stall >= _STALL_LIMIT:
                use_bland = True
        else:
            stall = 0
            use_bland = False
        bs.pivot(row, entering, d)
    raise LPError("simplex iteration limit exceeded")


def _phase1(lp: StandardFormLP) -> tuple[Optional[_Basis], frozenset[int], int]:
    """Find a primal-feasible basis with artificial variables.

    Returns (basis over the extended problem, banned artificial columns,
    iterations); basis is None when the LP is infeasible.
    """
    m, n = lp.m, lp.n
    art_sign = np.where(lp.b >= 0.0, 1.0, -1.0)
    a_ext = np.hstack([lp.A, np.diag(art_sign)])
    c_ext = np.concatenate([np.zeros(n), -np.ones(m)])
    basis = list(range(n, n + m))
    status, bs, iters = _simplex(a_ext, lp.b, c_ext, basis)
    if status != "optimal":  # phase-1 objective is bounded above by zero
        raise LPError("phase 1 terminated without optimality")
    obj = c_ext[bs.idx] @ bs.xb
    if obj < -1e-7 * (1.0 + np.abs(lp.b).max(initial=0.0)):
        return None, frozenset(), iters
    # Pivot artificials out of the basis where possible; those that remain sit
    # on redundant rows at value zero. All artificial columns are banned from
    # re-entering in phase 2.
    for row in range(m):
        if bs.idx[row] < n:
            continue
        candidates = np.flatnonzero(np.abs(bs.inv[row, :] @ lp.A) > 1e-9)
        if candidates.size:
            entering = int(candidates[0])
            d = bs.inv @ a_ext[:, entering]
            bs.pivot(row, entering, d)
    if any(i >= n for i in bs.idx):
        banned = frozenset(range(n, n + m))
    else:
        banned = frozenset()
    return bs, banned, iters


def solve_lp(lp: StandardFormLP, warm_basis: Optional[Sequence[int]] = None) -> LPSolution:
    """Solve a standard-form LP to optimality with primal and dual certificates.

    ``warm_basis`` seeds phase 2 when it is still primal feasible; otherwise
    the solver falls back to a cold two-phase run. Infeasible and unbounded
    problems are reported through the status field, never raised.
    """
    m, n = lp.m, lp.n
    if lp.b.shape[0] != m or lp.c.shape[0] != n:
        raise ValueError("inconsistent LP dimensions")
    if m == 0:
        return LPSolution(status="optimal", x=np.zeros(n), y=np.zeros(0), basis=(), objective=0.0)

    total_iters = 0
    bs: Optional[_Basis] = None
    banned: frozenset[int] = frozenset()
    if warm_basis is not None and len(warm_basis) == m and max(warm_basis, default=-1) < n:
        try:
            cand = _Basis(lp.A, lp.b, warm_basis)
            if cand.xb.min(initial=0.0) >= -FEAS_TOL:
                bs = cand
        except LPError:
            bs = None
    if bs is None:
        bs, banned, it1 = _phase1(lp)
        total_iters += it1
        if bs is None:
            return LPSolution(status="infeasible", iterations=total_iters)

    if banned:
        a_run = np.hstack([lp.A, np.diag(np.where(lp.b >= 0.0, 1.0, -1.0))])
        c_run = np.concatenate([lp.c, np.zeros(m)])
    else:
        a_run = lp.A
        c_run = lp.c
        bs = _Basis(lp.A, lp.b, bs.idx)

    status, bs, it2 = _simplex(a_run, lp.b, c_run, bs.idx, banned=banned)
    total_iters += it2
    if status == "unbounded":
        return LPSolution(status="unbounded", iterations=total_iters)

    bs._refactor()
    x = np.zeros(a_run.shape[1])
    x[bs.idx] = np.maximum(bs.xb, 0.0)
    y = bs.duals(c_run)
    degenerate = bool(np.any(np.abs(bs.xb) < FEAS_TOL * 10))
    return LPSolution(
        status="optimal",
        x=x[:n],
        y=y,
        basis=tuple(int(i) for i in bs.idx),
        objective=float(c_run[bs.idx] @ bs.xb),
        degenerate=degenerate,
        iterations=total_iters,
    )


def fixed_basis_resolve(lp: StandardFormLP, basis: Sequence[int]):
    """Re-solve with a frozen basis: x_B = A_B^{-1} b, nonbasics at zero.

    Returns an LPSolution sharing the given basis, or INFEASIBLE_BASIS when
    the basis matrix is singular, ill-conditioned, or any basic variable
    would go negative. No pivoting is performed; the result is optimal only
    if the basis happens to remain dual feasible.
    """
    basis = list(basis)
    if len(basis) != lp.m:
        return INFEASIBLE_BASIS
    b_mat = lp.A[:, basis]
    try:
        inv = np.linalg.inv(b_mat)
    except np.linalg.LinAlgError:
        return INFEASIBLE_BASIS
    cond = np.linalg.norm(b_mat, 1) * np.linalg.norm(inv, 1)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        return INFEASIBLE_BASIS
    xb = inv @ lp.b
    if xb.min(initial=0.0) < -FEAS_TOL * (1.0 + np.abs(lp.b).max(initial=0.0)):
        return INFEASIBLE_BASIS
    x = np.zeros(lp.n)
    x[basis] = np.maximum(xb, 0.0)
    y = lp.c[basis] @ inv
    return LPSolution(
        status="optimal",
        x=x,
        y=y,
        basis=tuple(int(i) for i in basis),
        objective=float(lp.c[basis] @ xb),
        degenerate=bool(np.any(np.abs(xb) < FEAS_TOL * 10)),
    )


def objective_sensitivity(sol: LPSolution, direction: ParametricDirection) -> float:
    """d(a*)/d(theta) for A(theta) = A + G theta at theta = 0: -y*^T G x*."""
    if not sol.optimal:
        raise ValueError("sensitivity requires an optimal solution")
    return float(-(sol.y @ (direction.G @ sol.x)))
