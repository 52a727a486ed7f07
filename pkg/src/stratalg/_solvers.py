"""Per-atom polyhedral subproblem solvers.

Everything here is classical finite-dimensional numerics applied one
atom at a time; no conditional structure enters.  The quadratic solver
is a nonnegative least squares pass (Lawson-Hanson, an exact active-set
method) followed by a KKT polish on the identified support, so solutions
of the small nearest-point problems are accurate to linear-solve
roundoff and fully deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linprog, nnls

from .tolerances import EQ_TOL, FEAS_TOL, RANK_TOL

# Penalty weight used to fold equality constraints into the NNLS pass.
_PENALTY = 1e6
_POLISH_ROUNDS = 60


def solve_lp(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, bounds=None):
    """Thin deterministic wrapper around scipy's HiGHS interface.

    Feasibility is enforced well below the package's strict-inequality
    tolerances so that LP-derived margins cannot fake interiority.
    """
    return linprog(
        c,
        A_ub=A_ub,
        b_ub=b_ub,
        A_eq=A_eq,
        b_eq=b_eq,
        bounds=bounds,
        method="highs",
        options={
            "primal_feasibility_tolerance": 1e-10,
            "dual_feasibility_tolerance": 1e-10,
        },
    )


@dataclass
class QPSolution:
    """Solution of ``min |G^T w|^2`` s.t. ``E w = e``, ``w_i >= 0`` on a set."""

    point: np.ndarray        # the minimizing combination G^T w
    coeffs: np.ndarray       # w in the original variable order
    kkt_ok: bool             # True when the polished KKT check passed
    kkt_violation: float     # worst dual violation seen at termination


def cone_least_squares(
    gens: np.ndarray,
    nonneg: Sequence[int],
    eq_mat: np.ndarray,
    eq_rhs: np.ndarray,
) -> QPSolution:
    """Minimize ``|gens^T w|`` subject to ``eq_mat w = eq_rhs`` and
    nonnegativity of the listed coefficients.

    ``gens`` has one generator per row.  The free coefficients (those not
    listed in ``nonneg``) are handled exactly; the equalities are folded
    into the NNLS pass with a penalty and then enforced exactly by the
    polish step.
    """
    gens = np.asarray(gens, dtype=float)
    n, d = gens.shape
    eq_mat = np.asarray(eq_mat, dtype=float).reshape(-1, n)
    eq_rhs = np.asarray(eq_rhs, dtype=float).reshape(-1)
    nonneg = sorted(set(int(i) for i in nonneg))
    free = [i for i in range(n) if i not in nonneg]

    scale = max(1.0, float(np.max(np.abs(gens))) if gens.size else 1.0,
                float(np.max(np.abs(eq_rhs))) if eq_rhs.size else 1.0)
    pen = _PENALTY * scale

    # NNLS pass on split variables: columns for nonneg w_i, then +-pairs
    # for the free ones.
    cols = [gens[i] for i in nonneg] + [gens[i] for i in free] + [-gens[i] for i in free]
    ecols = [eq_mat[:, i] for i in nonneg] + [eq_mat[:, i] for i in free] + [
        -eq_mat[:, i] for i in free
    ]
    A = np.vstack(
        [
            np.column_stack(cols) if cols else np.zeros((d, 0)),
            pen * (np.column_stack(ecols) if ecols else np.zeros((eq_mat.shape[0], 0))),
        ]
    )
    b = np.concatenate([np.zeros(d), pen * eq_rhs])
    try:
        w_split, _ = nnls(A, b, maxiter=10 * max(1, A.shape[1]))
    except RuntimeError:
        w_split = np.zeros(A.shape[1])

    w0 = np.zeros(n)
    for j, i in enumerate(nonneg):
        w0[i] = w_split[j]
    off = len(nonneg)
    for j, i in enumerate(free):
        w0[i] = w_split[off + j] - w_split[off + len(free) + j]

    supp_tol = 1e-9 * max(1.0, float(np.max(w_split)) if w_split.size else 1.0)
    support = set(i for i in nonneg if w0[i] > supp_tol) | set(free)

    grad_scale = max(1.0, float(np.max(np.sum(gens * gens, axis=1))) if n else 1.0)
    opt_tol = 1e-9 * grad_scale
    best = None

    for _ in range(_POLISH_ROUNDS):
        w, rho = _polish(gens, eq_mat, eq_rhs, sorted(support))
        # Drop negative coefficients that should be nonnegative.
        bad = [i for i in support if i in nonneg and w[i] < -1e-11]
        if bad:
            worst = min(bad, key=lambda i: w[i])
            support.discard(worst)
            if not support and nonneg:
                break
            continue
        z = gens.T @ w
        # Dual feasibility on the excluded coefficients.
        sigma = 2.0 * (gens @ z) - eq_mat.T @ rho
        viol = 0.0
        entering = None
        for i in nonneg:
            if i in support:
                continue
            if sigma[i] < -opt_tol and (entering is None or sigma[i] < sigma[entering]):
                entering = i
            viol = max(viol, max(0.0, -sigma[i]))
        best = QPSolution(point=z, coeffs=np.where(np.abs(w) < 1e-15, 0.0, w),
                          kkt_ok=entering is None, kkt_violation=viol)
        if entering is None:
            return best
        support.add(entering)

    if best is not None:
        return best
    z = gens.T @ w0
    return QPSolution(point=z, coeffs=w0, kkt_ok=False, kkt_violation=np.inf)


def _polish(gens, eq_mat, eq_rhs, support):
    """Exact equality-constrained least squares on a candidate support."""
    n = gens.shape[0]
    s = len(support)
    Gs = gens[support]
    Es = eq_mat[:, support]
    m = Es.shape[0]
    kkt = np.zeros((s + m, s + m))
    kkt[:s, :s] = 2.0 * (Gs @ Gs.T)
    kkt[:s, s:] = Es.T
    kkt[s:, :s] = Es
    rhs = np.concatenate([np.zeros(s), eq_rhs])
    sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
    w = np.zeros(n)
    w[support] = sol[:s]
    rho = -sol[s:]
    # Sign bookkeeping: stationarity reads 2 Q w - E^T rho - sigma = 0.
    return w, rho


def min_norm_point(
    points: np.ndarray,
    rays: Optional[np.ndarray] = None,
    lines: Optional[np.ndarray] = None,
) -> QPSolution:
    """Nearest point to the origin of ``conv(points)+cone(rays)+span(lines)``."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    blocks = [points]
    if rays is not None and len(rays):
        blocks.append(np.atleast_2d(np.asarray(rays, dtype=float)))
    else:
        rays = np.zeros((0, points.shape[1]))
    if lines is not None and len(lines):
        blocks.append(np.atleast_2d(np.asarray(lines, dtype=float)))
    else:
        lines = np.zeros((0, points.shape[1]))
    gens = np.vstack(blocks)
    np_, nr = len(points), len(rays)
    nonneg = list(range(np_ + nr))
    eq = np.concatenate([np.ones(np_), np.zeros(len(gens) - np_)])[None, :]
    return cone_least_squares(gens, nonneg, eq, np.array([1.0]))


def simplex_min_norm(rows: np.ndarray, eq_mat=None, eq_rhs=None) -> QPSolution:
    """Minimal-norm convex combination of the given rows.

    Optional extra equalities constrain the combination ``z`` itself:
    rows of ``eq_mat`` dot ``z`` must equal ``eq_rhs``.
    """
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    n = len(rows)
    E = [np.ones((1, n))]
    e = [np.array([1.0])]
    if eq_mat is not None and len(eq_mat):
        # <u_i, sum lambda_j rows_j> = c_i  is linear in lambda.
        E.append(np.asarray(eq_mat, dtype=float) @ rows.T)
        e.append(np.asarray(eq_rhs, dtype=float))
    return cone_least_squares(rows, list(range(n)), np.vstack(E), np.concatenate(e))


def combination_residual(
    target: np.ndarray,
    points: np.ndarray,
    rays: np.ndarray,
    lines: np.ndarray,
) -> float:
    """Smallest sup-norm slack with which the target is a valid
    point/ray/line combination; ``inf`` when the LP fails."""
    target = np.asarray(target, dtype=float)
    d = target.size
    cols, nonneg_cnt = _combination_columns(points, rays, lines, d)
    n = cols.shape[1]
    # variables: [w (n), t]; minimize t with |cols w - target| <= t.
    c = np.zeros(n + 1)
    c[-1] = 1.0
    # rows: cols w - t <= target ; -cols w - t <= -target
    A_ub = np.vstack(
        [
            np.hstack([cols, -np.ones((d, 1))]),
            np.hstack([-cols, -np.ones((d, 1))]),
        ]
    )
    b_ub = np.concatenate([target, -target])
    A_eq = np.zeros((1, n + 1))
    A_eq[0, : len(points)] = 1.0
    b_eq = np.array([1.0])
    bounds = [(0, None)] * nonneg_cnt + [(None, None)] * (n - nonneg_cnt) + [(0, None)]
    res = solve_lp(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds)
    if res.status != 0:
        return np.inf
    return float(res.fun)


def _combination_columns(points, rays, lines, d):
    points = np.atleast_2d(np.asarray(points, dtype=float)) if len(points) else np.zeros((0, d))
    rays = np.atleast_2d(np.asarray(rays, dtype=float)) if len(rays) else np.zeros((0, d))
    lines = np.atleast_2d(np.asarray(lines, dtype=float)) if len(lines) else np.zeros((0, d))
    cols = np.vstack([points, rays, lines]).T if (len(points) + len(rays) + len(lines)) else np.zeros((d, 0))
    return cols, len(points) + len(rays)


def positivity_margin(
    target: np.ndarray,
    points: np.ndarray,
    rays: np.ndarray,
    lines: np.ndarray,
    eq_slack: float = FEAS_TOL,
) -> float:
    """Largest ``t`` such that the target admits a combination whose
    point and ray coefficients all sit at or above ``t``.

    A strictly positive value certifies relative-interior membership; a
    nonpositive one means the target is on the relative boundary, and
    ``-inf`` means it is not in the set at all (up to ``eq_slack``).
    """
    target = np.asarray(target, dtype=float)
    d = target.size
    cols, nonneg_cnt = _combination_columns(points, rays, lines, d)
    n = cols.shape[1]
    slack = eq_slack * max(1.0, float(np.max(np.abs(cols))) if cols.size else 1.0,
                           float(np.max(np.abs(target))) if target.size else 1.0)
    # variables [w (n), t]; maximize t.
    c = np.zeros(n + 1)
    c[-1] = -1.0
    rows = []
    rhs = []
    # t <= w_i for every nonnegative coefficient.
    for i in range(nonneg_cnt):
        row = np.zeros(n + 1)
        row[i] = -1.0
        row[-1] = 1.0
        rows.append(row)
        rhs.append(0.0)
    # |cols w - target| <= slack.
    for sign in (1.0, -1.0):
        block = np.hstack([sign * cols, np.zeros((d, 1))])
        rows.extend(block)
        rhs.extend(sign * target + slack)
    A_ub = np.array(rows)
    b_ub = np.array(rhs)
    A_eq = np.zeros((1, n + 1))
    A_eq[0, : len(points)] = 1.0
    b_eq = np.array([1.0])
    bounds = [(0, None)] * nonneg_cnt + [(None, None)] * (n - nonneg_cnt) + [(None, 1.0)]
    res = solve_lp(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds)
    if res.status != 0:
        return -np.inf
    margin = float(-res.fun)
    if margin <= 0.0:
        return margin
    # A boundary target can borrow a positive margin from the target
    # slack itself, so a positive value is only reported after it
    # survives a near-exact target tolerance.  Infeasibility there means
    # membership relied on the slack: a boundary point, margin zero.
    tight = EQ_TOL * (slack / eq_slack if eq_slack > 0.0 else 1.0)
    b_tight = b_ub.copy()
    b_tight[nonneg_cnt: nonneg_cnt + d] = target + tight
    b_tight[nonneg_cnt + d:] = -target + tight
    res = solve_lp(c, A_ub=A_ub, b_ub=b_tight, A_eq=A_eq, b_eq=b_eq, bounds=bounds)
    if res.status != 0:
        return 0.0
    return float(-res.fun)


def nonzero_in_dual_cone(
    ineq_rows: np.ndarray,
    eq_rows: np.ndarray,
    dim: int,
    pos_tol: float = 1e-9,
) -> Optional[np.ndarray]:
    """A canonical nonzero ``z`` with ``ineq_rows z >= 0`` and
    ``eq_rows z = 0``, or ``None`` when only ``z = 0`` qualifies.

    Scans the coordinate objectives ``+-e_i`` over the cone intersected
    with the unit box and keeps the lexicographically smallest normalized
    maximizer, which makes the choice reproducible.
    """
    ineq_rows = np.atleast_2d(np.asarray(ineq_rows, dtype=float)) if len(ineq_rows) else np.zeros((0, dim))
    eq_rows = np.atleast_2d(np.asarray(eq_rows, dtype=float)) if len(eq_rows) else np.zeros((0, dim))
    A_ub = -ineq_rows if len(ineq_rows) else None
    b_ub = np.zeros(len(ineq_rows)) if len(ineq_rows) else None
    A_eq = eq_rows if len(eq_rows) else None
    b_eq = np.zeros(len(eq_rows)) if len(eq_rows) else None
    bounds = [(-1.0, 1.0)] * dim
    candidates = []
    for axis in range(dim):
        for sign in (1.0, -1.0):
            c = np.zeros(dim)
            c[axis] = -sign
            res = solve_lp(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds)
            if res.status != 0:
                continue
            val = -float(res.fun)
            if val > pos_tol:
                z = np.asarray(res.x, dtype=float)
                nz = np.linalg.norm(z)
                if nz > pos_tol:
                    candidates.append(z / nz)
    if not candidates:
        return None
    best = candidates[0]
    for z in candidates[1:]:
        if _lex_less(z, best):
            best = z
    return best


def _lex_less(a: np.ndarray, b: np.ndarray, tol: float = 1e-12) -> bool:
    for x, y in zip(a, b):
        if x < y - tol:
            return True
        if x > y + tol:
            return False
    return False


def gram_schmidt_rows(
    rows: Sequence[np.ndarray], eps: float = RANK_TOL
) -> np.ndarray:
    """Orthonormal rows spanning the same space, greedily in input order.

    A row is accepted when its residual against the rows accepted so far
    exceeds ``eps * max(1, |row|)``.
    """
    basis: list[np.ndarray] = []
    for r in rows:
        r = np.asarray(r, dtype=float)
        resid = r.copy()
        for u in basis:
            resid -= (resid @ u) * u
        # re-orthogonalize once for numerical hygiene
        for u in basis:
            resid -= (resid @ u) * u
        nr = np.linalg.norm(resid)
        if nr > eps * max(1.0, np.linalg.norm(r)):
            basis.append(resid / nr)
    return np.array(basis) if basis else np.zeros((0, len(rows[0]) if len(rows) else 0))


def numeric_rank(rows: np.ndarray, eps: float = RANK_TOL) -> int:
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    if rows.size == 0:
        return 0
    return len(gram_schmidt_rows(list(rows), eps))


def parallel_map(fn, items, threads: int = 1):
    """Order-preserving map, optionally on a thread pool.

    Results are positioned by input index, so the output is identical
    for any thread count.
    """
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
