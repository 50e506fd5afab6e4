"""Greedy minimization of the asymptotic covariance lower bound.

The algorithm starts from the uniform budget-exhausting schedule, takes
the fixed point of the mean-selection map as its first bound matrix, and
then repeatedly solves the descent-constrained one-step subproblem

    minimize    trace( L(L_prev, p) )
    subject to  L(L_prev, p) <= L_prev   (matrix order),   p feasible,

which is convex: the objective is trace(M(p)^{-1}) with M(p) affine in p,
and the matrix constraint is M(p) >= L_prev^{-1}, also affine. The bound
traces are nonincreasing by construction, so the scheme converges; it is
greedy and makes no global-optimality claim.

The subproblem is solved with a log-det barrier on the descent constraint
(weight decreased geometrically from 1e-2 to 1e-8) and a spectral
projected-gradient method over the marginal polytope. First-order
stationarity is certified by the unit-step projected-gradient residual.
When the descent constraint pins the feasible region to a sliver around
the starting point — which happens whenever the rank-one information
increments of the sensors span enough directions, e.g. independent rows
with m <= n — the solver reports a stall instead: the iterate then already
sits within floating-point width of the subproblem optimum, and the
barrier Hessian is too ill-conditioned for a meaningful residual.
"""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass

import numpy as np

from ._linalg import cholesky_or_none, spd_inverse, symmetrize
from .errors import Diverged, InitialDiverged, SolverStalled
from .lowerbound import L_infinity, L_step
from .model import LinearSystem, validate_system
from .polytope import FeasibleSet, contains, project

MU_SCHEDULE = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8)
BARRIER_EPS = 1e-12
PG_TOL = 1e-7
MAX_INNER = 400
DESCENT_SLACK = 1e-8  # allowed lambda_max(L_k - L_{k-1})


def initial_schedule(fs: FeasibleSet) -> np.ndarray:
    """Uniform schedule spending the whole budget, clamped into [0, 1]."""
    total = float(fs.tree.cost.sum())
    value = 1.0 if total == 0.0 else min(1.0, fs.budget / total)
    return np.full(fs.m, value)


@dataclass(frozen=True)
class SubproblemResult:
    p: np.ndarray
    L: np.ndarray
    trace: float
    pg_residual: float
    certified: bool  # stationarity residual reached PG_TOL on the last stage
    stalled: bool  # no feasible descent direction wider than float noise
    iterations: int


def solve_descent_subproblem(
    sys: LinearSystem,
    fs: FeasibleSet,
    L_prev: np.ndarray,
    p_start: np.ndarray,
    *,
    mu_schedule=MU_SCHEDULE,
    pg_tol: float = PG_TOL,
    max_inner: int = MAX_INNER,
    barrier_eps: float = BARRIER_EPS,
) -> SubproblemResult:
    """One greedy step: best feasible p that does not worsen the bound.

    ``p_start`` must satisfy the descent constraint at L_prev (the previous
    iterate always does). Raises SolverStalled only when the final barrier
    stage exhausts its iteration cap while still making progress.
    """
    n, m = sys.n, sys.m
    L_prev = symmetrize(np.asarray(L_prev, dtype=float))
    W = spd_inverse(symmetrize(sys.A @ L_prev @ sys.A.T) + sys.Q)
    Linv_prev = spd_inverse(L_prev)
    info = sys.info
    Ct = sys.C.T  # (n, m)
    eye = np.eye(n)

    p0 = project(fs, np.asarray(p_start, dtype=float))

    def M_of(p):
        return symmetrize(W + np.tensordot(p, info, axes=1))

    # Inflate the barrier slack just enough to make the start strictly
    # feasible despite inversion round-off; 1e-12 in well-scaled problems.
    S0 = M_of(p0) - Linv_prev
    lam_min = float(np.linalg.eigvalsh(S0).min())
    if -lam_min > 1e-6 * max(1.0, float(np.linalg.norm(S0, "fro"))):
        raise ValueError("p_start violates the descent constraint")
    eps = barrier_eps + max(0.0, -lam_min)

    def evaluate(p, mu):
        M = M_of(p)
        S = symmetrize(M - Linv_prev) + eps * eye
        cS = cholesky_or_none(S)
        cM = cholesky_or_none(M)
        if cS is None or cM is None:
            return np.inf, None
        Minv = symmetrize(np.linalg.inv(M))
        logdet = 2.0 * float(np.sum(np.log(np.diag(cS))))
        return float(np.trace(Minv)) - mu * logdet, (Minv, S)

    def gradient(mu, cache):
        Minv, S = cache
        V = Minv @ Ct
        g = -np.einsum("ji,ji->i", V, V) / sys.r
        U = np.linalg.solve(S, Ct)
        g = g - mu * np.einsum("ji,ji->i", U, Ct) / sys.r
        return g

    p = p0
    pg_res = np.inf
    status = "stalled"
    total_iters = 0
    for stage, mu in enumerate(mu_schedule):
        tol = pg_tol if stage == len(mu_schedule) - 1 else max(pg_tol, mu * 1e-2)
        f, cache = evaluate(p, mu)
        if cache is None:
            # Round-off pushed the iterate out of the barrier domain; with a
            # feasible start this can only be a hair's width.
            status = "stalled"
            break
        g = gradient(mu, cache)
        gnorm = float(np.abs(g).max())
        lam = min(1.0, np.sqrt(m) / max(gnorm, 1e-12))
        hist = deque([f], maxlen=10)
        strikes = 0
        flat = 0
        stage_start = p.copy()
        moved = 0.0
        status = "maxiter"
        for it in range(max_inner):
            total_iters += 1
            if it % 5 == 0 or it == max_inner - 1:
                pg_res = float(np.linalg.norm(p - project(fs, p - g)))
                if pg_res <= tol:
                    status = "certified"
                    break
                if it >= 15 and moved <= 1e-9:
                    # The descent constraint has pinned the iterate; the
                    # whole reachable sliver is narrower than float noise.
                    status = "stalled"
                    break
            cand = project(fs, p - lam * g)
            d = cand - p
            if float(np.linalg.norm(d)) <= 1e-16:
                pg_res = float(np.linalg.norm(p - project(fs, p - g)))
                status = "certified" if pg_res <= tol else "stalled"
                break
            gd = float(g @ d)
            if gd >= 0.0:
                lam = max(lam * 0.1, 1e-14)
                strikes += 1
                if strikes >= 3:
                    status = "stalled"
                    break
                continue
            t, fref, accepted = 1.0, max(hist), False
            while t >= 1e-14:
                pn = p + t * d
                fn, cn = evaluate(pn, mu)
                if fn <= fref + 1e-4 * t * gd:
                    accepted = True
                    break
                t *= 0.5
            if not accepted:
                strikes += 1
                lam = max(lam * 0.01, 1e-14)
                if strikes >= 2:
                    status = "stalled"
                    break
                continue
            strikes = 0
            moved = max(moved, float(np.abs(pn - stage_start).max()))
            gn = gradient(mu, cn)
            s = pn - p
            y = gn - g
            sy = float(s @ y)
            lam = min(max(float(s @ s) / sy, 1e-12), 1e12) if sy > 0 else 1e6
            if abs(fn - f) <= 1e-13 * max(1.0, abs(fn)):
                flat += 1
                if flat >= 5:
                    p, f, g = pn, fn, gn
                    pg_res = float(np.linalg.norm(p - project(fs, p - g)))
                    status = "certified" if pg_res <= tol else "stalled"
                    break
            else:
                flat = 0
            p, f, g = pn, fn, gn
            hist.append(f)
        if status == "stalled" and float(np.abs(p - stage_start).max()) <= 1e-9:
            # Pinned at this barrier weight; smaller weights cannot widen
            # the sliver, so stop burning stages.
            break

    if status == "maxiter":
        raise SolverStalled(
            f"projected-gradient stationarity {pg_res:g} not reached within "
            f"{max_inner} iterations on the final barrier stage"
        )
    L_k = L_step(sys, L_prev, p)
    return SubproblemResult(
        p=p,
        L=L_k,
        trace=float(np.trace(L_k)),
        pg_residual=pg_res,
        certified=(status == "certified"),
        stalled=(status == "stalled"),
        iterations=total_iters,
    )


@dataclass(frozen=True)
class GreedyIterate:
    p: np.ndarray
    L: np.ndarray
    trace: float


@dataclass(frozen=True)
class GreedyTrace:
    """Full record of one greedy run.

    iterates[0] holds the initial schedule and bound; p_star is the final
    schedule, L_inf the fixed point of the mean map at p_star (computed
    from Sigma0), and fixed_point_gap the relative trace difference between
    that fixed point and the limit of the descent iterates.
    """

    iterates: tuple
    p_star: np.ndarray
    L_inf: np.ndarray
    converged: bool
    fixed_point_gap: float

    @property
    def trace_L_inf(self) -> float:
        return float(np.trace(self.L_inf))


def greedy_optimize(
    sys: LinearSystem,
    fs: FeasibleSet,
    max_outer: int = 200,
    tol: float = 1e-8,
) -> GreedyTrace:
    """Run the full greedy scheme and cross-check its limit.

    Stops when the per-step trace decrease falls below ``tol`` relative, or
    when the schedule itself stops moving (the remaining steps then iterate
    the mean map at fixed p, whose limit is computed directly). Raises
    InitialDiverged when even the uniform starting schedule cannot
    stabilize the estimator, i.e. the budget is too small.
    """
    validate_system(sys)
    p = initial_schedule(fs)
    try:
        L = L_infinity(sys, np.eye(sys.n), p)
    except Diverged as exc:
        raise InitialDiverged(
            "the uniform initial schedule is undetectable; increase the budget"
        ) from exc
    iterates = [GreedyIterate(p=p, L=L, trace=float(np.trace(L)))]
    converged = False
    prev_dp = np.inf
    for _ in range(max_outer):
        res = solve_descent_subproblem(sys, fs, L, p)
        if not contains(fs, res.p):
            raise SolverStalled("subproblem returned an infeasible schedule")
        worst = float(np.linalg.eigvalsh(res.L - L).max())
        if worst > DESCENT_SLACK:
            raise SolverStalled(
                f"descent constraint violated by {worst:g} (limit {DESCENT_SLACK:g})"
            )
        decrease = iterates[-1].trace - res.trace
        if decrease < -(sys.n * DESCENT_SLACK + 1e-12 * res.trace):
            raise SolverStalled("bound trace increased across an outer iteration")
        dp = float(np.abs(res.p - p).max())
        p, L = res.p, res.L
        iterates.append(GreedyIterate(p=p, L=L, trace=res.trace))
        if decrease <= tol * max(res.trace, 1e-300):
            converged = True
            break
        if dp <= 1e-10 and prev_dp <= 1e-10:
            # The schedule has stopped moving; the remaining outer steps
            # would only iterate the mean map at fixed p.
            converged = True
            break
        prev_dp = dp

    p_star = p
    L_tail = L_infinity(sys, L, p_star)  # limit of the descent iterates
    L_inf = L_infinity(sys, sys.Sigma0, p_star)
    gap = abs(np.trace(L_inf) - np.trace(L_tail)) / max(abs(np.trace(L_tail)), 1e-300)
    if gap > 1e-6:
        raise SolverStalled(
            f"fixed point from Sigma0 disagrees with the iterate limit "
            f"(relative gap {gap:g})"
        )
    return GreedyTrace(
        iterates=tuple(iterates),
        p_star=p_star,
        L_inf=L_inf,
        converged=converged,
        fixed_point_gap=float(gap),
    )


def write_greedy_csv(path, trace: GreedyTrace) -> None:
    """Columns: outer_iter, trace_L, p_1..p_m."""
    m = trace.p_star.shape[0]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["outer_iter", "trace_L"] + [f"p_{i}" for i in range(1, m + 1)])
        for k, it in enumerate(trace.iterates):
            writer.writerow([k, repr(it.trace)] + [repr(float(v)) for v in it.p])
