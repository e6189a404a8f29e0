"""Positive observer gains that minimise the l2 sensitivity bound.

The search over gains ``L`` is reduced to one dimension. For a candidate
gain norm ``eta`` the inner problem

    N(eta) = min ||A - LC||  s.t.  LC >= 0,  A - LC >= 0,  ||L|| <= eta

is solved by projected subgradient descent, after which the outer search
minimises ``eta**2 * H(N(eta))`` over the provable interval for ``||L||``.

For a single output (``L = l``, ``C = c^T``) the inner problem is convex,
its feasible set is the box ``0 <= l <= l_cap`` intersected with the ball
``||l|| <= eta``, and every inner solve carries a Frank-Wolfe duality gap
certificate. With several outputs the same descent runs over the matrix
``L`` with an alternating projection, and results are best effort.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, DomainError, InfeasibleError, UnsupportedBoundaryError
from .linalg import (
    NONNEG_TOL,
    as_matrix,
    is_nonnegative,
    pseudo_inverse,
    spectral_norm,
    top_singular_triplet,
)
from .sensitivity import AdjacencyParams, contraction_penalty

BOUNDARY_TOL = 1e-12
# Outer iterates with N(eta) above this are treated as infeasible.
CONTRACTION_CLAMP = 1.0 - 1e-6
INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class FeasibilityVerdict:
    lc_nonneg: bool
    a_minus_lc_nonneg: bool
    contraction: bool
    N: float

    @property
    def feasible(self) -> bool:
        return self.lc_nonneg and self.a_minus_lc_nonneg and self.contraction


@dataclass(frozen=True)
class EtaInterval:
    """Interval guaranteed to contain ``||L||`` for every feasible gain."""

    eta_min: float
    eta_max: float
    eta_max_general: float

    @property
    def empty(self) -> bool:
        return self.eta_min > self.eta_max


@dataclass(frozen=True)
class ContractionSolve:
    """Outcome of one inner solve at gain-norm budget ``eta``.

    ``gap`` is an upper bound on ``N - N(eta)`` when ``certified``; it is
    ``nan`` for multi-output problems, where no certificate is computed.
    """

    eta: float
    N: float
    L: np.ndarray
    iterations: int
    gap: float
    certified: bool


@dataclass(frozen=True)
class DesignResult:
    L_opt: np.ndarray
    eta: float
    N: float
    F_value: float
    bound_squared: float
    outer_evals: int
    inner_iterations: int
    status: str
    K: float
    alpha: float
    certified: bool
    eta_interval: EtaInterval | None = None
    mode: str = "minimize"
    extra: dict = field(default_factory=dict)

    @property
    def bound(self) -> float:
        return math.sqrt(self.bound_squared)

    def to_dict(self) -> dict:
        out = {
            "mode": self.mode,
            "status": self.status,
            "L_opt": {
                "rows": self.L_opt.shape[0],
                "cols": self.L_opt.shape[1],
                "data": self.L_opt.tolist(),
            },
            "eta": self.eta,
            "N": self.N,
            "F_value": self.F_value,
            "bound_squared": self.bound_squared,
            "bound": self.bound,
            "K": self.K,
            "alpha": self.alpha,
            "outer_evals": self.outer_evals,
            "inner_iterations": self.inner_iterations,
            "certified": self.certified,
        }
        if self.eta_interval is not None:
            out["eta_min"] = self.eta_interval.eta_min
            out["eta_max"] = self.eta_interval.eta_max
            out["eta_max_general"] = self.eta_interval.eta_max_general
        out.update(self.extra)
        return out


def _plant(A, C, *, positive: bool = True) -> tuple[np.ndarray, np.ndarray]:
    A = as_matrix(A, "A")
    C = as_matrix(C, "C")
    n = A.shape[0]
    if A.shape != (n, n):
        raise DimensionError(f"A must be square, got {A.shape}")
    if C.shape[1] != n:
        raise DimensionError(f"C must have {n} columns, got {C.shape}")
    if C.shape[0] > n:
        raise DimensionError(f"C has {C.shape[0]} outputs for {n} states; need p <= n")
    if positive and not (is_nonnegative(A) and is_nonnegative(C)):
        raise DomainError("A and C must be entrywise nonnegative (positive system)")
    return A, C


def check_feasible(A, C, L, tol: float = NONNEG_TOL) -> FeasibilityVerdict:
    """Evaluate ``LC >= 0``, ``A - LC >= 0`` and ``||A - LC|| < 1``."""
    A, C = _plant(A, C, positive=False)
    L = as_matrix(L, "L")
    if L.shape != (A.shape[0], C.shape[0]):
        raise DimensionError(f"L must be {A.shape[0]}x{C.shape[0]}, got {L.shape}")
    LC = L @ C
    N = spectral_norm(A - LC)
    return FeasibilityVerdict(
        lc_nonneg=is_nonnegative(LC, tol),
        a_minus_lc_nonneg=is_nonnegative(A - LC, tol),
        contraction=N < 1.0,
        N=N,
    )


def entrywise_cap(A, c) -> np.ndarray:
    """Largest ``l`` keeping ``A - l c^T >= 0``: ``min_{j: c_j > 0} a_ij / c_j``.

    Columns with ``c_j == 0`` impose no cap.
    """
    A = as_matrix(A, "A")
    c = np.asarray(c, dtype=float).reshape(-1)
    active = c > 0
    if not active.any():
        raise DomainError("output row c has no positive entry")
    return np.min(A[:, active] / c[active], axis=1)


def eta_bounds(A, C) -> EtaInterval:
    """Bounds ``(||A|| - 1)/||C|| <= ||L|| <= ||A|| ||C^+||`` on feasible gains.

    For a single output the upper end is tightened to the norm of the
    entrywise cap whenever that is smaller.
    """
    A, C = _plant(A, C)
    C_pinv = pseudo_inverse(C)
    norm_A = spectral_norm(A)
    eta_min = max(0.0, (norm_A - 1.0) / spectral_norm(C))
    general = norm_A * spectral_norm(C_pinv)
    eta_max = general
    if C.shape[0] == 1:
        eta_max = min(general, float(np.linalg.norm(entrywise_cap(A, C[0]))))
    return EtaInterval(eta_min=eta_min, eta_max=eta_max, eta_max_general=general)


def project_box_ball(x: np.ndarray, cap: np.ndarray, eta: float) -> np.ndarray:
    """Euclidean projection onto ``{0 <= l <= cap, ||l|| <= eta}``.

    The minimiser has the form ``clip(t x, 0, cap)`` with ``t = 1/(1 + mu)``
    in ``(0, 1]``. When the ball is active, ``t`` is the largest value with
    radius ``eta``; the radius is piecewise of the form ``sqrt(a t**2 + b)``
    between the breakpoints ``cap_i / x_i``, so ``t`` is found exactly.
    """
    y = np.clip(x, 0.0, cap)
    if y @ y <= eta * eta:
        return y
    if eta <= 0.0:
        return np.zeros_like(y)

    pos = x > 0
    xp, cp = x[pos], cap[pos]
    order = np.argsort(cp / xp)
    breaks = (cp / xp)[order]
    free_sq = np.cumsum((xp[order] ** 2)[::-1])[::-1]  # entries not yet capped
    capped_sq = np.concatenate(([0.0], np.cumsum(cp[order] ** 2)))
    target = eta * eta
    t = 1.0
    for k in range(len(breaks) + 1):
        a = free_sq[k] if k < len(breaks) else 0.0
        b = capped_sq[k]
        hi = breaks[k] if k < len(breaks) else math.inf
        if a > 0 and a * hi * hi + b >= target:
            t = math.sqrt(max(target - b, 0.0) / a)
            break
    return np.clip(t * x, 0.0, cap)


def _min_contraction_single(A, c, eta, seed, restarts, max_iter, tol):
    cap = entrywise_cap(A, c)
    rng = np.random.default_rng(seed)
    starts = [project_box_ball(cap, cap, eta)]
    starts += [project_box_ball(rng.uniform(0.0, 1.0, cap.size) * cap, cap, eta)
               for _ in range(restarts - 1)]
    # Frank-Wolfe vertex: the linear minimiser over the feasible set is the
    # projection of a point far along -g.
    far = 1e8 * max(eta, 1.0)

    best_f, best_l = math.inf, starts[0]
    lower = 0.0
    iterations = 0
    for l in starts:
        for k in range(1, max_iter + 1):
            iterations += 1
            f, u, v = top_singular_triplet(A - np.outer(l, c))
            if f < best_f:
                best_f, best_l = f, l.copy()
            g = -u * (c @ v)
            gn = float(np.linalg.norm(g))
            if f == 0.0 or gn == 0.0:
                lower = max(lower, f)
                break
            vertex = project_box_ball(-far * g / gn, cap, eta)
            lower = max(lower, f + g @ (vertex - l))
            if best_f - lower <= tol:
                break
            l = project_box_ball(l - (eta / k) * g / gn, cap, eta)
        if best_f - lower <= tol:
            break
    gap = max(best_f - lower, 0.0)
    return ContractionSolve(eta=eta, N=best_f, L=best_l.reshape(-1, 1),
                            iterations=iterations, gap=gap, certified=bool(gap <= tol))


def _project_multi(L, A, C, eta, sweeps=100):
    """Dykstra alternation over the column slabs ``0 <= L C_j <= A_j`` and the spectral ball."""
    n = A.shape[0]
    cols = [C[:, j] for j in range(n)]
    norms2 = [float(cj @ cj) for cj in cols]
    X = L.copy()
    corrections = [np.zeros_like(X) for _ in range(n + 1)]
    for _ in range(sweeps):
        X_start = X.copy()
        for j in range(n):
            Y = X + corrections[j]
            if norms2[j] > 0:
                t = Y @ cols[j]
                excess = np.minimum(t, 0.0) + np.maximum(t - A[:, j], 0.0)
                Z = Y - np.outer(excess, cols[j]) / norms2[j]
            else:
                Z = Y
            corrections[j] = Y - Z
            X = Z
        Y = X + corrections[n]
        U, s, Vt = np.linalg.svd(Y, full_matrices=False)
        Z = (U * np.minimum(s, eta)) @ Vt
        corrections[n] = Y - Z
        X = Z
        if np.abs(X - X_start).max() <= 1e-13:
            break
    return X


def _feasible_multi(L, A, C, eta, tol=1e-9):
    LC = L @ C
    return (LC.min() >= -tol and (A - LC).min() >= -tol
            and spectral_norm(L) <= eta + tol)


def _min_contraction_multi(A, C, eta, seed, restarts, max_iter):
    n, p = A.shape[0], C.shape[0]
    rng = np.random.default_rng(seed)
    starts = [np.zeros((n, p))]
    for _ in range(restarts - 1):
        cand = _project_multi(rng.uniform(0.0, 1.0, (n, p)) * eta / math.sqrt(n * p), A, C, eta)
        starts.append(cand if _feasible_multi(cand, A, C, eta) else np.zeros((n, p)))
    best_f, best_L = math.inf, starts[0]
    iterations = 0
    for L in starts:
        for k in range(1, max_iter + 1):
            iterations += 1
            f, u, v = top_singular_triplet(A - L @ C)
            if f < best_f:
                best_f, best_L = f, L.copy()
            G = -np.outer(u, C @ v)
            gn = float(np.linalg.norm(G))
            if f == 0.0 or gn == 0.0:
                break
            cand = _project_multi(L - (eta / k) * G / gn, A, C, eta)
            if _feasible_multi(cand, A, C, eta):
                if np.abs(cand - L).max() <= 1e-13:
                    break
                L = cand
    return ContractionSolve(eta=eta, N=best_f, L=best_L, iterations=iterations,
                            gap=math.nan, certified=False)


def min_contraction(
    A,
    C,
    eta: float,
    *,
    seed: int = 0,
    restarts: int = 5,
    max_iter: int = 2000,
    tol: float = 1e-7,
) -> ContractionSolve:
    """Smallest ``||A - LC||`` over positive-observer gains with ``||L|| <= eta``.

    Args:
        eta: gain-norm budget, ``>= 0``.
        seed: seeds the random restarts.
        restarts: number of starting points, the first being deterministic
            (the ball-scaled entrywise cap for one output, zero otherwise).
        max_iter: subgradient iterations per start.
        tol: certificate target on the duality gap (single output only).
    """
    A, C = _plant(A, C)
    if not (math.isfinite(eta) and eta >= 0):
        raise DomainError(f"eta must be a nonnegative real, got {eta}")
    if eta == 0.0:
        L0 = np.zeros((A.shape[0], C.shape[0]))
        return ContractionSolve(eta=0.0, N=spectral_norm(A), L=L0, iterations=0,
                                gap=0.0, certified=True)
    if C.shape[0] == 1:
        return _min_contraction_single(A, C[0], eta, seed, restarts, max_iter, tol)
    return _min_contraction_multi(A, C, eta, seed, restarts, max_iter)


def golden_section_min(f, a: float, b: float, tol: float):
    """Golden-section search for a minimiser of ``f`` on ``[a, b]``.

    Returns ``(x, f(x))`` for the best point evaluated.
    """
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    best = min((fc, c), (fd, d))
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
            best = min(best, (fc, c))
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
            best = min(best, (fd, d))
    return best[1], best[0]


def _result_from_gain(L, A, C, adj, **kwargs) -> DesignResult:
    N = spectral_norm(A - L @ C)
    eta = spectral_norm(L)
    F = eta**2 * contraction_penalty(N, adj.alpha)
    bound_sq = adj.K**2 / (1.0 - adj.alpha**2) * F
    return DesignResult(L_opt=L, eta=eta, N=N, F_value=F, bound_squared=bound_sq,
                        K=adj.K, alpha=adj.alpha, **kwargs)


def minimize_sensitivity(
    A,
    C,
    adj: AdjacencyParams,
    grid_points: int = 64,
    refine_tol: float = 1e-5,
    *,
    seed: int = 0,
) -> DesignResult:
    """Minimise ``||L||**2 H(||A - LC||)`` over positive-observer gains.

    A uniform grid over the admissible gain-norm interval is followed by a
    golden-section refinement of the best bracket. The objective along
    ``eta`` is not known to be unimodal, which is why the grid comes first.

    Raises:
        UnsupportedBoundaryError: if ``||A|| == 1``.
        InfeasibleError: if no grid point admits ``||A - LC|| < 1``.
    """
    A, C = _plant(A, C)
    if grid_points < 2:
        raise DomainError("grid_points must be at least 2")
    if not refine_tol > 0:
        raise DomainError("refine_tol must be positive")
    n, p = A.shape[0], C.shape[0]
    norm_A = spectral_norm(A)
    if abs(norm_A - 1.0) <= BOUNDARY_TOL:
        raise UnsupportedBoundaryError("||A|| == 1 is not supported")
    if norm_A < 1.0:
        return _result_from_gain(np.zeros((n, p)), A, C, adj, outer_evals=0,
                                 inner_iterations=0, status="optimal-grid", certified=True)

    interval = eta_bounds(A, C)
    if interval.empty:
        raise InfeasibleError(
            f"gain-norm interval is empty: [{interval.eta_min:.6g}, {interval.eta_max:.6g}]")

    solves: list[ContractionSolve] = []

    def objective(eta):
        sol = min_contraction(A, C, eta, seed=seed)
        solves.append(sol)
        return objective_value(sol, adj.alpha)

    grid = np.linspace(interval.eta_min, interval.eta_max, grid_points)
    values = [objective(float(e)) for e in grid]
    if not np.isfinite(values).any():
        raise InfeasibleError("no gain in the admissible interval makes ||A - LC|| < 1")
    i = int(np.argmin(values))
    lo, hi = float(grid[max(i - 1, 0)]), float(grid[min(i + 1, grid_points - 1)])
    golden_section_min(objective, lo, hi, refine_tol)

    scored = [(objective_value(s, adj.alpha), k) for k, s in enumerate(solves)]
    best = solves[min(scored)[1]]
    status = "optimal-grid" if (best.certified or p > 1) else "max-iter"
    return _result_from_gain(
        best.L, A, C, adj,
        outer_evals=len(solves),
        inner_iterations=sum(s.iterations for s in solves),
        status=status, certified=best.certified, eta_interval=interval,
    )


def objective_value(sol: ContractionSolve, alpha: float) -> float:
    """Objective of an inner solution; ``inf`` when ``N`` is clamped."""
    if sol.N >= CONTRACTION_CLAMP:
        return math.inf
    return spectral_norm(sol.L) ** 2 * contraction_penalty(sol.N, alpha)


def design_for_performance(
    A,
    C,
    target: float,
    alpha: float,
    K: float = 1.0,
    *,
    seed: int = 0,
    eta_tol: float = 1e-9,
) -> DesignResult:
    """Smallest-norm positive gain with ``||A - LC|| <= target``.

    Since ``N(eta)`` is non-increasing, the least admissible ``eta`` is
    located by bisection. The reported objective is evaluated at the
    achieved contraction, which may sit slightly below ``target``.

    Raises:
        InfeasibleError: if even the largest admissible gain misses ``target``.
    """
    A, C = _plant(A, C)
    if not (0.0 < target < 1.0):
        raise DomainError(f"target contraction must lie in (0, 1), got {target}")
    adj = AdjacencyParams(K, alpha)
    n, p = A.shape[0], C.shape[0]
    norm_A = spectral_norm(A)
    extra = {"target_N": target}
    if norm_A <= target:
        return _result_from_gain(np.zeros((n, p)), A, C, adj, outer_evals=0,
                                 inner_iterations=0, status="optimal-grid", certified=True,
                                 mode="fixed-performance", extra=extra)

    interval = eta_bounds(A, C)
    solves = []

    def solve(eta):
        sol = min_contraction(A, C, eta, seed=seed)
        solves.append(sol)
        return sol

    best = solve(interval.eta_max)
    if best.N > target:
        raise InfeasibleError(
            f"||A - LC|| >= {best.N:.6g} for every admissible gain; target {target} unreachable")
    lo = min(max(0.0, (norm_A - target) / spectral_norm(C)), interval.eta_max)
    hi = interval.eta_max
    while hi - lo > eta_tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        sol = solve(mid)
        if sol.N <= target:
            hi, best = mid, sol
        else:
            lo = mid
    certified = best.certified or p > 1
    return _result_from_gain(
        best.L, A, C, adj,
        outer_evals=len(solves),
        inner_iterations=sum(s.iterations for s in solves),
        status="optimal-grid" if certified else "max-iter",
        certified=best.certified, eta_interval=interval,
        mode="fixed-performance", extra=extra,
    )
