"""Independent reference computations used by the tests.

Nothing here calls into ``dp_observer``; each oracle takes a different
route to the quantity it checks (eigenvalues by Jacobi rotations, the Q
function by quadrature, design optima by brute-force grids).
"""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate


def jacobi_eigenvalues(S, tol=1e-15, max_sweeps=100):
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations."""
    S = np.array(S, dtype=float)
    n = S.shape[0]
    for _ in range(max_sweeps):
        off = math.sqrt(sum(S[i, j] ** 2 for i in range(n) for j in range(n) if i != j))
        if off <= tol * max(1.0, np.abs(S).max()):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if S[p, q] == 0.0:
                    continue
                theta = (S[q, q] - S[p, p]) / (2.0 * S[p, q])
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                R = np.eye(n)
                R[p, p] = R[q, q] = c
                R[p, q] = s
                R[q, p] = -s
                S = R.T @ S @ R
    return np.diag(S).copy()


def spectral_norm_oracle(M):
    M = np.asarray(M, dtype=float)
    return math.sqrt(max(jacobi_eigenvalues(M.T @ M).max(), 0.0))


def norm_2x2(m11, m12, m21, m22):
    """Closed-form spectral norm of stacked 2x2 matrices (vectorised)."""
    fro = m11**2 + m12**2 + m21**2 + m22**2
    det = m11 * m22 - m12 * m21
    return np.sqrt((fro + np.sqrt(np.maximum(fro**2 - 4.0 * det**2, 0.0))) / 2.0)


def q_quadrature(x):
    """Upper Gaussian tail by adaptive quadrature of the density."""
    val, _ = integrate.quad(lambda u: math.exp(-0.5 * u * u), x, math.inf,
                            epsabs=1e-14, epsrel=1e-13)
    return val / math.sqrt(2.0 * math.pi)


def q_inverse_bisection(delta, lo=0.0, hi=40.0, iters=200):
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if q_quadrature(mid) > delta:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def truncation_horizon(N, alpha, tail=1e-12):
    """Smallest T with sum_{k>T} ((k+1) r**k)**2 < tail, r = max(N, alpha)."""
    r = max(N, alpha)
    if r == 0.0:
        return 0
    T = 1
    while True:
        q = ((T + 3) / (T + 2)) ** 2 * r * r
        if q < 1.0:
            first = (T + 2) ** 2 * r ** (2 * (T + 1))
            if first / (1.0 - q) < tail:
                return T
        T += 1


def truncated_series(N, alpha, T):
    """sum_{k=0}^{T} (sum_{i=0}^{k} N**(k-i) alpha**i)**2 by direct summation."""
    # inner(k) = N * inner(k-1) + alpha**k
    total, inner, a_k = 0.0, 0.0, 1.0
    for _ in range(T + 1):
        inner = N * inner + a_k
        total += inner * inner
        a_k *= alpha
    return total


def penalty(N, alpha):
    return (1.0 + N * alpha) / (1.0 - N * alpha) / (1.0 - N * N)


def single_output_grid(A, c, step=1e-3):
    """All grid points of the box [0, l_cap] for a 2-state single-output plant.

    Returns ``(l1, l2, N, feasible)`` arrays, where ``feasible`` marks the
    points with ``A - l c^T >= 0`` and ``||A - l c^T|| < 1``.
    """
    A = np.asarray(A, float)
    c = np.asarray(c, float)
    cap = [min(A[i, j] / c[j] for j in range(2) if c[j] > 0) for i in range(2)]
    g1 = np.arange(0.0, cap[0] + 0.5 * step, step)
    g2 = np.arange(0.0, cap[1] + 0.5 * step, step)
    L1, L2 = np.meshgrid(g1, g2, indexing="ij")
    m11, m12 = A[0, 0] - L1 * c[0], A[0, 1] - L1 * c[1]
    m21, m22 = A[1, 0] - L2 * c[0], A[1, 1] - L2 * c[1]
    N = norm_2x2(m11, m12, m21, m22)
    nonneg = (m11 >= -1e-12) & (m12 >= -1e-12) & (m21 >= -1e-12) & (m22 >= -1e-12)
    return L1, L2, N, nonneg & (N < 1.0)


def grid_min_objective(A, c, alpha, step=1e-3):
    L1, L2, N, feas = single_output_grid(A, c, step)
    with np.errstate(divide="ignore", invalid="ignore"):
        F = np.where(feas, (L1**2 + L2**2) * penalty(np.minimum(N, 0.999999), alpha), np.inf)
    i = np.unravel_index(np.argmin(F), F.shape)
    return float(F[i]), np.array([L1[i], L2[i]])


def grid_min_contraction(A, c, eta, step=1e-3):
    L1, L2, N, _ = single_output_grid(A, c, step)
    ok = (L1**2 + L2**2) <= eta * eta
    return float(np.where(ok, N, np.inf).min())


def grid_min_norm_for_target(A, c, target, step=1e-3):
    L1, L2, N, _ = single_output_grid(A, c, step)
    ok = (N <= target)
    return float(np.where(ok, np.sqrt(L1**2 + L2**2), np.inf).min())


def orthant_directions(n, dtheta):
    """Unit vectors of the nonnegative orthant on an angular grid (n = 2 or 3)."""
    if n == 2:
        th = np.arange(0.0, math.pi / 2 + 0.5 * dtheta, dtheta)
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    if n == 3:
        th = np.arange(0.0, math.pi / 2 + 0.5 * dtheta, dtheta)
        T, P = np.meshgrid(th, th, indexing="ij")
        return np.stack([np.sin(T) * np.cos(P), np.sin(T) * np.sin(P), np.cos(T)],
                        axis=-1).reshape(-1, 3)
    raise ValueError("n must be 2 or 3")


def batched_norm(A, c, ls):
    Ms = A[None, :, :] - ls[:, :, None] * c[None, None, :]
    return np.linalg.svd(Ms, compute_uv=False)[:, 0]


def sphere_and_ball_minima(A, c, eta, dtheta, radii=25):
    """Grid minima of ||A - l c^T|| over box-feasible l on the sphere and in the ball."""
    A = np.asarray(A, float)
    c = np.asarray(c, float)
    cap = np.array([min(A[i, j] / c[j] for j in range(len(c)) if c[j] > 0)
                    for i in range(len(c))])
    dirs = orthant_directions(len(c), dtheta)
    dirs = np.vstack([dirs, cap / np.linalg.norm(cap)])

    def feasible_min(points):
        keep = np.all(points <= cap + 1e-12, axis=1)
        if not keep.any():
            return math.inf
        return float(batched_norm(A, c, points[keep]).min())

    sphere = feasible_min(eta * dirs)
    ball = min(feasible_min(r * dirs) for r in np.linspace(0.0, eta, radii))
    return sphere, min(ball, sphere)


def random_single_output_instance(rng, n, max_N=0.9, tries=1000):
    """Random nonnegative ``(A, c, l)`` with ``0 <= l <= l_cap`` and ``||A - l c^T|| <= max_N``."""
    for _ in range(tries):
        A = rng.uniform(0.0, 1.0, (n, n)) * rng.uniform(0.3, 1.5)
        c = rng.uniform(0.05, 1.0, n)
        cap = np.min(A / c[None, :], axis=1)
        l = rng.uniform(0.0, 1.0, n) * cap
        N = np.linalg.norm(A - np.outer(l, c), 2)
        if N <= max_N:
            return A, c, l
    raise RuntimeError("could not draw a feasible instance")
