"""Dense matrix helpers and the norms the rest of the package relies on.

Matrices are plain 2-D ``numpy`` float arrays. ``as_matrix`` is the single
entry point that validates shape and finiteness, so downstream code can
assume clean input.
"""

from __future__ import annotations

import math
from typing import Any, Mapping

import numpy as np

from .errors import ConvergenceError, DimensionError, DomainError, RankError

NONNEG_TOL = 1e-12

# Power iteration runs on (M^T M)^(2**s). s starts at _SQUARINGS and grows by
# one after every _STALL_WINDOW iterations without convergence, which keeps
# the iteration count small when the top singular values nearly coincide.
_SQUARINGS = 6
_STALL_WINDOW = 16
_MAX_SQUARINGS = 64


def as_matrix(M: Any, name: str = "matrix") -> np.ndarray:
    """Return ``M`` as a finite 2-D float array, raising otherwise."""
    try:
        arr = np.array(M, dtype=float)
    except (TypeError, ValueError) as exc:
        raise DomainError(f"{name}: not a rectangular numeric array ({exc})") from None
    if arr.ndim == 1:
        arr = arr.reshape(1, -1) if arr.size else arr.reshape(0, 0)
    if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise DimensionError(f"{name}: expected a non-empty 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name}: entries must be finite")
    return arr


def as_vector(v: Any, name: str = "vector") -> np.ndarray:
    try:
        arr = np.array(v, dtype=float).reshape(-1)
    except (TypeError, ValueError) as exc:
        raise DomainError(f"{name}: not a numeric vector ({exc})") from None
    if arr.size == 0:
        raise DimensionError(f"{name}: empty vector")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name}: entries must be finite")
    return arr


def matrix_from_json(obj: Mapping[str, Any], name: str = "matrix") -> np.ndarray:
    """Parse the ``{"rows", "cols", "data"}`` matrix format."""
    if not isinstance(obj, Mapping) or not {"rows", "cols", "data"} <= set(obj):
        raise DomainError(f"{name}: expected an object with rows, cols and data")
    rows, cols, data = obj["rows"], obj["cols"], obj["data"]
    if not (isinstance(rows, int) and isinstance(cols, int)) or rows < 1 or cols < 1:
        raise DomainError(f"{name}: rows and cols must be positive integers")
    if not isinstance(data, list) or len(data) != rows:
        raise DimensionError(f"{name}: data must hold exactly {rows} rows")
    for i, row in enumerate(data):
        if not isinstance(row, list) or len(row) != cols:
            raise DimensionError(f"{name}: row {i} is ragged (expected {cols} entries)")
        for x in row:
            if isinstance(x, bool) or not isinstance(x, (int, float)):
                raise DomainError(f"{name}: row {i} contains a non-numeric entry")
    return as_matrix(data, name)


def matrix_to_json(M: np.ndarray) -> dict:
    M = as_matrix(M)
    return {"rows": M.shape[0], "cols": M.shape[1], "data": M.tolist()}


def top_singular_triplet(
    M: Any,
    *,
    tol: float = 1e-14,
    max_iter: int = 10_000,
    seed: int = 0,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Largest singular value of ``M`` with its left and right singular vectors.

    Power iteration on a repeatedly squared ``M^T M`` from a seeded random
    start; Rayleigh quotients are always taken with ``M^T M`` itself.
    Iteration stops once successive quotients agree to ``tol`` (relative). A start
    vector with zero Rayleigh quotient on two consecutive attempts is
    discarded and a fresh seed is drawn.

    Raises:
        ConvergenceError: if ``max_iter`` is reached.
    """
    M = as_matrix(M)
    m, n = M.shape
    G = M.T @ M
    scale = float(np.abs(G).max())
    if scale == 0.0:
        u = np.zeros(m)
        u[0] = 1.0
        v = np.zeros(n)
        v[0] = 1.0
        return 0.0, u, v
    G = G / scale
    P = G
    squarings = 0

    def square(P):
        P = P @ P
        return P / np.abs(P).max()

    for _ in range(_SQUARINGS):
        P = square(P)
        squarings += 1

    rng = np.random.default_rng(seed)
    zero_hits = 0
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    prev = v @ G @ v
    since_squaring = 0
    for _ in range(max_iter):
        w = P @ v
        wn = np.linalg.norm(w)
        rq = 0.0 if wn == 0.0 else float((w / wn) @ G @ (w / wn))
        if rq == 0.0 and prev == 0.0:
            zero_hits += 1
            if zero_hits > 32:
                break
            v = rng.standard_normal(n)
            v /= np.linalg.norm(v)
            prev = v @ G @ v
            continue
        v = w / wn
        if abs(rq - prev) <= tol * rq:
            sigma = math.sqrt(rq * scale)
            Mv = M @ v
            u = Mv / np.linalg.norm(Mv)
            return sigma, u, v
        prev = rq
        since_squaring += 1
        if since_squaring >= _STALL_WINDOW and squarings < _MAX_SQUARINGS:
            P = square(P)
            squarings += 1
            since_squaring = 0
    raise ConvergenceError(f"power iteration did not converge in {max_iter} iterations")


def spectral_norm(M: Any, **kwargs) -> float:
    """Induced 2-norm (largest singular value) of ``M``."""
    return top_singular_triplet(M, **kwargs)[0]


def induced_l1_norm(M: Any) -> float:
    """Maximum absolute column sum."""
    return float(np.abs(as_matrix(M)).sum(axis=0).max())


def pseudo_inverse(C: Any, rank_tol: float = 1e-12) -> np.ndarray:
    """Right inverse ``C^T (C C^T)^{-1}`` of a full-row-rank ``C``.

    Raises:
        RankError: if ``C`` has more rows than columns or its smallest
            singular value is below ``rank_tol`` times the largest.
    """
    C = as_matrix(C, "C")
    p, n = C.shape
    if p > n:
        raise RankError(f"C is {p}x{n}; full row rank needs rows <= cols")
    s = np.linalg.svd(C, compute_uv=False)
    if s[-1] <= rank_tol * max(s[0], 1.0):
        raise RankError(f"C is rank deficient (smallest singular value {s[-1]:.3e})")
    return C.T @ np.linalg.solve(C @ C.T, np.eye(p))


def is_nonnegative(M: Any, tol: float = NONNEG_TOL) -> bool:
    if tol < 0:
        raise DomainError("tol must be nonnegative")
    return bool(np.all(as_matrix(M) >= -tol))
