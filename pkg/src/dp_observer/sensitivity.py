"""Closed-form sensitivity bounds for Luenberger observers.

The observer ``z(k+1) = (A - LC) z(k) + L y(k)`` is driven by output
sequences that are adjacent in the geometric sense: equal before some
``k0`` and then apart by at most ``K * alpha**(k - k0)``. Everything here
is a pure function of the matrices and the adjacency parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError, StabilityError
from .linalg import as_matrix, induced_l1_norm, is_nonnegative, spectral_norm


@dataclass(frozen=True)
class AdjacencyParams:
    """Magnitude ``K`` of the first deviation and its geometric decay ``alpha``."""

    K: float
    alpha: float

    def __post_init__(self):
        if not (math.isfinite(self.K) and self.K > 0):
            raise DomainError(f"K must be a positive real, got {self.K}")
        if not (math.isfinite(self.alpha) and 0.0 <= self.alpha < 1.0):
            raise DomainError(f"alpha must lie in [0, 1), got {self.alpha}")


@dataclass(frozen=True)
class ObserverSpec:
    """Plant ``(A, C)`` together with an observer gain ``L``."""

    A: np.ndarray
    C: np.ndarray
    L: np.ndarray

    def __post_init__(self):
        A = as_matrix(self.A, "A")
        C = as_matrix(self.C, "C")
        L = as_matrix(self.L, "L")
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionError(f"A must be square, got {A.shape}")
        if C.shape[1] != n:
            raise DimensionError(f"C must have {n} columns, got {C.shape}")
        if L.shape != (n, C.shape[0]):
            raise DimensionError(f"L must be {n}x{C.shape[0]}, got {L.shape}")
        for arr in (A, C, L):
            arr.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "L", L)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    @property
    def error_matrix(self) -> np.ndarray:
        """``A - LC``, the observer error dynamics."""
        return self.A - self.L @ self.C

    def is_positive_system(self, tol: float = 1e-12) -> bool:
        return is_nonnegative(self.A, tol) and is_nonnegative(self.C, tol)


@dataclass(frozen=True)
class SensitivityReport:
    N: float
    l2_bound_squared: float
    l1_bound: float | None
    H_value: float
    L_norm: float
    K: float
    alpha: float

    @property
    def l2_bound(self) -> float:
        return math.sqrt(self.l2_bound_squared)

    def reconstructed_bound_squared(self) -> float:
        return self.K**2 / (1.0 - self.alpha**2) * self.H_value * self.L_norm**2


def contraction_penalty(N: float, alpha: float) -> float:
    """``((1 + N alpha) / (1 - N alpha)) / (1 - N**2)`` for ``0 <= N < 1``.

    The factor by which ``||L||**2`` is inflated in the objective. It is
    increasing in ``N`` on ``[0, 1)`` and blows up as ``N -> 1``.
    """
    if not (0.0 <= alpha < 1.0):
        raise DomainError(f"alpha must lie in [0, 1), got {alpha}")
    if not (0.0 <= N < 1.0):
        raise DomainError(f"N must lie in [0, 1), got {N}")
    return (1.0 + N * alpha) / (1.0 - N * alpha) / (1.0 - N * N)


def series_closed_form(N: float, alpha: float) -> float:
    """Closed form of ``sum_k (sum_{i<=k} N**(k-i) alpha**i)**2``."""
    if not (0.0 <= N < 1.0 and 0.0 <= alpha < 1.0):
        raise DomainError("N and alpha must both lie in [0, 1)")
    return contraction_penalty(N, alpha) / (1.0 - alpha * alpha)


def sensitivity_objective(L, A, C, alpha: float) -> float:
    """``||L||**2 * contraction_penalty(||A - LC||, alpha)``.

    The full squared bound is this value times ``K**2 / (1 - alpha**2)``.

    Raises:
        StabilityError: if ``||A - LC|| >= 1``.
    """
    spec = ObserverSpec(A, C, L)
    N = spectral_norm(spec.error_matrix)
    if N >= 1.0:
        raise StabilityError(f"||A - LC|| = {N:.6g} >= 1; objective undefined")
    return spectral_norm(spec.L) ** 2 * contraction_penalty(N, alpha)


def l1_sensitivity_bound(spec: ObserverSpec, adj: AdjacencyParams) -> float:
    """Bound ``(K / (1 - alpha)) * ||L||_1 / (1 - ||A - LC||_1)`` in induced l1 norms.

    Raises:
        StabilityError: if ``||A - LC||_1 >= 1``.
    """
    N1 = induced_l1_norm(spec.error_matrix)
    if N1 >= 1.0:
        raise StabilityError(f"||A - LC||_1 = {N1:.6g} >= 1; l1 bound undefined")
    return adj.K / (1.0 - adj.alpha) * induced_l1_norm(spec.L) / (1.0 - N1)


def l2_sensitivity_bound_squared(spec: ObserverSpec, adj: AdjacencyParams) -> SensitivityReport:
    """Squared l2 sensitivity bound ``K^2/(1-alpha^2) * H(N) * ||L||^2``.

    The l1 bound is attached when ``||A - LC||_1 < 1`` and left as ``None``
    otherwise.

    Raises:
        StabilityError: if ``N = ||A - LC|| >= 1``.
    """
    N = spectral_norm(spec.error_matrix)
    if N >= 1.0:
        raise StabilityError(f"||A - LC|| = {N:.6g} >= 1; bound undefined")
    H = contraction_penalty(N, adj.alpha)
    L_norm = spectral_norm(spec.L)
    bound_sq = adj.K**2 / (1.0 - adj.alpha**2) * H * L_norm**2
    try:
        l1 = l1_sensitivity_bound(spec, adj)
    except StabilityError:
        l1 = None
    return SensitivityReport(
        N=N, l2_bound_squared=bound_sq, l1_bound=l1, H_value=H, L_norm=L_norm,
        K=adj.K, alpha=adj.alpha,
    )
