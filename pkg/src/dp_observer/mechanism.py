"""Gaussian mechanism calibration and noise generation.

Releasing a signal with l2 sensitivity ``delta_G`` under ``(epsilon, delta)``
privacy takes i.i.d. Gaussian noise of standard deviation
``kappa(epsilon, delta) * delta_G`` on every coordinate.

Noise is drawn from ``numpy.random.Generator`` backed by PCG64, seeded
explicitly, so a ``NoiseSpec`` always reproduces the same stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

from .errors import DomainError

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class PrivacyParams:
    epsilon: float
    delta: float

    def __post_init__(self):
        if not (math.isfinite(self.epsilon) and self.epsilon > 0):
            raise DomainError(f"epsilon must be positive, got {self.epsilon}")
        if not (0.0 < self.delta <= 0.5):
            raise DomainError(f"delta must lie in (0, 0.5], got {self.delta}")

    @property
    def tail_quantile(self) -> float:
        """``Q^{-1}(delta)``, the standard normal upper-tail quantile."""
        return q_inverse(self.delta)


@dataclass(frozen=True)
class NoiseSpec:
    """Per-coordinate noise level ``sigma`` for ``dim``-dimensional releases."""

    sigma: float
    dim: int
    seed: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise DomainError(f"sigma must be positive, got {self.sigma}")
        if self.dim < 1:
            raise DomainError(f"dim must be a positive integer, got {self.dim}")
        if not 0 <= self.seed < 2**64:
            raise DomainError("seed must be an unsigned 64-bit integer")


def q_function(x: float) -> float:
    """Standard normal upper-tail probability ``P(Z > x)``."""
    return 0.5 * math.erfc(x / _SQRT2)


def q_inverse(delta: float) -> float:
    """Nonnegative ``x`` with ``q_function(x) == delta``, for ``delta`` in (0, 0.5]."""
    if not (0.0 < delta <= 0.5):
        raise DomainError(f"delta must lie in (0, 0.5], got {delta}")
    x = max(0.0, -NormalDist().inv_cdf(delta))
    # Newton polish on Q(x) - delta; Q'(x) = -phi(x).
    for _ in range(3):
        step = (q_function(x) - delta) / (_INV_SQRT_2PI * math.exp(-0.5 * x * x))
        x = max(0.0, x + step)
        if abs(step) <= 1e-15 * max(1.0, x):
            break
    return x


def kappa(priv: PrivacyParams) -> float:
    """Noise multiplier ``(q + sqrt(q**2 + 2 eps)) / (2 eps)`` with ``q = Q^{-1}(delta)``."""
    q = priv.tail_quantile
    eps = priv.epsilon
    return (q + math.sqrt(q * q + 2.0 * eps)) / (2.0 * eps)


def calibrate(priv: PrivacyParams, delta_G: float, dim: int, seed: int = 0) -> NoiseSpec:
    """Noise specification for a release with l2 sensitivity ``delta_G``."""
    if not (math.isfinite(delta_G) and delta_G > 0):
        raise DomainError(f"delta_G must be positive, got {delta_G}")
    return NoiseSpec(sigma=kappa(priv) * delta_G, dim=dim, seed=seed)


def sample_noise(spec: NoiseSpec, steps: int) -> np.ndarray:
    """``(steps, dim)`` array of i.i.d. ``N(0, sigma**2)`` draws."""
    if steps < 1:
        raise DomainError(f"steps must be a positive integer, got {steps}")
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    return spec.sigma * rng.standard_normal((steps, spec.dim))
