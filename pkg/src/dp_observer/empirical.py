"""Plant and observer rollouts, adjacent output pairs, empirical sensitivity.

Sensitivity is the supremum of ``||z - z'||`` over adjacent output pairs.
The observer is linear, so ``z - z'`` is the zero-state response to the
difference ``d = y - y'`` alone; the estimators below roll out that
difference directly. Pairs are built to saturate the adjacency inequality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BoundViolationError, DimensionError, DomainError, NonFiniteError, StabilityError
from .linalg import as_matrix, as_vector, is_nonnegative, spectral_norm
from .mechanism import NoiseSpec, sample_noise
from .sensitivity import AdjacencyParams, ObserverSpec, l2_sensitivity_bound_squared

TAIL_FRACTION = 1e-9
BOUND_SLACK = 1e-6


@dataclass(frozen=True)
class Trajectory:
    """``values[k]`` is the vector at step ``k``; shape ``(steps, dim)``."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim == 1:
            v = v.reshape(-1, 1)
        if v.ndim != 2 or v.shape[0] < 1:
            raise DimensionError(f"trajectory values must be (steps, dim), got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise NonFiniteError("trajectory contains non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def steps(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class AdjacentPair:
    y: Trajectory
    y_prime: Trajectory
    k0: int
    adj: AdjacencyParams

    def __post_init__(self):
        if self.y.values.shape != self.y_prime.values.shape:
            raise DimensionError("adjacent trajectories must share shape")
        if not 0 <= self.k0 < self.y.steps:
            raise DomainError(f"k0 must lie in [0, {self.y.steps}), got {self.k0}")
        gap = np.linalg.norm(self.y.values - self.y_prime.values, axis=1)
        if np.any(gap[: self.k0] != 0.0):
            raise DomainError("adjacent trajectories differ before k0")
        k = np.arange(self.y.steps - self.k0)
        allowed = self.adj.K * self.adj.alpha ** k
        # rounding in y - y' grows with the magnitude of y
        scale = np.maximum(np.linalg.norm(self.y.values[self.k0:], axis=1), 1.0)
        if np.any(gap[self.k0:] > allowed * (1.0 + 1e-12) + 1e-12 * scale):
            raise DomainError("trajectories violate the geometric adjacency bound")

    @property
    def difference(self) -> np.ndarray:
        return self.y.values - self.y_prime.values


def simulate_plant(A, C, x0, steps: int) -> tuple[Trajectory, Trajectory]:
    """Roll out ``x(k+1) = A x(k)``, ``y(k) = C x(k)`` for ``k < steps``."""
    A = as_matrix(A, "A")
    C = as_matrix(C, "C")
    x = as_vector(x0, "x0")
    n = A.shape[0]
    if A.shape != (n, n) or C.shape[1] != n or x.size != n:
        raise DimensionError("incompatible dimensions for A, C and x0")
    if steps < 1:
        raise DomainError("steps must be a positive integer")
    xs = np.empty((steps, n))
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(steps):
            xs[k] = x
            x = A @ x
        ys = xs @ C.T
    if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
        raise NonFiniteError("plant state overflowed")
    return Trajectory(xs), Trajectory(ys)


def noisy_release(z: Trajectory, noise: NoiseSpec) -> Trajectory:
    """Add the Gaussian release noise to every step of ``z``."""
    if noise.dim != z.dim:
        raise DimensionError(f"noise dim {noise.dim} does not match trajectory dim {z.dim}")
    return Trajectory(z.values + sample_noise(noise, z.steps))


def simulate_observer(
    spec: ObserverSpec,
    y: Trajectory,
    z0,
    noise: NoiseSpec | None = None,
) -> Trajectory:
    """Roll out ``z(k+1) = (A - LC) z(k) + L y(k)``, one value per step of ``y``.

    With ``noise`` the returned trajectory is the perturbed release; the
    recursion itself never sees the noise.
    """
    z = as_vector(z0, "z0")
    if z.size != spec.n or y.dim != spec.p:
        raise DimensionError("incompatible dimensions for observer, y and z0")
    M = spec.error_matrix
    zs = np.empty((y.steps, spec.n))
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(y.steps):
            zs[k] = z
            z = M @ z + spec.L @ y.values[k]
    if not np.all(np.isfinite(zs)):
        raise NonFiniteError("observer state overflowed")
    out = Trajectory(zs)
    return noisy_release(out, noise) if noise is not None else out


def _directions(policy: str, count: int, p: int, rng, direction=None) -> np.ndarray:
    if policy == "sign":
        if p != 1:
            raise DomainError("the 'sign' policy needs a single output")
        return np.ones((count, 1))
    if policy == "fixed":
        u = np.ones(p) if direction is None else as_vector(direction, "direction")
        if u.size != p or np.linalg.norm(u) == 0:
            raise DomainError("fixed direction must be a nonzero vector of output dimension")
        return np.tile(u / np.linalg.norm(u), (count, 1))
    if policy == "random":
        g = rng.standard_normal((count, p))
        norms = np.linalg.norm(g, axis=1, keepdims=True)
        return g / np.where(norms == 0, 1.0, norms)
    raise DomainError(f"unknown direction policy {policy!r}")


def make_adjacent_pair(
    y: Trajectory,
    k0: int,
    adj: AdjacencyParams,
    direction_policy: str = "sign",
    *,
    direction=None,
    seed: int = 0,
) -> AdjacentPair:
    """Perturb ``y`` from ``k0`` on by exactly ``K * alpha**(k - k0)`` in norm.

    Policies: ``"sign"`` (single output, positive offset), ``"fixed"``
    (one unit ``direction`` for every step) and ``"random"`` (an
    independent random unit direction per step).
    """
    if not 0 <= k0 < y.steps:
        raise DomainError(f"k0 must lie in [0, {y.steps}), got {k0}")
    rng = np.random.default_rng(seed)
    m = y.steps - k0
    dirs = _directions(direction_policy, m, y.dim, rng, direction)
    d = np.zeros_like(y.values)
    d[k0:] = adj.K * (adj.alpha ** np.arange(m))[:, None] * dirs
    return AdjacentPair(y=y, y_prime=Trajectory(y.values - d), k0=k0, adj=adj)


def tail_bound(spec: ObserverSpec, adj: AdjacencyParams, horizon: int) -> float:
    """Upper bound on the part of ``||z - z'||**2`` beyond ``horizon`` steps.

    Uses ``||e(k)|| <= ||L|| K k r**(k-1)`` with ``r = max(||A - LC||, alpha)``.
    Returns ``inf`` when the geometric ratio test has not kicked in yet.
    """
    r = max(spectral_norm(spec.error_matrix), adj.alpha)
    scale = (spectral_norm(spec.L) * adj.K) ** 2
    if scale == 0.0 or r == 0.0:
        return 0.0
    m = horizon + 1
    q = ((m + 1) / m) ** 2 * r * r
    if q >= 1.0:
        return math.inf
    first = m * m * math.exp(2.0 * (m - 1) * math.log(r))
    return scale * first / (1.0 - q)


@dataclass(frozen=True)
class EmpiricalEstimate:
    value: float
    squared: float
    exact: bool
    trials: int
    horizon: int
    tail_bound: float


def _difference_energy(M: np.ndarray, L: np.ndarray, d: np.ndarray) -> np.ndarray:
    """``sum_k ||e(k)||**2`` for ``e(k+1) = M e(k) + L d(k)``, ``e(0) = 0``.

    ``d`` has shape ``(trials, steps, p)``; the result has shape ``(trials,)``.
    """
    e = np.zeros((d.shape[0], M.shape[0]))
    total = np.zeros(d.shape[0])
    for k in range(d.shape[1]):
        e = e @ M.T + d[:, k, :] @ L.T
        total += np.einsum("ij,ij->i", e, e)
    return total


def estimate_sensitivity(
    spec: ObserverSpec,
    adj: AdjacencyParams,
    horizon: int = 400,
    trials: int = 1024,
    seed: int = 0,
    *,
    k0: int = 0,
) -> EmpiricalEstimate:
    """Empirical l2 sensitivity with its exactness flag and tail certificate.

    For one output with ``A - LC >= 0`` and ``L >= 0`` every convolution
    term is nonnegative, so a constant positive offset is the worst case
    and one trial is exact. Otherwise the first trial uses a constant
    all-ones direction and the rest draw random unit directions per step,
    which gives a lower estimate.

    Raises:
        StabilityError: if ``||A - LC|| >= 1``.
        DomainError: if ``horizon`` leaves a tail above ``1e-9`` of the sum.
    """
    if horizon < 1 or trials < 1 or k0 < 0:
        raise DomainError("horizon and trials must be positive, k0 nonnegative")
    M = spec.error_matrix
    N = spectral_norm(M)
    if N >= 1.0:
        raise StabilityError(f"||A - LC|| = {N:.6g} >= 1; sensitivity is unbounded")
    exact = spec.p == 1 and is_nonnegative(M) and is_nonnegative(spec.L)
    n_trials = 1 if exact else trials
    rng = np.random.default_rng(seed)

    steps = k0 + horizon
    decay = adj.K * adj.alpha ** np.arange(horizon)
    d = np.zeros((n_trials, steps, spec.p))
    if exact:
        d[0, k0:, 0] = decay
    else:
        d[0, k0:, :] = decay[:, None] * _directions("fixed", horizon, spec.p, rng)
        for t in range(1, n_trials):
            d[t, k0:, :] = decay[:, None] * _directions("random", horizon, spec.p, rng)
    energy = _difference_energy(M, np.asarray(spec.L), d)
    best = float(energy.max())

    tail = tail_bound(spec, adj, horizon)
    if tail > TAIL_FRACTION * best and tail > 0.0:
        raise DomainError(
            f"horizon {horizon} too short: tail bound {tail:.3e} exceeds "
            f"{TAIL_FRACTION:g} of the partial sum {best:.3e}")
    return EmpiricalEstimate(value=math.sqrt(best), squared=best, exact=exact,
                             trials=n_trials, horizon=horizon, tail_bound=tail)


def empirical_sensitivity(
    spec: ObserverSpec,
    adj: AdjacencyParams,
    horizon: int = 400,
    trials: int = 1024,
    seed: int = 0,
) -> float:
    """Square root of the largest ``sum_k ||z(k) - z'(k)||**2`` found."""
    return estimate_sensitivity(spec, adj, horizon, trials, seed).value


@dataclass(frozen=True)
class BoundComparison:
    bound_squared: float
    empirical_squared: float
    ratio: float
    exact: bool
    horizon: int
    trials: int
    tail_bound: float
    N: float

    def to_dict(self) -> dict:
        return {
            "bound_squared": self.bound_squared,
            "empirical_squared": self.empirical_squared,
            "bound": math.sqrt(self.bound_squared),
            "empirical": math.sqrt(self.empirical_squared),
            "ratio": self.ratio,
            "exact": self.exact,
            "horizon": self.horizon,
            "trials": self.trials,
            "tail_bound": self.tail_bound,
            "N": self.N,
        }


def bound_vs_empirical_report(
    spec: ObserverSpec,
    adj: AdjacencyParams,
    horizon: int = 400,
    trials: int = 1024,
    seed: int = 0,
) -> BoundComparison:
    """Compare the closed-form squared bound with the empirical estimate.

    Raises:
        BoundViolationError: if the empirical value exceeds the bound by more
            than ``1e-6`` relative, which can only mean a bug.
    """
    report = l2_sensitivity_bound_squared(spec, adj)
    est = estimate_sensitivity(spec, adj, horizon, trials, seed)
    bound = report.l2_bound_squared
    if bound > 0.0:
        ratio = est.squared / bound
    else:
        ratio = 0.0 if est.squared == 0.0 else math.inf
    if ratio > 1.0 + BOUND_SLACK:
        raise BoundViolationError(
            f"empirical {est.squared:.17g} exceeds bound {bound:.17g} (ratio {ratio:.9f})")
    return BoundComparison(
        bound_squared=bound, empirical_squared=est.squared, ratio=ratio, exact=est.exact,
        horizon=horizon, trials=est.trials, tail_bound=est.tail_bound, N=report.N,
    )
