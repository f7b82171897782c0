"""Time grids, Wiener paths, randomized times and SDE problem definitions.

Coefficient functions follow one calling convention throughout the package:
``drift(t, y)`` and ``diffusion(t, y)`` accept a state ``y`` of shape
``(..., d)`` and a time ``t`` that is a scalar or an array broadcastable to
``y.shape[:-1]``. They return arrays of shape ``(..., d)`` and ``(..., d, m)``
respectively. The leading axes are Monte Carlo replications.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import streams

WIENER = "wiener"
XI = "xi"

Coefficient = Callable[[object, np.ndarray], np.ndarray]


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Uniform partition ``t_i = i*T/n`` of ``[0, T]``."""

    n: int
    T: float
    nodes: np.ndarray = field(repr=False)

    @property
    def step(self) -> float:
        return self.T / self.n

    def same_as(self, other: "TimeGrid") -> bool:
        return self.n == other.n and self.T == other.T


def make_grid(n: int, T: float = 1.0) -> TimeGrid:
    if int(n) != n or n < 1:
        raise ValueError(f"number of steps must be a positive integer, got {n!r}")
    if not T > 0 or not np.isfinite(T):
        raise ValueError(f"horizon T must be positive and finite, got {T!r}")
    n = int(n)
    T = float(T)
    # i*T first, then /n, elementwise; the endpoint is pinned to T.
    nodes = np.arange(n + 1, dtype=np.float64) * T / n
    nodes[-1] = T
    return TimeGrid(n, T, _frozen(nodes))


@dataclass(frozen=True, eq=False)
class WienerPath:
    """Values of an m-dimensional Brownian motion at the grid nodes.

    ``values`` has shape ``(n+1, m)``; a batch of replications is stored with
    shape ``(B, n+1, m)`` and ``seed_info`` then carries the replication array.
    """

    m: int
    grid: TimeGrid
    values: np.ndarray = field(repr=False)
    seed_info: tuple = (None, None)

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values, axis=-2)

    @property
    def terminal(self) -> np.ndarray:
        return self.values[..., -1, :]


def wiener_values(master_seed, replications, grid: TimeGrid, m: int,
                  label: str = WIENER) -> np.ndarray:
    """Raw path array ``(B, n+1, m)`` drawn from the ``label`` stream of each replication."""
    reps = np.atleast_1d(replications)
    z = streams.normals(master_seed, reps, label, grid.n * m)
    z = z.reshape(reps.size, grid.n, m)
    values = np.zeros((reps.size, grid.n + 1, m))
    # cumsum is a sequential left-to-right sum: values[i+1] = values[i] + dW_i
    np.cumsum(np.sqrt(grid.step) * z, axis=1, out=values[:, 1:, :])
    return values


def sample_wiener(master_seed: int, replication: int, grid: TimeGrid, m: int) -> WienerPath:
    if int(m) != m or m < 1:
        raise ValueError(f"Wiener dimension must be a positive integer, got {m!r}")
    values = wiener_values(master_seed, [replication], grid, int(m))[0]
    return WienerPath(int(m), grid, _frozen(values), (master_seed, replication))


def sample_wiener_batch(master_seed: int, replications, grid: TimeGrid, m: int) -> WienerPath:
    """Paths for several replications at once; row k equals ``sample_wiener(seed, reps[k])``."""
    if int(m) != m or m < 1:
        raise ValueError(f"Wiener dimension must be a positive integer, got {m!r}")
    reps = np.atleast_1d(np.asarray(replications, dtype=np.int64))
    values = wiener_values(master_seed, reps, grid, int(m))
    return WienerPath(int(m), grid, values, (master_seed, reps))


@dataclass(frozen=True, eq=False)
class RandomizedTimes:
    grid: TimeGrid
    xi: np.ndarray = field(repr=False)


def _xi_values(master_seed, replications, grid: TimeGrid) -> np.ndarray:
    u = streams.uniforms(master_seed, replications, XI, grid.n)
    left = grid.nodes[:-1]
    xi = left + u * grid.step
    # rounding of t_i + U*h may overshoot t_{i+1} by an ulp
    return np.minimum(xi, grid.nodes[1:])


def sample_randomized_times(master_seed: int, replication: int, grid: TimeGrid) -> RandomizedTimes:
    """Draw ``xi_i`` uniform on ``[t_i, t_{i+1}]`` from the replication's ``xi`` stream."""
    return RandomizedTimes(grid, _frozen(_xi_values(master_seed, [replication], grid)[0]))


def sample_randomized_times_batch(master_seed: int, replications, grid: TimeGrid) -> RandomizedTimes:
    return RandomizedTimes(grid, _xi_values(master_seed, replications, grid))


@dataclass(frozen=True, eq=False)
class SdeProblem:
    """dX = drift(t, X) dt + diffusion(t, X) dW, X(0) = eta, on [0, T].

    ``K`` and ``varrho`` are the declared class constants: Lipschitz and
    growth bounds ``K`` and time-Hoelder exponent ``varrho`` of the diffusion.
    ``exact_terminal(T, w_T)`` gives X(T) as a function of W(T) when known.
    """

    name: str
    d: int
    m: int
    drift: Coefficient
    diffusion: Coefficient
    eta: np.ndarray
    K: float = 1.0
    varrho: float = 1.0
    T: float = 1.0
    exact_terminal: Optional[Callable[[float, np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        eta = _frozen(self.eta)
        if eta.shape != (self.d,):
            raise ValueError(f"eta must have shape ({self.d},), got {eta.shape}")
        if not self.K > 0:
            raise ValueError("K must be positive")
        if not 0 < self.varrho <= 1:
            raise ValueError("varrho must lie in (0, 1]")
        object.__setattr__(self, "eta", eta)

    @property
    def K_bar(self) -> float:
        return self.K * max(1.0, self.T ** self.varrho)


@dataclass(frozen=True, eq=False)
class BlackScholesParams:
    """Multidimensional Black-Scholes model dX_i = mu_i X_i dt + X_i sum_j sigma_ij dW_j."""

    mu: np.ndarray
    sigma: np.ndarray
    x0: np.ndarray

    def __post_init__(self):
        mu, sigma, x0 = _frozen(self.mu), _frozen(self.sigma), _frozen(self.x0)
        if mu.ndim != 1 or x0.shape != mu.shape or sigma.ndim != 2 or sigma.shape[0] != mu.size:
            raise ValueError(
                f"inconsistent shapes: mu {mu.shape}, sigma {sigma.shape}, x0 {x0.shape}")
        # no sign condition on sigma: the built-in examples use zero and negative entries
        if not np.all(np.isfinite(sigma)) or not np.all(np.isfinite(mu)):
            raise ValueError("mu and sigma must be finite")
        if np.any(x0 <= 0):
            raise ValueError("initial value must be componentwise positive")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "x0", x0)

    @property
    def d(self) -> int:
        return self.mu.size

    @property
    def m(self) -> int:
        return self.sigma.shape[1]


def exact_black_scholes(params: BlackScholesParams, T: float, w_terminal) -> np.ndarray:
    """Closed-form X(T) on the path with terminal Brownian value ``w_terminal`` (shape ``(..., m)``)."""
    w = np.asarray(w_terminal, dtype=np.float64)
    if w.shape[-1:] != (params.m,):
        raise ValueError(f"W(T) must have trailing dimension {params.m}, got shape {w.shape}")
    sigma = params.sigma
    exponent = (params.mu - 0.5 * np.sum(sigma * sigma, axis=1)) * T
    exponent = exponent + np.einsum("ij,...j->...i", sigma, w)
    return params.x0 * np.exp(exponent)


def black_scholes_problem(name: str, params: BlackScholesParams, K: float, T: float = 1.0) -> SdeProblem:
    mu, sigma = params.mu, params.sigma

    def drift(t, y):
        return mu * y

    def diffusion(t, y):
        return sigma * y[..., :, None]

    def exact(T_, w):
        return exact_black_scholes(params, T_, w)

    return SdeProblem(name, params.d, params.m, drift, diffusion, params.x0,
                      K=K, varrho=1.0, T=T, exact_terminal=exact)




EXAMPLE1 = BlackScholesParams(
    mu=[0.5, 0.7],
    sigma=[[0.5, 0.7, 0.2],
           [-0.5, -0.7, -0.2]],
    x0=[1.0, 2.0],
)

EXAMPLE2 = BlackScholesParams(
    mu=[0.5, 0.7, 0.4],
    sigma=[[0.5, 0.7, 0.2],
           [0.1, 0.0, 0.013],
           [0.0, 0.75, 0.013]],
    x0=[1.0, 0.1, 0.4],
)


def _example3_drift(t, y):
    x1, x2 = y[..., 0], y[..., 1]
    return 0.5 * np.stack(np.broadcast_arrays(t * np.sin(10.0 * x1), np.cos(7.0 * x2)), axis=-1)


def _example3_diffusion(t, y):
    x1, x2 = y[..., 0], y[..., 1]
    row1 = np.broadcast_arrays(t * x1, t * x2, np.sin(x2))
    row2 = np.broadcast_arrays(t * np.cos(x1), x2, -x1)
    return np.stack([np.stack(row1, axis=-1), np.stack(row2, axis=-1)], axis=-2)


# Declared class constants. K covers the Lipschitz, growth and time-Hoelder
# ratios of the coefficients and the norm of eta.
_EXAMPLE_K = {"example1": 2.5, "example2": 2.5, "example3": 5.0}

BUILTIN_IDS = ("example1", "example2", "example3")


def builtin_problem(problem_id: str) -> SdeProblem:
    if problem_id == "example1":
        return black_scholes_problem("example1", EXAMPLE1, K=_EXAMPLE_K["example1"])
    if problem_id == "example2":
        return black_scholes_problem("example2", EXAMPLE2, K=_EXAMPLE_K["example2"])
    if problem_id == "example3":
        return SdeProblem("example3", 2, 3, _example3_drift, _example3_diffusion,
                          np.array([1.0, 2.0]), K=_EXAMPLE_K["example3"], varrho=1.0, T=1.0)
    raise ValueError(f"unknown problem id {problem_id!r}; expected one of {', '.join(BUILTIN_IDS)}")


@dataclass
class MembershipReport:
    """Largest sampled ratios against the class constants.

    Matrix norms are Frobenius norms. ``eta_norm`` is reported but does not
    enter ``violation``: the built-in initial values are not normalised to K.
    """

    K: float
    K_bar: float
    count: int
    drift_lipschitz: float
    diffusion_lipschitz: float
    diffusion_time_holder: float
    drift_growth: float
    diffusion_growth: float
    drift_at_origin: float
    diffusion_at_origin: float
    eta_norm: float
    violations: list = field(default_factory=list)

    @property
    def violation(self) -> bool:
        return bool(self.violations)

    @property
    def eta_in_class(self) -> bool:
        return self.eta_norm <= self.K


def _norm(a, matrix=False):
    axes = (-2, -1) if matrix else -1
    return np.sqrt(np.sum(a * a, axis=axes))


def check_class_membership(problem: SdeProblem, count: int = 10_000, radius: float = 10.0,
                           seed: int = 0, K: Optional[float] = None,
                           tol: float = 1e-9) -> MembershipReport:
    """Sampled smoke test of the Lipschitz, Hoelder and growth conditions."""
    if count < 1:
        raise ValueError("sample count must be at least 1")
    K = problem.K if K is None else float(K)
    K_bar = K * max(1.0, problem.T ** problem.varrho)
    rng = np.random.default_rng(seed)
    d, T = problem.d, problem.T
    t = rng.uniform(0.0, T, count)
    s = rng.uniform(0.0, T, count)
    x = rng.uniform(-radius, radius, (count, d))
    y = rng.uniform(-radius, radius, (count, d))
    a, b = problem.drift, problem.diffusion

    with np.errstate(divide="ignore", invalid="ignore"):
        dxy = _norm(x - y)
        lip_a = _norm(a(t, x) - a(t, y)) / dxy
        lip_b = _norm(b(t, x) - b(t, y), matrix=True) / dxy
        hold_b = _norm(b(t, x) - b(s, x), matrix=True) / (
            (1.0 + _norm(x)) * np.abs(t - s) ** problem.varrho)
        grow_a = _norm(a(t, x)) / (1.0 + _norm(x))
        grow_b = _norm(b(t, x), matrix=True) / (1.0 + _norm(x))
    zero = np.zeros((count, d))
    origin_a = _norm(a(t, zero))
    origin_b = _norm(b(np.zeros(1), np.zeros((1, d))), matrix=True)

    def worst(v):
        v = v[np.isfinite(v)]
        return float(v.max()) if v.size else 0.0

    report = MembershipReport(
        K=K, K_bar=K_bar, count=count,
        drift_lipschitz=worst(lip_a), diffusion_lipschitz=worst(lip_b),
        diffusion_time_holder=worst(hold_b), drift_growth=worst(grow_a),
        diffusion_growth=worst(grow_b), drift_at_origin=worst(origin_a),
        diffusion_at_origin=worst(origin_b), eta_norm=float(_norm(problem.eta)),
    )
    limit = K * (1.0 + tol)
    for name in ("drift_lipschitz", "diffusion_lipschitz", "diffusion_time_holder",
                 "drift_growth", "drift_at_origin", "diffusion_at_origin"):
        if getattr(report, name) > limit:
            report.violations.append(name)
    if report.diffusion_growth > K_bar * (1.0 + tol):
        report.violations.append("diffusion_growth")
    return report
