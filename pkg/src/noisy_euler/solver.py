"""Randomized Euler scheme driven by (possibly) corrupted information.

    X(t_{i+1}) = X(t_i) + a~(xi_i, X(t_i)) * h + b~(t_i, X(t_i)) @ (W~(t_{i+1}) - W~(t_i))

with ``xi_i`` uniform on ``[t_i, t_{i+1}]``. Exact information is the same
code path with zero corruption, so the exact-information scheme is not a
separate implementation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Union

import numpy as np

from .core import RandomizedTimes, SdeProblem, TimeGrid, WienerPath, make_grid
from .corruption import (EXACT_COEFFICIENTS, CoefficientNoise, DisturbedWienerPath,
                         corrupt_wiener_path)

DIVERGENCE_THRESHOLD = 1e300


class DivergedError(ArithmeticError):
    """Raised when the terminal value of a diverged trajectory is requested."""

    def __init__(self, index: int):
        super().__init__(f"trajectory diverged at grid index {index}")
        self.index = index


@dataclass(frozen=True, eq=False)
class SolverInputs:
    problem: SdeProblem
    xi: RandomizedTimes
    wiener: Union[WienerPath, DisturbedWienerPath]
    coeff_noise: CoefficientNoise = EXACT_COEFFICIENTS

    def __post_init__(self):
        grid = self.xi.grid
        if not grid.same_as(self.wiener.grid):
            raise ValueError("randomized times and Wiener path live on different grids")
        if grid.T != self.problem.T:
            raise ValueError(f"grid horizon {grid.T} differs from problem horizon {self.problem.T}")
        if self.wiener.m != self.problem.m:
            raise ValueError(f"Wiener dimension {self.wiener.m} != problem m={self.problem.m}")
        if self.wiener.values.shape[-2] != grid.n + 1:
            raise ValueError("Wiener values do not match the grid")

    @property
    def grid(self) -> TimeGrid:
        return self.xi.grid


@dataclass(frozen=True, eq=False)
class Trajectory:
    grid: TimeGrid
    states: np.ndarray = field(repr=False)
    provenance: dict = field(default_factory=dict)
    diverged_at: Optional[int] = None

    @property
    def diverged(self) -> bool:
        return self.diverged_at is not None


class BatchResult(NamedTuple):
    terminal: np.ndarray
    diverged_at: np.ndarray
    path: Optional[np.ndarray]
    moment_sums: Optional[np.ndarray]


def _diverged(x) -> np.ndarray:
    norm = np.hypot.reduce(x, axis=-1)
    return ~(norm <= DIVERGENCE_THRESHOLD)


def integrate(drift, diffusion, eta, grid: TimeGrid, xi, dW,
              keep_path: bool = False, moments: bool = False) -> BatchResult:
    """Run the recurrence for one replication or a batch.

    ``xi`` has shape ``(*batch, n)`` and ``dW`` shape ``(*batch, n, m)``; the
    batch shape may be empty. ``drift`` is called exactly once per step with
    the randomized times, ``diffusion`` once per step with the left node.
    With ``moments`` the per-node sums of ``|X(t_i)|^2`` over the batch are
    accumulated.
    """
    n, h = grid.n, grid.step
    batch = np.shape(xi)[:-1]
    m = np.shape(dW)[-1]
    eta = np.asarray(eta, dtype=np.float64)
    x = np.array(np.broadcast_to(eta, batch + eta.shape))
    diverged_at = np.full(batch, -1, dtype=np.int64)
    path = None
    if keep_path:
        path = np.empty(batch + (n + 1,) + eta.shape)
        path[..., 0, :] = x
    moment_sums = None
    if moments:
        moment_sums = np.empty(n + 1)
        moment_sums[0] = np.sum(x * x)

    nodes = grid.nodes
    # step-major copies: per-step slices are contiguous across replications
    xi_steps = np.ascontiguousarray(np.moveaxis(np.asarray(xi), -1, 0))
    dW_steps = np.ascontiguousarray(np.moveaxis(np.asarray(dW), -2, 0))
    guard = DIVERGENCE_THRESHOLD / np.sqrt(eta.shape[-1])
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(n):
            a = drift(xi_steps[i], x)
            b = diffusion(nodes[i], x)
            dw = dW_steps[i]
            # drift term first, then the diffusion columns in order
            x = x + a * h
            for j in range(m):
                x = x + b[..., :, j] * dw[..., j, None]
            # max|x| <= guard implies every row norm is within the threshold
            if not np.max(np.abs(x)) <= guard:
                bad = _diverged(x) & (diverged_at < 0)
                diverged_at[bad] = i + 1
            if keep_path:
                path[..., i + 1, :] = x
            if moments:
                moment_sums[i + 1] = np.sum(x * x)
    return BatchResult(x, diverged_at, path, moment_sums)


def randomized_euler(inputs: SolverInputs) -> Trajectory:
    """Single-replication trajectory; use :func:`integrate` for batches."""
    problem, grid = inputs.problem, inputs.grid
    if np.ndim(inputs.xi.xi) != 1:
        raise ValueError("randomized_euler takes one replication; use integrate() for batches")
    drift = inputs.coeff_noise.drift_oracle(problem)
    diffusion = inputs.coeff_noise.diffusion_oracle(problem)
    result = integrate(drift, diffusion, problem.eta, grid, inputs.xi.xi,
                       inputs.wiener.increments, keep_path=True)
    div = int(result.diverged_at)
    provenance = {"problem": problem.name,
                  "delta1": inputs.coeff_noise.delta1, "delta2": inputs.coeff_noise.delta2}
    if isinstance(inputs.wiener, DisturbedWienerPath):
        provenance["delta3"] = inputs.wiener.noise.delta3
        provenance["class"] = str(inputs.wiener.noise.class_tag)
        provenance["seed_info"] = inputs.wiener.base.seed_info
    else:
        provenance["delta3"] = 0.0
        provenance["seed_info"] = inputs.wiener.seed_info
    return Trajectory(grid, result.path, provenance, None if div < 0 else div)


def terminal_value(traj: Trajectory) -> np.ndarray:
    if traj.diverged:
        raise DivergedError(traj.diverged_at)
    return traj.states[..., -1, :]


def coarsen_wiener(fine: Union[WienerPath, DisturbedWienerPath], factor: int):
    """Subsample a path at every ``factor``-th node.

    A disturbed path is coarsened through its base path and corrupted again at
    the coarse nodes, which equals subsampling the disturbed values because
    the corruption is pointwise in ``(t, W(t))``.
    """
    if isinstance(fine, DisturbedWienerPath):
        return corrupt_wiener_path(coarsen_wiener(fine.base, factor), fine.noise)
    if int(factor) != factor or factor < 1 or fine.grid.n % factor:
        raise ValueError(f"factor {factor!r} must be a positive divisor of n={fine.grid.n}")
    factor = int(factor)
    if factor == 1:
        return fine
    grid = make_grid(fine.grid.n // factor, fine.grid.T)
    return WienerPath(fine.m, grid, fine.values[..., ::factor, :], fine.seed_info)
