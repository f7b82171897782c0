"""Monte Carlo estimation of the strong L^r error and convergence-rate fits.

Each replication j draws one fine Wiener path, coarsens it to every requested
step count n and compares the scheme's terminal value with a reference on
the same path: the closed-form solution (``reference="exact"``) or the
exact-information scheme at ``n_ref`` steps (``reference="self"``). The
error estimate is ``(mean_j |diff_j|^r)^(1/r)``.

Replications are processed in blocks. A block is a pure function of
``(config, replication indices)``, so blocks may run on any worker in any
order.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field
from typing import List, NamedTuple, Optional, Sequence, Union

import numpy as np

from . import core
from .core import SdeProblem, builtin_problem, make_grid, sample_randomized_times_batch
from .corruption import (EXACT_COEFFICIENTS, NOISE_IDS, HolderClass, K0Class, NoiseDraw,
                         draw_noise_batch, holder_sine_wiener_noise, k0_linear_wiener_noise,
                         linear_coefficient_noise)
from .solver import integrate

# values per block, bounds the memory of the fine Wiener paths (~128 MB)
BLOCK_BUDGET = 2 ** 24
MAX_FINE_STEPS = 2 ** 22


@dataclass
class ExperimentConfig:
    """One convergence study. ``problem`` is a built-in id or an :class:`SdeProblem`."""

    problem: Union[str, SdeProblem] = "example1"
    noise: str = "none"
    delta1: float = 0.0
    delta2: float = 0.0
    delta3: float = 0.0
    beta: float = 0.25
    n_list: Sequence[int] = (16, 64, 256, 1024)
    K: int = 2000
    r: float = 2.0
    reference: str = "exact"
    n_ref: int = 2 ** 15
    master_seed: int = 0
    fixed_noise: Optional[Sequence[float]] = None
    coupled: bool = True

    def __post_init__(self):
        self.n_list = tuple(int(n) for n in self.n_list)
        if self.fixed_noise is not None:
            self.fixed_noise = tuple(float(u) for u in self.fixed_noise)

    def validate(self) -> SdeProblem:
        problem = self.problem
        if not isinstance(problem, SdeProblem):
            problem = builtin_problem(problem)
        if self.noise not in NOISE_IDS:
            raise ValueError(f"unknown noise model {self.noise!r}; expected one of {', '.join(NOISE_IDS)}")
        for name in ("delta1", "delta2", "delta3"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value!r}")
            if self.noise == "none" and value != 0:
                raise ValueError(f"noise model 'none' requires {name} = 0")
        if self.noise == "holder-sine" and not 0 < self.beta <= 1:
            raise ValueError(f"beta must lie in (0, 1], got {self.beta!r}")
        if not self.n_list or any(n < 1 for n in self.n_list):
            raise ValueError("n_list must hold positive step counts")
        if int(self.K) != self.K or self.K < 2:
            raise ValueError(f"K must be an integer >= 2, got {self.K!r}")
        if not self.r >= 2:
            raise ValueError(f"r must be at least 2, got {self.r!r}")
        if self.reference == "exact":
            if problem.exact_terminal is None:
                raise ValueError(f"problem {problem.name!r} has no exact solution; use reference 'self'")
        elif self.reference == "self":
            if self.n_ref < 1:
                raise ValueError("n_ref must be positive")
            bad = [n for n in self.n_list if self.n_ref % n]
            if bad:
                raise ValueError(f"n_ref={self.n_ref} is not divisible by n in {bad}")
        else:
            raise ValueError(f"reference must be 'exact' or 'self', got {self.reference!r}")
        if self.fixed_noise is not None and len(self.fixed_noise) != 3:
            raise ValueError("fixed_noise takes three values u1,u2,u3")
        if self.fine_steps() > MAX_FINE_STEPS:
            raise ValueError(f"fine resolution {self.fine_steps()} exceeds {MAX_FINE_STEPS}")
        return problem

    @property
    def class_tag(self) -> str:
        if self.noise == "none":
            return "none"
        if self.noise == "linear-k0":
            return str(K0Class())
        return str(HolderClass(1.0, self.beta))

    def fine_steps(self) -> int:
        """Resolution of the shared fine path; every compared step count divides it."""
        steps = list(self.n_list)
        if self.reference == "self":
            steps.append(self.n_ref)
        fine = 1
        for n in steps:
            fine = math.lcm(fine, n)
        return fine

    def to_dict(self) -> dict:
        out = asdict(self)
        if isinstance(self.problem, SdeProblem):
            out["problem"] = self.problem.name
        out["n_list"] = list(self.n_list)
        if self.fixed_noise is not None:
            out["fixed_noise"] = list(self.fixed_noise)
        return out


@dataclass
class ErrorRow:
    n: int
    delta1: float
    delta2: float
    delta3: float
    class_tag: str
    r: float
    error: float
    std_error: float
    diverged_count: int
    K_effective: int


@dataclass
class ErrorTable:
    rows: List[ErrorRow] = field(default_factory=list)
    # per-n replication differences, kept only on request
    differences: Optional[dict] = None

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(row, name) for row in self.rows])

    def row(self, n: int) -> ErrorRow:
        for row in self.rows:
            if row.n == n:
                return row
        raise KeyError(n)


class RateFit(NamedTuple):
    slope: float
    intercept: float
    residual: float
    n_range: tuple


def _norms(diffs) -> np.ndarray:
    # hypot avoids overflow of the squared components
    return np.hypot.reduce(diffs, axis=-1)


class _PowerSums:
    """Running ``sum q`` and ``sum q^2`` of ``q = (|d|/scale)^r``, rescaled as the max grows."""

    def __init__(self, r: float):
        self.r = r
        self.scale = 0.0
        self.s1 = 0.0
        self.s2 = 0.0
        self.k = 0

    def add(self, norms: np.ndarray) -> "_PowerSums":
        if norms.size == 0:
            return self
        top = float(np.max(norms))
        if top > self.scale:
            if self.scale > 0:
                f = (self.scale / top) ** self.r
                self.s1 *= f
                self.s2 *= f * f
            self.scale = top
        if self.scale > 0:
            q = (norms / self.scale) ** self.r
            self.s1 += float(np.sum(q))
            self.s2 += float(np.sum(q * q))
        self.k += norms.size
        return self

    def result(self):
        """Error estimate and its delta-method standard error."""
        k, r = self.k, self.r
        if k == 0:
            return float("nan"), float("nan")
        if self.scale == 0:
            return 0.0, 0.0
        if math.isinf(self.scale):
            return float("inf"), float("nan")
        mean = self.s1 / k
        error = self.scale * mean ** (1.0 / r)
        if k < 2:
            return float(error), 0.0
        var = max(self.s2 - self.s1 * self.s1 / k, 0.0) / (k - 1)
        return float(error), float(self.scale * math.sqrt(var / k) * mean ** (1.0 / r - 1.0) / r)


def strong_error(differences, r: float = 2.0):
    """``(mean_j |d_j|^r)^(1/r)`` and its delta-method standard error.

    ``differences`` has shape ``(k, d)``; rows containing NaN are dropped.
    Norms are divided by their maximum before the power is taken, so errors
    near the floating-point range stay finite.
    """
    diffs = np.asarray(differences, dtype=np.float64)
    norms = _norms(diffs[~np.isnan(diffs).any(axis=-1)])
    k = norms.size
    if k == 0:
        return float("nan"), float("nan")
    scale = float(np.max(norms))
    if scale == 0:
        return 0.0, 0.0
    if math.isinf(scale):
        return float("inf"), float("nan")
    q = (norms / scale) ** r
    mean = np.sum(q) / k
    error = scale * mean ** (1.0 / r)
    if k < 2:
        return float(error), 0.0
    se = scale * np.std(q, ddof=1) / math.sqrt(k) * mean ** (1.0 / r - 1.0) / r
    return float(error), float(se)


def _noise_for(config: ExperimentConfig, problem: SdeProblem, reps):
    if config.noise == "none":
        return EXACT_COEFFICIENTS, None
    if config.fixed_noise is not None:
        draw = NoiseDraw.fixed(*config.fixed_noise, size=len(reps))
    else:
        draw = draw_noise_batch(config.master_seed, reps)
    coeff = linear_coefficient_noise(problem, draw, config.delta1, config.delta2)
    if config.noise == "linear-k0":
        wiener = k0_linear_wiener_noise(draw, config.delta3)
    else:
        wiener = holder_sine_wiener_noise(draw, config.delta3, config.beta)
    return coeff, wiener


def _paths(config: ExperimentConfig, problem: SdeProblem, reps, n_fine: int, n: Optional[int] = None):
    grid = make_grid(n_fine, problem.T)
    label = core.WIENER if n is None else f"{core.WIENER}/{n}"
    return grid, core.wiener_values(config.master_seed, reps, grid, problem.m, label)


def _run_block(config: ExperimentConfig, problem: SdeProblem, reps: np.ndarray) -> dict:
    """Per-n terminal differences ``(B, d)`` for one block; NaN rows mark divergence."""
    coeff, wiener_noise = _noise_for(config, problem, reps)
    drift = coeff.drift_oracle(problem)
    diffusion = coeff.diffusion_oracle(problem)
    T = problem.T

    def reference(grid, values):
        if config.reference == "exact":
            return problem.exact_terminal(T, values[:, -1, :])
        factor = grid.n // config.n_ref
        ref_grid = make_grid(config.n_ref, T)
        xi = sample_randomized_times_batch(config.master_seed, reps, ref_grid).xi
        dW = np.diff(values[:, ::factor, :], axis=1)
        res = integrate(problem.drift, problem.diffusion, problem.eta, ref_grid, xi, dW)
        out = res.terminal.copy()
        out[res.diverged_at >= 0] = np.nan
        return out

    shared = None
    if config.coupled:
        grid, values = _paths(config, problem, reps, config.fine_steps())
        shared = (grid, values, reference(grid, values))

    out = {}
    for n in config.n_list:
        if shared is None:
            fine = config.n_ref if config.reference == "self" else n
            grid, values = _paths(config, problem, reps, fine, n)
            ref = reference(grid, values)
        else:
            grid, values, ref = shared
        grid_n = make_grid(n, T)
        base = values[:, ::grid.n // n, :]
        if wiener_noise is not None and wiener_noise.delta3 != 0:
            observed = base + wiener_noise.delta3 * wiener_noise.p_w(grid_n.nodes, base)
        else:
            observed = base
        xi = sample_randomized_times_batch(config.master_seed, reps, grid_n).xi
        res = integrate(drift, diffusion, problem.eta, grid_n, xi, np.diff(observed, axis=1))
        diff = res.terminal - ref
        diff[res.diverged_at >= 0] = np.nan
        out[n] = diff
    return out


def _blocks(K: int, fine: int, m: int, block_size: Optional[int]):
    if block_size is None:
        block_size = max(1, min(K, BLOCK_BUDGET // ((fine + 1) * m)))
    return [np.arange(s, min(s + block_size, K)) for s in range(0, K, block_size)]


def default_threads() -> int:
    env = os.environ.get("NOISY_EULER_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _map_blocks(fn, blocks, threads: int, ordered: bool):
    """Yield ``(block index, result)``; in completion order unless ``ordered``."""
    if threads <= 1:
        for k, b in enumerate(blocks):
            yield k, fn(b)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = {pool.submit(fn, b): k for k, b in enumerate(blocks)}
        if ordered:
            for fut, k in sorted(futures.items(), key=lambda kv: kv[1]):
                yield k, fut.result()
        else:
            for fut in as_completed(futures):
                yield futures[fut], fut.result()


def estimate_error(config: ExperimentConfig, threads: Optional[int] = None,
                   deterministic: bool = True, keep_differences: bool = False,
                   block_size: Optional[int] = None) -> ErrorTable:
    """Monte Carlo strong-error table, one row per step count in ``config.n_list``.

    In deterministic mode the per-replication differences are reduced in
    replication order and the table is bitwise reproducible. Otherwise block
    partial sums are combined as blocks finish.
    """
    problem = config.validate()
    threads = default_threads() if threads is None else max(1, int(threads))
    K, r = int(config.K), float(config.r)
    blocks = _blocks(K, config.fine_steps(), problem.m, block_size)

    def work(reps):
        return _run_block(config, problem, reps)

    exact_mode = deterministic or keep_differences
    collected = {n: [None] * len(blocks) for n in config.n_list}
    sums = {n: _PowerSums(r) for n in config.n_list}
    for k, result in _map_blocks(work, blocks, threads, ordered=exact_mode):
        for n, diff in result.items():
            if exact_mode:
                collected[n][k] = diff
            else:
                ok = ~np.isnan(diff).any(axis=-1)
                sums[n].add(_norms(diff[ok]))

    table = ErrorTable(differences={} if keep_differences else None)
    for n in config.n_list:
        if exact_mode:
            diffs = np.concatenate(collected[n], axis=0)
            k_eff = int((~np.isnan(diffs).any(axis=-1)).sum())
            error, se = strong_error(diffs, r)
            if keep_differences:
                table.differences[n] = diffs
        else:
            k_eff = sums[n].k
            error, se = sums[n].result()
        table.rows.append(ErrorRow(n, config.delta1, config.delta2, config.delta3,
                                   config.class_tag, r, error, se, K - k_eff, k_eff))
    return table


def fit_rate(table: ErrorTable, n_min: Optional[float] = None,
             n_max: Optional[float] = None) -> RateFit:
    """Least-squares line through ``(ln n, ln error)`` for rows in ``[n_min, n_max]``."""
    n = table.column("n").astype(np.float64)
    err = table.column("error").astype(np.float64)
    lo = -np.inf if n_min is None else n_min
    hi = np.inf if n_max is None else n_max
    use = (n >= lo) & (n <= hi) & np.isfinite(err) & (err > 0)
    if use.sum() < 2:
        raise ValueError(f"need at least 2 usable rows in [{lo}, {hi}], got {int(use.sum())}")
    x, y = np.log(n[use]), np.log(err[use])
    A = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (slope * x + intercept)
    return RateFit(float(slope), float(intercept), float(np.sqrt(np.mean(resid ** 2))),
                   (int(n[use].min()), int(n[use].max())))


def tail_window(n_list: Sequence[int]) -> List[int]:
    """The largest quarter of the step counts, at least two of them."""
    ns = sorted(set(n_list))
    size = min(len(ns), max(2, math.ceil(len(ns) / 4)))
    return ns[-size:]


class SweepResult(NamedTuple):
    config: ExperimentConfig
    table: ErrorTable
    fit: Optional[RateFit]
    tail_fit: Optional[RateFit]


def _safe_fit(table, n_min=None, n_max=None):
    try:
        return fit_rate(table, n_min, n_max)
    except ValueError:
        return None


def run_sweep(configs: Sequence[ExperimentConfig], threads: Optional[int] = None,
              deterministic: bool = True) -> List[SweepResult]:
    results = []
    for config in configs:
        table = estimate_error(config, threads=threads, deterministic=deterministic)
        tail = tail_window(config.n_list)
        results.append(SweepResult(config, table, _safe_fit(table),
                                   _safe_fit(table, tail[0], tail[-1])))
    return results


def moment_profile(config: ExperimentConfig, n: int, threads: Optional[int] = None) -> np.ndarray:
    """Empirical ``E|X(t_i)|^2`` at every node of the n-step grid."""
    problem = config.validate()
    threads = default_threads() if threads is None else max(1, int(threads))
    grid = make_grid(n, problem.T)

    def work(reps):
        coeff, wiener_noise = _noise_for(config, problem, reps)
        values = core.wiener_values(config.master_seed, reps, grid, problem.m)
        if wiener_noise is not None and wiener_noise.delta3 != 0:
            values = values + wiener_noise.delta3 * wiener_noise.p_w(grid.nodes, values)
        xi = sample_randomized_times_batch(config.master_seed, reps, grid).xi
        res = integrate(coeff.drift_oracle(problem), coeff.diffusion_oracle(problem),
                        problem.eta, grid, xi, np.diff(values, axis=1), moments=True)
        return res.moment_sums

    blocks = _blocks(int(config.K), n, problem.m, None)
    total = np.zeros(n + 1)
    for _, sums in _map_blocks(work, blocks, threads, ordered=True):
        total += sums
    return total / config.K
