"""Acceptance-scale Monte Carlo runs, computed once per session and shared."""

from functools import lru_cache

from noisy_euler.harness import ExperimentConfig, estimate_error, fit_rate

SEED = 1
PLATEAU_N = tuple(2 ** k for k in range(4, 15))
# the acceptance tail is stated explicitly and is wider than the largest-quartile default
PLATEAU_TAIL = tuple(2 ** k for k in range(11, 15))


def plateau_config(delta: float, **overrides) -> ExperimentConfig:
    kwargs = dict(problem="example1", noise="linear-k0" if delta else "none",
                  delta1=delta, delta2=delta, delta3=delta, n_list=PLATEAU_N, K=5000,
                  master_seed=SEED)
    kwargs.update(overrides)
    return ExperimentConfig(**kwargs)


@lru_cache(maxsize=None)
def plateau_run(delta: float):
    """Example 1 under linear K0 noise at level ``delta`` (0 means exact information)."""
    table = estimate_error(plateau_config(delta), keep_differences=True)
    return table, fit_rate(table, PLATEAU_TAIL[0], PLATEAU_TAIL[-1])
