import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import constant_problem, euler_reference
from noisy_euler.core import (SdeProblem, WienerPath, builtin_problem, make_grid,
                              sample_randomized_times, sample_randomized_times_batch,
                              sample_wiener, sample_wiener_batch)
from noisy_euler.corruption import (NoiseDraw, WienerNoise, K0Class, corrupt_wiener_path,
                                    holder_sine_wiener_noise, k0_linear_wiener_noise,
                                    linear_coefficient_noise)
from noisy_euler.solver import (DivergedError, SolverInputs, coarsen_wiener, integrate,
                                randomized_euler, terminal_value)


def run(problem, n, seed=0, rep=0, coeff=None, wiener_noise=None):
    grid = make_grid(n, problem.T)
    path = sample_wiener(seed, rep, grid, problem.m)
    if wiener_noise is not None:
        path = corrupt_wiener_path(path, wiener_noise)
    xi = sample_randomized_times(seed, rep, grid)
    kwargs = {} if coeff is None else {"coeff_noise": coeff}
    return randomized_euler(SolverInputs(problem, xi, path, **kwargs))


@pytest.mark.parametrize("n", [1, 5, 32])
def test_frozen_dynamics(zero_problem, n):
    noise = k0_linear_wiener_noise(NoiseDraw.fixed(1, 1, 1), 0.0)
    traj = run(zero_problem, n, wiener_noise=noise)
    assert traj.states.shape == (n + 1, 2)
    assert np.all(traj.states == zero_problem.eta)
    assert terminal_value(traj).tolist() == zero_problem.eta.tolist()


@pytest.mark.parametrize("n", [1, 7, 64, 1000])
def test_additive_noise_identity(n):
    p = constant_problem([0.25], c=0.0, b=1.0)
    traj = run(p, n, seed=3)
    w_T = sample_wiener(3, 0, make_grid(n), 1).terminal
    assert terminal_value(traj)[0] == pytest.approx(0.25 + w_T[0], rel=1e-12, abs=1e-15)


@pytest.mark.parametrize("n", [1, 7, 64, 1000])
@pytest.mark.parametrize("c", [-1.3, 0.1, 2.0])
def test_constant_drift_identity(n, c):
    p = constant_problem([1.0], c=c, b=0.0, T=2.0)
    assert terminal_value(run(p, n))[0] == pytest.approx(1.0 + 2.0 * c, rel=1e-12)


def test_n1_additive_terminal():
    p = constant_problem([0.5, -0.5], c=0.0, b=np.eye(2))
    traj = run(p, 1, seed=9)
    w = sample_wiener(9, 0, make_grid(1), 2).values
    np.testing.assert_array_equal(terminal_value(traj), p.eta + (w[1] - w[0]))


@pytest.mark.parametrize("pid", ["example1", "example2", "example3"])
@pytest.mark.parametrize("n", [1, 10, 128])
def test_matches_scalar_reference_bitwise(pid, n):
    p = builtin_problem(pid)
    for seed in (0, 1, 2**63 + 5):
        grid = make_grid(n)
        path = sample_wiener(seed, 4, grid, p.m)
        xi = sample_randomized_times(seed, 4, grid)
        traj = randomized_euler(SolverInputs(p, xi, path))
        ref = euler_reference(p, xi.xi, path.values)
        assert terminal_value(traj).tobytes() == ref.tobytes()


@pytest.mark.parametrize("pid", ["example1", "example3"])
def test_batch_rows_match_single_runs(pid):
    p = builtin_problem(pid)
    grid = make_grid(50)
    reps = np.arange(6)
    paths = sample_wiener_batch(2, reps, grid, p.m)
    xi = sample_randomized_times_batch(2, reps, grid).xi
    batch = integrate(p.drift, p.diffusion, p.eta, grid, xi, paths.increments)
    for j in reps:
        single = run(p, 50, seed=2, rep=j)
        assert batch.terminal[j].tobytes() == terminal_value(single).tobytes()


def test_evaluation_points():
    p = builtin_problem("example3")
    calls = {"drift": [], "diffusion": []}

    def drift(t, y):
        calls["drift"].append(float(t))
        return p.drift(t, y)

    def diffusion(t, y):
        calls["diffusion"].append(float(t))
        return p.diffusion(t, y)

    spy = SdeProblem("spy", 2, 3, drift, diffusion, p.eta)
    n = 37
    grid = make_grid(n)
    xi = sample_randomized_times(5, 0, grid)
    randomized_euler(SolverInputs(spy, xi, sample_wiener(5, 0, grid, 3)))
    assert calls["drift"] == xi.xi.tolist()
    assert calls["diffusion"] == grid.nodes[:-1].tolist()


@pytest.mark.parametrize("pid", ["example1", "example3"])
def test_linear_noise_equivariance(pid):
    p = builtin_problem(pid)
    u2, u3, d2, d3 = -0.6, 0.9, 0.3, 0.2
    draw = NoiseDraw.fixed(0.4, u2, u3)
    grid = make_grid(64)
    base = sample_wiener(1, 0, grid, p.m)
    xi = sample_randomized_times(1, 0, grid)
    coeff = linear_coefficient_noise(p, draw, 0.1, d2)
    noisy = randomized_euler(SolverInputs(p, xi, corrupt_wiener_path(
        base, k0_linear_wiener_noise(draw, d3)), coeff))

    scale = (1 + d2 * u2) * (1 + d3 * u3)
    folded = SdeProblem("folded", p.d, p.m, p.drift,
                        lambda t, y: scale * p.diffusion(t, y), p.eta)
    coeff_a = linear_coefficient_noise(folded, NoiseDraw.fixed(0.4, 0, 0), 0.1, 0.0)
    clean = randomized_euler(SolverInputs(folded, xi, base, coeff_a))
    np.testing.assert_allclose(noisy.states, clean.states, rtol=1e-12, atol=1e-300)


def test_exact_information_is_structural():
    p = builtin_problem("example1")
    grid = make_grid(32)
    path = sample_wiener(0, 0, grid, 3)
    xi = sample_randomized_times(0, 0, grid)
    plain = randomized_euler(SolverInputs(p, xi, path))
    zeroed = randomized_euler(SolverInputs(
        p, xi, corrupt_wiener_path(path, holder_sine_wiener_noise(NoiseDraw.fixed(1, 1, 1), 0.0, 0.5)),
        linear_coefficient_noise(p, NoiseDraw.fixed(1, 1, 1), 0.0, 0.0)))
    assert plain.states.tobytes() == zeroed.states.tobytes()
    assert zeroed.provenance["delta3"] == 0.0


@pytest.mark.slow
def test_fine_grid_close_to_exact_solution():
    p = builtin_problem("example1")
    n = 2 ** 20
    traj = run(p, n, seed=7)
    w_T = sample_wiener(7, 0, make_grid(n), 3).terminal
    err = np.linalg.norm(terminal_value(traj) - p.exact_terminal(1.0, w_T))
    assert err <= 3 / math.sqrt(n)


def test_divergence_is_reported():
    p = SdeProblem("blowup", 1, 1, lambda t, y: 1e100 * y,
                   lambda t, y: np.zeros(np.shape(y) + (1,)), np.ones(1))
    traj = run(p, 10)
    assert traj.diverged and traj.diverged_at == 4
    with pytest.raises(DivergedError) as info:
        terminal_value(traj)
    assert info.value.index == 4


def test_batch_divergence_flags_only_offending_rows():
    # the drift explodes only for rows whose randomized times lie past 0.5
    def drift(t, y):
        return 1e100 * y * (np.asarray(t)[..., None] > 0.5)

    grid = make_grid(10)
    xi = np.array([np.full(10, 0.9), np.full(10, 0.1)])
    res = integrate(drift, lambda t, y: np.zeros(np.shape(y) + (1,)), np.ones(1), grid,
                    xi, np.zeros((2, 10, 1)))
    assert res.diverged_at.tolist() == [4, -1]
    assert res.terminal[1, 0] == 1.0


def test_solver_inputs_consistency():
    p = builtin_problem("example1")
    g8, g16 = make_grid(8), make_grid(16)
    with pytest.raises(ValueError):
        SolverInputs(p, sample_randomized_times(0, 0, g8), sample_wiener(0, 0, g16, 3))
    with pytest.raises(ValueError):
        SolverInputs(p, sample_randomized_times(0, 0, g8), sample_wiener(0, 0, g8, 2))
    g_long = make_grid(8, 2.0)
    with pytest.raises(ValueError):
        SolverInputs(p, sample_randomized_times(0, 0, g_long), sample_wiener(0, 0, g_long, 3))


def test_randomized_euler_rejects_batches():
    p = builtin_problem("example1")
    grid = make_grid(4)
    xi = sample_randomized_times_batch(0, [0, 1], grid)
    with pytest.raises(ValueError):
        randomized_euler(SolverInputs(p, xi, sample_wiener(0, 0, grid, 3)))


def test_coarsen_examples():
    grid = make_grid(4)
    values = np.array([[0.0], [1.0], [2.0], [3.0], [4.0]])
    fine = WienerPath(1, grid, values)
    assert coarsen_wiener(fine, 1) is fine
    coarse = coarsen_wiener(fine, 2)
    assert coarse.values[:, 0].tolist() == [0.0, 2.0, 4.0]
    assert coarse.grid.n == 2 and coarse.grid.nodes.tolist() == [0.0, 0.5, 1.0]
    assert coarsen_wiener(fine, 4).values[:, 0].tolist() == [0.0, 4.0]


@pytest.mark.parametrize("factor", [0, 3, -2, 1.5])
def test_coarsen_rejects_non_divisors(factor):
    with pytest.raises(ValueError):
        coarsen_wiener(sample_wiener(0, 0, make_grid(8), 1), factor)


@pytest.mark.parametrize("noise", [
    k0_linear_wiener_noise(NoiseDraw.fixed(0, 0, 0.7), 0.3),
    holder_sine_wiener_noise(NoiseDraw.fixed(0, 0, -0.4), 0.8, 0.25),
    WienerNoise(0.5, K0Class(), lambda t, x: np.cos(np.asarray(t))[..., None] * np.tanh(x)),
])
@pytest.mark.parametrize("factor", [2, 8, 64])
def test_corrupt_and_coarsen_commute(noise, factor):
    base = sample_wiener(3, 1, make_grid(128), 3)
    a = coarsen_wiener(corrupt_wiener_path(base, noise), factor)
    b = corrupt_wiener_path(coarsen_wiener(base, factor), noise)
    direct = corrupt_wiener_path(base, noise).values[::factor]
    assert a.values.tobytes() == b.values.tobytes()
    np.testing.assert_allclose(a.values, direct, rtol=1e-15, atol=1e-300)
    assert a.base.values.tobytes() == base.values[::factor].tobytes()


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**64 - 1), st.sampled_from([1, 2, 4, 16]))
def test_coarsened_path_drives_coarse_scheme(seed, factor):
    p = builtin_problem("example1")
    fine = sample_wiener(seed, 0, make_grid(16), 3)
    coarse = coarsen_wiener(fine, factor)
    grid = coarse.grid
    xi = sample_randomized_times(seed, 0, grid)
    traj = randomized_euler(SolverInputs(p, xi, coarse))
    assert terminal_value(traj).tobytes() == euler_reference(p, xi.xi, coarse.values).tobytes()
