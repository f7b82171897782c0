import numpy as np
import pytest

from noisy_euler.core import SdeProblem


def constant_problem(eta, c=0.0, b=0.0, m=None, T=1.0, name="constant"):
    """dX = c dt + b dW with constant coefficients; ``b`` has shape (d, m)."""
    eta = np.atleast_1d(np.asarray(eta, dtype=float))
    d = eta.size
    c = np.broadcast_to(np.asarray(c, dtype=float), (d,)).copy()
    b = np.asarray(b, dtype=float)
    if b.ndim < 2:
        m = m or 1
        b = np.broadcast_to(b, (d, m)).copy()
    m = b.shape[1]

    def drift(t, y):
        return np.broadcast_to(c, np.shape(y)).copy()

    def diffusion(t, y):
        return np.broadcast_to(b, np.shape(y)[:-1] + (d, m)).copy()

    def exact(T_, w):
        return eta + c * T_ + np.einsum("ij,...j->...i", b, w)

    return SdeProblem(name, d, m, drift, diffusion, eta, K=max(1.0, float(np.abs(c).max()),
                      float(np.sqrt((b * b).sum()))), T=T, exact_terminal=exact)


def euler_reference(problem, xi, w_values, T=None):
    """Scalar re-implementation of the exact-information scheme.

    Plain Python floats, one component at a time: the drift increment is
    added first, then the diffusion columns in order.
    """
    T = problem.T if T is None else T
    n = len(xi)
    h = T / n
    x = [float(v) for v in problem.eta]
    d, m = problem.d, problem.m
    for i in range(n):
        t_i = i * T / n if i else 0.0
        state = np.array(x)
        a = problem.drift(xi[i], state)
        b = problem.diffusion(t_i, state)
        dw = [float(w_values[i + 1][j]) - float(w_values[i][j]) for j in range(m)]
        for k in range(d):
            x[k] = x[k] + float(a[k]) * h
        for j in range(m):
            for k in range(d):
                x[k] = x[k] + float(b[k][j]) * dw[j]
    return np.array(x)


@pytest.fixture
def zero_problem():
    return constant_problem([0.3, -1.2], c=0.0, b=np.zeros((2, 2)), name="frozen")
