"""Inexact information: perturbed coefficients and disturbed Wiener values.

A perturbed drift is ``a + delta1 * p_a`` and a perturbed diffusion is
``b + delta2 * p_b``; the Wiener process is observed as
``W(t) + delta3 * p_w(t, W(t))``. The concrete corrupting functions scale the
exact coefficients (or the Wiener value) by per-replication uniform draws
``u1, u2, u3`` on [-1, 1].

Draw components may be floats (one replication) or arrays of shape ``(B,)``
(a batch); they are broadcast against the leading replication axis of
whatever they multiply.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from . import streams
from .core import SdeProblem, WienerPath

NOISE = "noise"
NOISE_IDS = ("none", "linear-k0", "holder-sine")


def _lead(u, ndim: int):
    """Reshape a draw so its replication axis lines up with an ``ndim`` array."""
    u = np.asarray(u)
    if u.ndim == 0:
        return u[()]
    return u.reshape(u.shape + (1,) * (ndim - u.ndim))


@dataclass(frozen=True)
class NoiseDraw:
    u1: Union[float, np.ndarray]
    u2: Union[float, np.ndarray]
    u3: Union[float, np.ndarray]

    def __post_init__(self):
        for name in ("u1", "u2", "u3"):
            v = np.asarray(getattr(self, name))
            if np.any(np.abs(v) > 1) or not np.all(np.isfinite(v)):
                raise ValueError(f"{name} must lie in [-1, 1]")

    @classmethod
    def fixed(cls, u1, u2, u3, size: Optional[int] = None) -> "NoiseDraw":
        if size is None:
            return cls(float(u1), float(u2), float(u3))
        return cls(*(np.full(size, float(u)) for u in (u1, u2, u3)))


def draw_noise_batch(master_seed: int, replications) -> NoiseDraw:
    u = 2.0 * streams.uniforms(master_seed, replications, NOISE, 3) - 1.0
    return NoiseDraw(u[:, 0], u[:, 1], u[:, 2])


def draw_noise(master_seed: int, replication: int) -> NoiseDraw:
    """Three independent uniforms on [-1, 1] from the replication's ``noise`` stream."""
    batch = draw_noise_batch(master_seed, [replication])
    return NoiseDraw(float(batch.u1[0]), float(batch.u2[0]), float(batch.u3[0]))


def _check_delta(name, value):
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value!r}")
    return float(value)


@dataclass(frozen=True, eq=False)
class CoefficientNoise:
    delta1: float
    delta2: float
    p_a: Optional[Callable] = None
    p_b: Optional[Callable] = None

    def __post_init__(self):
        object.__setattr__(self, "delta1", _check_delta("delta1", self.delta1))
        object.__setattr__(self, "delta2", _check_delta("delta2", self.delta2))
        if self.delta1 > 0 and self.p_a is None:
            raise ValueError("delta1 > 0 requires a corrupting function p_a")
        if self.delta2 > 0 and self.p_b is None:
            raise ValueError("delta2 > 0 requires a corrupting function p_b")

    def drift_oracle(self, problem: SdeProblem) -> Callable:
        a = problem.drift
        if self.delta1 == 0:
            return a
        p_a, delta = self.p_a, self.delta1

        def noisy_drift(t, y):
            return a(t, y) + delta * p_a(t, y)
        return noisy_drift

    def diffusion_oracle(self, problem: SdeProblem) -> Callable:
        b = problem.diffusion
        if self.delta2 == 0:
            return b
        p_b, delta = self.p_b, self.delta2

        def noisy_diffusion(t, y):
            return b(t, y) + delta * p_b(t, y)
        return noisy_diffusion

    def growth_constants(self, problem: SdeProblem, count: int = 1000,
                         radius: float = 10.0, seed: int = 0) -> dict:
        """Observed sup of ``|p(t,y)| / (1 + |y|)`` for ``p_a`` and ``p_b``.

        Membership in the corrupting class needs both values to be at most 1.
        """
        rng = np.random.default_rng(seed)
        t = rng.uniform(0.0, problem.T, count)
        y = rng.uniform(-radius, radius, (count, problem.d))
        scale = 1.0 + np.sqrt(np.sum(y * y, axis=-1))
        out = {}
        for name, p, axes in (("p_a", self.p_a, -1), ("p_b", self.p_b, (-2, -1))):
            if p is None:
                out[name] = 0.0
                continue
            v = p(t, y)
            out[name] = float(np.max(np.sqrt(np.sum(v * v, axis=axes)) / scale))
        return out


EXACT_COEFFICIENTS = CoefficientNoise(0.0, 0.0)


def linear_coefficient_noise(problem: SdeProblem, draw: NoiseDraw,
                             delta1: float, delta2: float) -> CoefficientNoise:
    """``p_a = u1 * a`` and ``p_b = u2 * b``."""
    a, b = problem.drift, problem.diffusion
    u1, u2 = draw.u1, draw.u2

    def p_a(t, y):
        v = a(t, y)
        return _lead(u1, v.ndim) * v

    def p_b(t, y):
        v = b(t, y)
        return _lead(u2, v.ndim) * v

    return CoefficientNoise(delta1, delta2, p_a, p_b)


@dataclass(frozen=True)
class K0Class:
    """Smooth corrupting functions with unit-bounded value and derivatives."""

    def __str__(self):
        return "K0"


@dataclass(frozen=True)
class HolderClass:
    alpha: float
    beta: float

    def __post_init__(self):
        if not (0 < self.alpha <= 1 and 0 < self.beta <= 1):
            raise ValueError("Hoelder exponents must lie in (0, 1]")

    @property
    def gamma(self) -> float:
        return min(self.alpha, self.beta / 2)

    def __str__(self):
        return f"holder({self.alpha:g};{self.beta:g})"


@dataclass(frozen=True, eq=False)
class WienerNoise:
    delta3: float
    class_tag: Union[K0Class, HolderClass]
    p_w: Callable

    def __post_init__(self):
        object.__setattr__(self, "delta3", _check_delta("delta3", self.delta3))


def k0_linear_wiener_noise(draw: NoiseDraw, delta3: float) -> WienerNoise:
    """``p_w(t, x) = u3 * x``."""
    u3 = draw.u3

    def p_w(t, x):
        x = np.asarray(x, dtype=np.float64)
        return _lead(u3, x.ndim) * x

    return WienerNoise(delta3, K0Class(), p_w)


def holder_sine_wiener_noise(draw: NoiseDraw, delta3: float, beta: float,
                             frequency: float = 100.0) -> WienerNoise:
    """``p_w(t, x) = u3 * sgn(sin(100|x|)) * |sin(100|x|)|**beta`` on every component.

    The scalar value is shared by all m components.
    """
    tag = HolderClass(1.0, beta)
    u3 = draw.u3

    def p_w(t, x):
        x = np.asarray(x, dtype=np.float64)
        s = np.sin(frequency * np.sqrt(np.sum(x * x, axis=-1, keepdims=True)))
        v = np.sign(s) * np.abs(s) ** beta
        return np.broadcast_to(_lead(u3, x.ndim) * v, x.shape)

    return WienerNoise(delta3, tag, p_w)


@dataclass(frozen=True, eq=False)
class DisturbedWienerPath:
    base: WienerPath
    noise: WienerNoise
    values: np.ndarray = field(repr=False)

    @property
    def grid(self):
        return self.base.grid

    @property
    def m(self) -> int:
        return self.base.m

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values, axis=-2)


def corrupt_wiener_path(base: WienerPath, noise: WienerNoise) -> DisturbedWienerPath:
    """``W~(t_i) = W(t_i) + delta3 * p_w(t_i, W(t_i))`` at every node."""
    if noise.delta3 == 0:
        return DisturbedWienerPath(base, noise, base.values)
    # nodes index the second-to-last axis of the values
    t = base.grid.nodes
    p = np.asarray(noise.p_w(t, base.values))
    if p.shape != base.values.shape:
        raise ValueError(
            f"corrupting function returned shape {p.shape}, expected {base.values.shape}")
    return DisturbedWienerPath(base, noise, base.values + noise.delta3 * p)


@dataclass
class ValidationReport:
    """Outcome of a sampled class check for a corrupting function."""

    class_name: str
    passed: bool
    count: int
    maxima: dict
    limit: float
    invalid_samples: int = 0
    worst_ratio: float = float("nan")

    def lines(self) -> list:
        out = [f"class: {self.class_name}",
               f"samples: {self.count} (invalid: {self.invalid_samples})"]
        for key, value in self.maxima.items():
            out.append(f"max {key}: {value:.6g}")
        if not math.isnan(self.worst_ratio):
            out.append(f"worst ratio: {self.worst_ratio:.6g}")
        out.append(f"limit: {self.limit:.6g}")
        out.append("result: " + ("pass" if self.passed else "VIOLATION"))
        return out


def validate_k0(p_w: Callable, m: int, count: int = 10_000, radius: float = 10.0,
                seed: int = 0, T: float = 1.0, h: float = 1e-5,
                slack: float = 1e-3) -> ValidationReport:
    """Central finite-difference check of the K0 derivative bounds.

    For each component p^j: ``|p^j(0,0)|``, ``|dp^j/dt|``, the Euclidean norm of
    the spatial gradient and the Frobenius norm of the spatial Hessian must
    not exceed ``1 + slack``.
    """
    if count < 1:
        raise ValueError("sample count must be at least 1")
    rng = np.random.default_rng(seed)
    # keep t +- h inside [0, T]
    t = rng.uniform(h, T - h, count)
    y = rng.uniform(-radius, radius, (count, m))
    eye = np.eye(m) * h

    def f(tt, yy):
        return np.asarray(p_w(tt, yy), dtype=np.float64)

    with np.errstate(all="ignore"):
        origin = np.abs(f(np.zeros(1), np.zeros((1, m))))[0]
        center = f(t, y)
        dt = (f(t + h, y) - f(t - h, y)) / (2 * h)
        grad = np.empty((count, m, m))  # [sample, component j, variable k]
        hess = np.empty((count, m, m, m))  # [sample, j, k, l]
        for k in range(m):
            plus, minus = f(t, y + eye[k]), f(t, y - eye[k])
            grad[:, :, k] = (plus - minus) / (2 * h)
            hess[:, :, k, k] = (plus - 2 * center + minus) / (h * h)
            for l in range(k + 1, m):
                mixed = (f(t, y + eye[k] + eye[l]) - f(t, y + eye[k] - eye[l])
                         - f(t, y - eye[k] + eye[l]) + f(t, y - eye[k] - eye[l])) / (4 * h * h)
                hess[:, :, k, l] = mixed
                hess[:, :, l, k] = mixed
        dt_max = np.max(np.abs(dt), axis=1)
        grad_max = np.max(np.sqrt(np.sum(grad ** 2, axis=2)), axis=1)
        hess_max = np.max(np.sqrt(np.sum(hess ** 2, axis=(2, 3))), axis=1)

    ok = np.isfinite(dt_max) & np.isfinite(grad_max) & np.isfinite(hess_max)
    maxima = {
        "|p(0,0)|": float(np.max(origin)),
        "|dp/dt|": float(dt_max[ok].max()) if ok.any() else float("nan"),
        "|dp/dy|": float(grad_max[ok].max()) if ok.any() else float("nan"),
        "|d2p/dy2|": float(hess_max[ok].max()) if ok.any() else float("nan"),
    }
    limit = 1.0 + slack
    # |p(0,0)| needs no finite-difference slack; a non-finite value rules out membership
    passed = bool(ok.all()) and maxima["|p(0,0)|"] <= 1.0 + 1e-12 and all(
        maxima[k] <= limit for k in ("|dp/dt|", "|dp/dy|", "|d2p/dy2|"))
    return ValidationReport("K0", passed, count, maxima, limit,
                            invalid_samples=int(count - ok.sum()))


def validate_holder(p_w: Callable, m: int, alpha: float, beta: float, count: int = 10_000,
                    radius: float = 10.0, seed: int = 0, T: float = 1.0,
                    slack: float = 1e-9) -> ValidationReport:
    """Two-point check ``|p(t,x) - p(s,y)| <= |t-s|**alpha + |x-y|**beta``.

    Pairs are spread over separations from 1 down to 1e-8, half of them with
    ``s == t`` so the spatial term is tested on its own.
    """
    HolderClass(alpha, beta)
    if count < 1:
        raise ValueError("sample count must be at least 1")
    rng = np.random.default_rng(seed)
    t = rng.uniform(0.0, T, count)
    s = np.where(rng.random(count) < 0.5, t, rng.uniform(0.0, T, count))
    x = rng.uniform(-radius, radius, (count, m))
    direction = rng.normal(size=(count, m))
    direction /= np.sqrt(np.sum(direction ** 2, axis=1, keepdims=True))
    dist = 10.0 ** rng.uniform(-8.0, 0.0, count)
    y = x + dist[:, None] * direction

    with np.errstate(all="ignore"):
        diff = np.asarray(p_w(t, x), dtype=np.float64) - np.asarray(p_w(s, y), dtype=np.float64)
        lhs = np.sqrt(np.sum(diff ** 2, axis=1))
        rhs = np.abs(t - s) ** alpha + np.sqrt(np.sum((x - y) ** 2, axis=1)) ** beta
        ratio = lhs / rhs
    ok = np.isfinite(lhs)
    excess = lhs[ok] - rhs[ok]
    passed = bool(ok.all()) and bool(np.all(excess <= slack))
    worst = float(np.max(ratio[ok & np.isfinite(ratio)], initial=0.0))
    return ValidationReport(str(HolderClass(alpha, beta)), passed, count,
                            {"|p(t,x)-p(s,y)|": float(lhs[ok].max(initial=0.0))},
                            limit=1.0, invalid_samples=int(count - ok.sum()),
                            worst_ratio=worst)
