"""Seeded smooth test functions with closed-form integrals.

A probe is a finite sum ``sum_k c_k exp(-a_k x^2 + b_k x + g_k)`` with real
``a_k >= 0``; decaying exponentials have ``a_k = 0``.  Products, shifts and
integrals over intervals stay in closed form, which gives exact oracles for
quadrature checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erfcx

from covlab.grid import GridFunction, GridSpec


def _gauss_integral(alpha, beta, gamma, a: float, b: float) -> np.ndarray:
    """``int_a^b exp(-alpha x^2 + beta x + gamma) dx``, elementwise and overflow-safe."""
    alpha, beta, gamma = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (alpha, beta, gamma)))
    out = np.zeros(alpha.shape)
    lin = alpha == 0
    if np.any(lin):
        be, ga = beta[lin], gamma[lin]
        with np.errstate(over="ignore", invalid="ignore"):
            ea = np.exp(be * a + ga)
            eb = np.zeros_like(be) if np.isinf(b) else np.exp(be * b + ga)
            flat = be == 0
            res = np.where(flat, 0.0, (eb - ea) / np.where(flat, 1.0, be))
        if np.isinf(b) and np.any(be[flat] == 0):
            raise ValueError("non-decaying exponential integrated to infinity")
        res[flat] = (b - a) * np.exp(ga[flat])
        out[lin] = res
    q = ~lin
    if np.any(q):
        al, be, ga = alpha[q], beta[q], gamma[q]
        sa = np.sqrt(al)
        mu = be / (2 * al)
        ua, ub = sa * (a - mu), sa * (b - mu)
        pref = 0.5 * np.sqrt(np.pi) / sa

        def edge(x, u):  # exp(exponent at x) * erfcx(u) = exp(C) erfc(u)
            if np.isinf(x):
                return np.zeros_like(u)
            return np.exp(-al * x * x + be * x + ga) * erfcx(u)

        res = np.empty_like(al)
        right = ua >= 0  # both erfc arguments positive
        left = ub <= 0
        mid = ~(right | left)
        if np.any(right):
            r = right
            res[r] = (edge(a, ua)[r] - edge(b, ub)[r]) * pref[r]
        if np.any(left):
            lf = left
            res[lf] = (edge(b, -ub)[lf] - edge(a, -ua)[lf]) * pref[lf]
        if np.any(mid):
            m = mid
            peak = np.exp(ga[m] + be[m] ** 2 / (4 * al[m]))
            tail_b = edge(b, ub)[m]
            tail_a = edge(a, -ua)[m]
            res[m] = (2 * peak - tail_b - tail_a) * pref[m]
        out[q] = res
    return out


@dataclass(frozen=True)
class SmoothProbe:
    coeffs: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)[..., None]
        return np.sum(self.coeffs * np.exp(-self.alpha * x * x + self.beta * x + self.gamma), axis=-1)

    def sample(self, spec: GridSpec) -> GridFunction:
        return GridFunction(spec, self(spec.nodes))

    def shifted(self, s: float) -> "SmoothProbe":
        """``x -> f(x + s)``, the left shift."""
        a, b, g = self.alpha, self.beta, self.gamma
        return SmoothProbe(self.coeffs, a, b - 2 * a * s, g - a * s * s + b * s)

    def inner(self, other: "SmoothProbe", a: float = 0.0, b: float = np.inf) -> complex:
        """``int_a^b conj(self) other``."""
        c = np.conj(self.coeffs)[:, None] * other.coeffs[None, :]
        I = _gauss_integral(
            self.alpha[:, None] + other.alpha[None, :],
            self.beta[:, None] + other.beta[None, :],
            self.gamma[:, None] + other.gamma[None, :],
            a,
            b,
        )
        return complex(np.sum(c * I))


def exponential(c: complex, rate: float) -> SmoothProbe:
    return SmoothProbe(np.array([c], dtype=complex), np.zeros(1), np.array([-float(rate)]), np.zeros(1))


def gaussian(c: complex, center: float, width: float) -> SmoothProbe:
    a = 1.0 / (2 * width * width)
    return SmoothProbe(np.array([c], dtype=complex), np.array([a]), np.array([2 * a * center]), np.array([-a * center * center]))


def combine(*probes: SmoothProbe) -> SmoothProbe:
    return SmoothProbe(*(np.concatenate([getattr(p, k) for p in probes]) for k in ("coeffs", "alpha", "beta", "gamma")))


def random_probe(rng: np.random.Generator, scale: float = 0.5) -> SmoothProbe:
    """One or two decaying exponentials (rates in [1, 3]) plus one or two Gaussians
    (centers in [0, 5], widths in [0.5, 1.5]) with complex normal coefficients."""
    parts = []
    for _ in range(rng.integers(1, 3)):
        c = scale * complex(rng.normal(), rng.normal())
        parts.append(exponential(c, rng.uniform(1.0, 3.0)))
    for _ in range(rng.integers(1, 3)):
        c = scale * complex(rng.normal(), rng.normal())
        parts.append(gaussian(c, rng.uniform(0.0, 5.0), rng.uniform(0.5, 1.5)))
    return combine(*parts)
