"""Uniform midpoint discretization of the half-line.

Nodes sit at ``x_i = (i + 1/2) h`` with ``h = x_max / n_points``, so no node
touches the extinction point ``x = 0``.  Functions are sampled at the nodes
and integrals use the rectangle rule with uniform weight ``h``; operators are
dense matrices that already contain that weight, so applying an operator is a
plain matrix-vector product and the adjoint with respect to the discrete
inner product is the conjugate transpose.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np

from covlab.errors import AlignmentError, DomainError, SpecMismatchError

ALIGN_RTOL = 1e-9

Direction = Literal["right", "left-adjoint"]


@dataclass(frozen=True)
class GridSpec:
    x_max: float
    n_points: int

    def __post_init__(self):
        if not np.isfinite(self.x_max) or self.x_max <= 0:
            raise DomainError(f"x_max must be positive, got {self.x_max}")
        if int(self.n_points) != self.n_points or self.n_points < 2:
            raise DomainError(f"n_points must be an integer >= 2, got {self.n_points}")
        object.__setattr__(self, "x_max", float(self.x_max))
        object.__setattr__(self, "n_points", int(self.n_points))

    @property
    def h(self) -> float:
        return self.x_max / self.n_points

    @property
    def nodes(self) -> np.ndarray:
        return (np.arange(self.n_points) + 0.5) * self.h

    def steps(self, t: float, what: str = "time") -> int:
        """Number of whole cells in ``t``; raises if ``t`` is not grid-aligned."""
        if t < 0:
            raise DomainError(f"{what} must be nonnegative, got {t}")
        m = round(t / self.h)
        if abs(m * self.h - t) > ALIGN_RTOL * max(1.0, abs(t)):
            raise AlignmentError(f"{what}={t} is not a multiple of h={self.h}")
        return int(m)

    def refine(self, factor: int = 2) -> "GridSpec":
        return GridSpec(self.x_max, self.n_points * factor)


def _check_same(a: GridSpec, b: GridSpec) -> None:
    if a != b:
        raise SpecMismatchError(f"grid mismatch: {a} vs {b}")


def _frozen(values, shape) -> np.ndarray:
    arr = np.array(values, dtype=complex)
    if arr.shape != shape:
        raise SpecMismatchError(f"expected shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError("values must be finite")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class GridFunction:
    spec: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values, (self.spec.n_points,)))

    @classmethod
    def from_callable(cls, spec: GridSpec, fn: Callable[[np.ndarray], np.ndarray]) -> "GridFunction":
        return cls(spec, np.broadcast_to(fn(spec.nodes), (spec.n_points,)))

    @classmethod
    def zeros(cls, spec: GridSpec) -> "GridFunction":
        return cls(spec, np.zeros(spec.n_points))

    def norm(self) -> float:
        return float(np.sqrt(self.spec.h * np.sum(np.abs(self.values) ** 2)))

    def __add__(self, other: "GridFunction") -> "GridFunction":
        _check_same(self.spec, other.spec)
        return GridFunction(self.spec, self.values + other.values)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        _check_same(self.spec, other.spec)
        return GridFunction(self.spec, self.values - other.values)

    def __mul__(self, c: complex) -> "GridFunction":
        return GridFunction(self.spec, c * self.values)

    __rmul__ = __mul__

    def __neg__(self) -> "GridFunction":
        return GridFunction(self.spec, -self.values)


@dataclass(frozen=True, eq=False)
class GridOperator:
    spec: GridSpec
    entries: np.ndarray = field(repr=False)

    def __post_init__(self):
        n = self.spec.n_points
        object.__setattr__(self, "entries", _frozen(self.entries, (n, n)))

    @classmethod
    def identity(cls, spec: GridSpec) -> "GridOperator":
        return cls(spec, np.eye(spec.n_points))

    @classmethod
    def zeros(cls, spec: GridSpec) -> "GridOperator":
        return cls(spec, np.zeros((spec.n_points, spec.n_points)))

    def adjoint(self) -> "GridOperator":
        return GridOperator(self.spec, self.entries.conj().T)

    def apply(self, f: GridFunction) -> GridFunction:
        _check_same(self.spec, f.spec)
        return GridFunction(self.spec, self.entries @ f.values)

    __call__ = apply

    def __matmul__(self, other):
        if isinstance(other, GridFunction):
            return self.apply(other)
        _check_same(self.spec, other.spec)
        return GridOperator(self.spec, self.entries @ other.entries)

    def __add__(self, other: "GridOperator") -> "GridOperator":
        _check_same(self.spec, other.spec)
        return GridOperator(self.spec, self.entries + other.entries)

    def __sub__(self, other: "GridOperator") -> "GridOperator":
        _check_same(self.spec, other.spec)
        return GridOperator(self.spec, self.entries - other.entries)

    def __mul__(self, c: complex) -> "GridOperator":
        return GridOperator(self.spec, c * self.entries)

    __rmul__ = __mul__

    def norm(self, ord: Literal[2, "fro"] = 2) -> float:
        """Operator 2-norm (the discrete L^2 operator norm) or Frobenius norm of the matrix."""
        return float(np.linalg.norm(self.entries, ord))


def inner_product(f: GridFunction, g: GridFunction) -> complex:
    """``h * sum(conj(f) * g)``; conjugate-linear in the first slot."""
    _check_same(f.spec, g.spec)
    return complex(f.spec.h * np.vdot(f.values, g.values))


def shift_right_array(values: np.ndarray, m: int) -> np.ndarray:
    """Right shift by ``m`` cells along the last axis, zero filling at the origin."""
    out = np.zeros_like(values)
    n = values.shape[-1]
    if m < n:
        out[..., m:] = values[..., : n - m]
    return out


def shift_left_array(values: np.ndarray, m: int) -> np.ndarray:
    """Left shift by ``m`` cells along the last axis; whatever crosses the origin is lost."""
    out = np.zeros_like(values)
    n = values.shape[-1]
    if m < n:
        out[..., : n - m] = values[..., m:]
    return out


def shift_op(spec: GridSpec, t: float, direction: Direction = "right") -> GridOperator:
    """Right shift ``S_t`` or its adjoint, the truncating left shift ``S_t*``.

    ``t`` must be a whole number of cells; no interpolation is performed.
    """
    m = spec.steps(t)
    n = spec.n_points
    mat = np.zeros((n, n))
    idx = np.arange(m, n)
    mat[idx, idx - m] = 1.0
    if direction == "right":
        return GridOperator(spec, mat)
    if direction == "left-adjoint":
        return GridOperator(spec, mat.T)
    raise DomainError(f"unknown shift direction {direction!r}")


def heat_kernel_matrix(spec: GridSpec, t: float) -> np.ndarray:
    x = spec.nodes
    d = x[:, None] - x[None, :]
    s = x[:, None] + x[None, :]
    return (np.exp(-d * d / (4 * t)) - np.exp(-s * s / (4 * t))) * (spec.h / np.sqrt(4 * np.pi * t))


def heat_op(spec: GridSpec, t: float) -> GridOperator:
    """Diffusion with extinction at the origin, from the image-method kernel.

    The kernel is sampled at the nodes, which is accurate once ``sqrt(t)``
    is comparable to ``h``; for ``t << h**2`` the sampled matrix is no longer
    a contraction.
    """
    if t <= 0:
        raise DomainError(f"heat_op needs t > 0 (use the identity at t = 0), got {t}")
    return GridOperator(spec, heat_kernel_matrix(spec, t))


def indicator_values(spec: GridSpec, a: float, b: float) -> np.ndarray:
    ia, ib = spec.steps(a, "a"), spec.steps(b, "b")
    if ib < ia or ib > spec.n_points:
        raise DomainError(f"need 0 <= a <= b <= x_max, got [{a}, {b})")
    chi = np.zeros(spec.n_points)
    chi[ia:ib] = 1.0
    return chi


def indicator(spec: GridSpec, a: float, b: float) -> tuple[GridFunction, GridOperator]:
    """Characteristic function of ``[a, b)`` and the multiplication operator by it."""
    chi = indicator_values(spec, a, b)
    return GridFunction(spec, chi), GridOperator(spec, np.diag(chi))
