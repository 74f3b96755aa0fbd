"""State (Schrödinger) and observable (Heisenberg) dynamics on the grid.

A density operator is stored through its kernel values ``W[i, j] = w(x_i, x_j)``;
the operator itself is ``h * W`` and its trace is ``h * trace(W)``.  An
observable is a :class:`~covlab.grid.GridOperator` ``X`` acting by ``X @ v``,
so the trace pairing is ``Tr(X w) = h * trace(X @ W)``.

The Lindbladian keeps the factor 2 on the jump term,

    L(x) = K x + x K* + 2 sum_j L_j* x L_j,

for which ``sum_j ||L_j psi||^2 <= -Re <psi, K psi>`` is exactly the
trace-nonincreasing condition (equality means conservative).  Most GKSL
codes put a 1 there and a 1/2 on the anticommutator instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Literal, Sequence

import numpy as np

from covlab.errors import DomainError, IntegrationError, SpecMismatchError
from covlab.grid import GridFunction, GridOperator, GridSpec, shift_left_array, shift_right_array
from covlab.semigroup import SemigroupFamily, custom_family

Picture = Literal["heisenberg", "schrodinger"]


def _check_same(a: GridSpec, b: GridSpec) -> None:
    if a != b:
        raise SpecMismatchError(f"grid mismatch: {a} vs {b}")


@dataclass(frozen=True, eq=False)
class DensityOperator:
    spec: GridSpec
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        n = self.spec.n_points
        arr = np.array(self.matrix, dtype=complex)
        if arr.shape != (n, n):
            raise SpecMismatchError(f"expected {(n, n)} kernel matrix, got {arr.shape}")
        arr.flags.writeable = False
        object.__setattr__(self, "matrix", arr)

    @classmethod
    def rank_one(cls, psi: GridFunction, phi: GridFunction | None = None) -> "DensityOperator":
        """``|psi><phi|`` (``phi`` defaults to ``psi``)."""
        phi = psi if phi is None else phi
        _check_same(psi.spec, phi.spec)
        return cls(psi.spec, np.outer(psi.values, phi.values.conj()))

    @classmethod
    def zeros(cls, spec: GridSpec) -> "DensityOperator":
        return cls(spec, np.zeros((spec.n_points, spec.n_points)))

    def trace(self) -> complex:
        return complex(self.spec.h * np.trace(self.matrix))

    def hermiticity_defect(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T), initial=0.0))

    def min_eigenvalue(self) -> float:
        herm = 0.5 * (self.matrix + self.matrix.conj().T)
        return float(self.spec.h * np.linalg.eigvalsh(herm).min())

    def is_state(self, tol: float = 1e-9) -> bool:
        tr = self.trace()
        return (
            self.hermiticity_defect() <= 1e-12 * max(1.0, np.abs(self.matrix).max())
            and abs(tr.imag) <= tol
            and -tol <= tr.real <= 1 + tol
            and self.min_eigenvalue() >= -tol
        )

    def apply(self, f: GridFunction) -> GridFunction:
        _check_same(self.spec, f.spec)
        return GridFunction(self.spec, self.spec.h * (self.matrix @ f.values))

    def __add__(self, other: "DensityOperator") -> "DensityOperator":
        _check_same(self.spec, other.spec)
        return DensityOperator(self.spec, self.matrix + other.matrix)

    def __sub__(self, other: "DensityOperator") -> "DensityOperator":
        _check_same(self.spec, other.spec)
        return DensityOperator(self.spec, self.matrix - other.matrix)

    def __mul__(self, c: complex) -> "DensityOperator":
        return DensityOperator(self.spec, c * self.matrix)

    __rmul__ = __mul__


def trace_pairing(x: GridOperator, omega: DensityOperator) -> complex:
    """``Tr(x omega)``."""
    _check_same(x.spec, omega.spec)
    return complex(x.spec.h * np.einsum("ij,ji->", x.entries, omega.matrix))


@dataclass(eq=False)
class SuperOperatorFamily:
    """A family of linear maps on kernel matrices.

    ``no_event`` families are built from a vector semigroup ``T_t``:
    ``w -> T_t* w T_t`` in the Schrödinger picture and ``x -> T_t x T_t*``
    in the Heisenberg picture.  Custom families supply ``evaluator(t, W)``
    acting on a stack ``(..., n, n)``.
    """

    spec: GridSpec
    picture: Picture
    vector_family: SemigroupFamily | None = None
    evaluator: Callable[[float, np.ndarray], np.ndarray] | None = field(default=None, repr=False)

    def apply_array(self, t: float, W: np.ndarray) -> np.ndarray:
        if self.evaluator is not None:
            return self.evaluator(t, W)
        fam = self.vector_family
        if fam.is_shift:
            m = self.spec.steps(t)
            # T = S_m (right) or S_m* (left); the predual of a right shift is a left shift on both indices
            left = (fam.kind == "right-shift") == (self.picture == "schrodinger")
            move = shift_left_array if left else shift_right_array
            return np.swapaxes(move(np.swapaxes(move(W, m), -1, -2), m), -1, -2)
        T = fam.matrix(t)
        if self.picture == "schrodinger":
            return T.conj().T @ W @ T
        return T @ W @ T.conj().T

    def apply_many(self, times: Sequence[float], W: np.ndarray) -> np.ndarray:
        """Apply the map at ``times[i]`` to ``W[i]``."""
        if self.evaluator is None and not self.vector_family.is_shift:
            T = np.stack([self.vector_family.matrix(t) for t in times])
            return self.apply_stacked(T, W)
        return np.stack([self.apply_array(t, W[i]) for i, t in enumerate(times)])

    def apply_stacked(self, T: np.ndarray, W: np.ndarray) -> np.ndarray:
        """Conjugate ``W[i]`` by the precomputed vector-level matrices ``T[i]``."""
        n = self.spec.n_points
        T = T.reshape((T.shape[0],) + (1,) * (W.ndim - 3) + (n, n))
        Th = np.ascontiguousarray(np.conj(np.swapaxes(T, -1, -2)))
        left, right = (Th, T) if self.picture == "schrodinger" else (T, Th)
        if np.iscomplexobj(T) or not np.iscomplexobj(W):
            return left @ (W @ right)
        re = left @ (np.ascontiguousarray(W.real) @ right)
        if not W.imag.any():
            return re.astype(complex)
        return re + 1j * (left @ (np.ascontiguousarray(W.imag) @ right))

    def at(self, t: float) -> Callable[[DensityOperator], DensityOperator]:
        return lambda w: DensityOperator(self.spec, self.apply_array(t, w.matrix))

    def materialize(self, t: float) -> np.ndarray:
        """The ``n^2 x n^2`` matrix acting on row-major flattened kernels."""
        n = self.spec.n_points
        basis = np.eye(n * n, dtype=complex).reshape(n * n, n, n)
        return self.apply_array(t, basis).reshape(n * n, n * n).T

    def dual(self) -> "SuperOperatorFamily":
        if self.vector_family is None:
            raise DomainError("the dual of a custom super-operator family is not known")
        other = "heisenberg" if self.picture == "schrodinger" else "schrodinger"
        return SuperOperatorFamily(self.spec, other, self.vector_family)


def no_event_family(vector_family: SemigroupFamily, picture: Picture = "schrodinger") -> SuperOperatorFamily:
    return SuperOperatorFamily(vector_family.spec, picture, vector_family)


def no_event_apply(vector_family: SemigroupFamily, t: float, omega: DensityOperator) -> DensityOperator:
    """``T_t* omega T_t``; rank-one inputs stay rank one."""
    _check_same(vector_family.spec, omega.spec)
    return no_event_family(vector_family).at(t)(omega)


def lindblad_heisenberg_array(K: np.ndarray, Ls: Sequence[np.ndarray], X: np.ndarray) -> np.ndarray:
    out = K @ X + X @ K.conj().T
    for L in Ls:
        out = out + 2.0 * (L.conj().T @ X @ L)
    return out


def lindblad_schrodinger_array(K: np.ndarray, Ls: Sequence[np.ndarray], W: np.ndarray) -> np.ndarray:
    out = K.conj().T @ W + W @ K
    for L in Ls:
        out = out + 2.0 * (L @ W @ L.conj().T)
    return out


def lindblad_apply(K: GridOperator, Ls: Sequence[GridOperator], arg, picture: Picture | None = None):
    """Apply the Lindbladian to an observable (Heisenberg) or its predual to a state.

    ``picture`` defaults from the type of ``arg``: a :class:`GridOperator` is
    an observable, a :class:`DensityOperator` a state.
    """
    for L in Ls:
        _check_same(K.spec, L.spec)
    _check_same(K.spec, arg.spec)
    if picture is None:
        picture = "schrodinger" if isinstance(arg, DensityOperator) else "heisenberg"
    Lm = [L.entries for L in Ls]
    if picture == "heisenberg":
        X = arg.entries if isinstance(arg, GridOperator) else arg.matrix
        return GridOperator(K.spec, lindblad_heisenberg_array(K.entries, Lm, X))
    W = arg.matrix if isinstance(arg, DensityOperator) else arg.entries
    return DensityOperator(K.spec, lindblad_schrodinger_array(K.entries, Lm, W))


def diffusion_jump_operators(spec: GridSpec) -> tuple[GridOperator, GridOperator]:
    """Grid versions of ``K = d^2/dx^2`` and ``L = -d/dx`` with the origin condition.

    Both use a zero ghost value left of node 0, so summation by parts gives
    ``K + K* + 2 L*L = -(2/h^2) e_last e_last^T``: the equality case of the
    dissipativity condition everywhere except at the far cutoff.
    """
    n, h = spec.n_points, spec.h
    K = (np.diag(-2.0 * np.ones(n)) + np.diag(np.ones(n - 1), 1) + np.diag(np.ones(n - 1), -1)) / h**2
    L = -(np.eye(n) - np.diag(np.ones(n - 1), -1)) / h
    return GridOperator(spec, K), GridOperator(spec, L)


def stencil_heat_family(spec: GridSpec) -> SemigroupFamily:
    """``exp(t K)`` for the three-point Dirichlet stencil of :func:`diffusion_jump_operators`.

    Evaluated from the closed-form sine eigenbasis, so the semigroup law holds
    to roundoff and every ``T_t`` is a contraction, for any ``t`` relative to ``h``.
    """
    n, h = spec.n_points, spec.h
    k = np.arange(1, n + 1)
    V = np.sqrt(2.0 / (n + 1)) * np.sin(np.pi * np.outer(np.arange(1, n + 1), k) / (n + 1))
    lam = -(4.0 / h**2) * np.sin(np.pi * k / (2 * (n + 1))) ** 2
    K, _ = diffusion_jump_operators(spec)
    return custom_family(spec, lambda t: (V * np.exp(t * lam)) @ V.T, generator=K)


@dataclass(frozen=True, eq=False)
class GKSLTrajectory:
    spec: GridSpec
    times: np.ndarray
    states: np.ndarray = field(repr=False)

    @property
    def traces(self) -> np.ndarray:
        return self.spec.h * np.real(np.einsum("kii->k", self.states))

    @property
    def min_eigenvalues(self) -> np.ndarray:
        herm = 0.5 * (self.states + np.conj(np.swapaxes(self.states, -1, -2)))
        return self.spec.h * np.linalg.eigvalsh(herm).min(axis=-1)

    def state(self, k: int = -1) -> DensityOperator:
        return DensityOperator(self.spec, self.states[k])


def trace_rate(K: GridOperator, Ls: Sequence[GridOperator], omega: DensityOperator) -> float:
    """``d/dt Tr w = Tr(L(I) w)``; for the diffusion-with-jump operators this is the outflow at the cutoff."""
    gen = lindblad_heisenberg_array(K.entries, [L.entries for L in Ls], np.eye(K.spec.n_points))
    return float(np.real(K.spec.h * np.einsum("ij,ji->", gen, omega.matrix)))


def gksl_evolve(
    K: GridOperator,
    Ls: Sequence[GridOperator],
    omega0: DensityOperator,
    t_final: float,
    n_steps: int,
    blowup: float = 10.0,
) -> GKSLTrajectory:
    """Integrate ``dw/dt = L_*(w)`` with classical RK4 at a fixed step."""
    if n_steps < 1 or t_final <= 0:
        raise DomainError("need n_steps >= 1 and t_final > 0")
    for L in Ls:
        _check_same(K.spec, L.spec)
    _check_same(K.spec, omega0.spec)
    Km = K.entries
    Lm = [L.entries for L in Ls]
    dt = t_final / n_steps
    W = omega0.matrix.copy()
    out = np.empty((n_steps + 1,) + W.shape, dtype=complex)
    out[0] = W
    scale0 = max(np.linalg.norm(W), abs(np.trace(W)) * K.spec.h, 1e-300)

    def rhs(A):
        return lindblad_schrodinger_array(Km, Lm, A)

    for k in range(1, n_steps + 1):
        k1 = rhs(W)
        k2 = rhs(W + 0.5 * dt * k1)
        k3 = rhs(W + 0.5 * dt * k2)
        k4 = rhs(W + dt * k3)
        W = W + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        growth = max(np.linalg.norm(W), abs(np.trace(W)) * K.spec.h) / scale0
        if not np.isfinite(growth) or growth > blowup:
            gen_norm = np.linalg.norm(Km, 2) * 2 + 2 * sum(np.linalg.norm(L, 2) ** 2 for L in Lm)
            raise IntegrationError(
                f"RK4 blew up at step {k} (growth {growth:.3g}); "
                f"use dt below about {2.7 / gen_norm:.3g} (current {dt:.3g})"
            )
        out[k] = W
    return GKSLTrajectory(K.spec, np.linspace(0.0, t_final, n_steps + 1), out)
