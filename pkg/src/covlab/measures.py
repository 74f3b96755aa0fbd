"""Covariant operator-valued measures on the half-line, as interval masses.

A measure is stored through its cell masses: with a cell width ``step``,
``mass(a, b)`` is the sum of the masses of the cells ``[j*step, (j+1)*step)``
covering ``[a, b)``.  Finite additivity is therefore exact up to the
floating-point summation order, and endpoints must be multiples of ``step``.

Two covariance forms occur:

* ``heisenberg``: ``T_t mass(B) = mass(B + t)`` (vector-level measures and
  observable-level measures);
* ``schrodinger``: ``mass(B) T_{*t} = mass(B + t)`` (measures on states).

Arrays passed to the ``*_apply`` methods carry a leading batch axis of
arguments, ``(B, n)`` for vectors and ``(B, n, n)`` for kernel matrices; a
single argument without the batch axis is accepted as well.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Literal, Sequence

import numpy as np

from covlab.dynamics import DensityOperator, SuperOperatorFamily, no_event_family
from covlab.errors import AlignmentError, DomainError, SpecMismatchError, UnsupportedOperationError
from covlab.grid import ALIGN_RTOL, GridFunction, GridOperator, GridSpec
from covlab.semigroup import SemigroupFamily

Level = Literal["vector", "density"]
Continuity = Literal["absolutely-continuous", "singular"]
Picture = Literal["heisenberg", "schrodinger"]
Rule = Literal["left", "gauss"]

# (cell indices (k,), argument stack (k, B, ...)) -> sum_i cell_{js[i]}(stack[i]), shape (B, ...)
CellsSum = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _check_same(a: GridSpec, b: GridSpec) -> None:
    if a != b:
        raise SpecMismatchError(f"grid mismatch: {a} vs {b}")


def cell_index(t: float, step: float, what: str = "endpoint") -> int:
    if t < 0:
        raise DomainError(f"{what} must be nonnegative, got {t}")
    m = round(t / step)
    if abs(m * step - t) > ALIGN_RTOL * max(1.0, abs(t)):
        raise AlignmentError(f"{what}={t} is not a multiple of the cell width {step}")
    return int(m)


def _nodes_per_cell(spec: GridSpec, step: float) -> int:
    m = round(step / spec.h)
    if m < 1 or abs(m * spec.h - step) > ALIGN_RTOL * step:
        raise AlignmentError(f"cell width {step} must be a whole number of grid cells (h={spec.h})")
    return int(m)


@dataclass(eq=False)
class OperatorMeasure:
    spec: GridSpec
    level: Level
    continuity: Continuity
    picture: Picture
    step: float
    cells_sum: CellsSum = field(repr=False)
    name: str = "measure"
    density_fn: Callable[[float, np.ndarray], np.ndarray] | None = field(default=None, repr=False)
    exact_mass: Callable[[float, float, np.ndarray], np.ndarray] | None = field(default=None, repr=False)
    adjoint_fn: Callable[[], "OperatorMeasure"] | None = field(default=None, repr=False)
    # finite range: mass(B)(w) = sum_l c_l(B, w) * basis[l]
    range_basis: np.ndarray | None = field(default=None, repr=False)
    range_coeffs: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.step <= 0:
            raise DomainError(f"cell width must be positive, got {self.step}")
        if self.continuity == "singular" and self.density_fn is not None:
            raise DomainError("a singular measure has no density")

    @property
    def arg_ndim(self) -> int:
        return 1 if self.level == "vector" else 2

    def _batched(self, arr) -> tuple[np.ndarray, bool]:
        arr = np.asarray(arr, dtype=complex)
        n = self.spec.n_points
        if arr.shape[-self.arg_ndim:] != (n,) * self.arg_ndim:
            raise SpecMismatchError(f"argument shape {arr.shape} does not fit a {self.level}-level measure on n={n}")
        single = arr.ndim == self.arg_ndim
        return (arr[None] if single else arr), single

    def cells(self, a: float, b: float) -> np.ndarray:
        ia, ib = cell_index(a, self.step, "a"), cell_index(b, self.step, "b")
        if ib < ia:
            raise DomainError(f"reversed interval [{a}, {b})")
        return np.arange(ia, ib)

    def mass_apply(self, a: float, b: float, arr) -> np.ndarray:
        """``mass([a, b))`` applied to every argument of ``arr``."""
        js = self.cells(a, b)
        x, single = self._batched(arr)
        if self.exact_mass is not None:
            out = self.exact_mass(a, b, x)
        elif len(js) == 0:
            out = np.zeros_like(x)
        else:
            out = self.cells_sum(js, np.broadcast_to(x, (len(js),) + x.shape))
        return out[0] if single else out

    def mass(self, a: float, b: float) -> Callable:
        """``mass([a, b))`` as a function on the level's objects."""

        def apply(arg):
            if isinstance(arg, GridFunction):
                _check_same(self.spec, arg.spec)
                return GridFunction(self.spec, self.mass_apply(a, b, arg.values))
            if isinstance(arg, DensityOperator):
                _check_same(self.spec, arg.spec)
                return DensityOperator(self.spec, self.mass_apply(a, b, arg.matrix))
            if isinstance(arg, GridOperator):
                _check_same(self.spec, arg.spec)
                return GridOperator(self.spec, self.mass_apply(a, b, arg.entries))
            return self.mass_apply(a, b, arg)

        return apply

    def mass_operator(self, a: float, b: float) -> GridOperator:
        """Vector-level mass as an explicit operator."""
        if self.level != "vector":
            raise UnsupportedOperationError("mass_operator is only defined at vector level")
        rows = self.mass_apply(a, b, np.eye(self.spec.n_points))
        return GridOperator(self.spec, rows.T)

    def density(self, t: float) -> Callable[[np.ndarray], np.ndarray]:
        if self.continuity == "singular":
            raise UnsupportedOperationError(f"{self.name} is singular and has no density")
        if self.density_fn is None:
            raise UnsupportedOperationError(f"{self.name} does not expose its density")
        if t < 0:
            raise DomainError(f"density time must be nonnegative, got {t}")
        return lambda arr: self.density_fn(t, np.asarray(arr, dtype=complex))

    def adjoint(self) -> "OperatorMeasure":
        """The same measure in the other picture (density level only)."""
        if self.adjoint_fn is None:
            raise UnsupportedOperationError(f"{self.name} has no adjoint form")
        return self.adjoint_fn()


def zero_measure(spec: GridSpec, level: Level = "vector", picture: Picture | None = None, step: float | None = None):
    picture = picture or ("heisenberg" if level == "vector" else "schrodinger")
    step = spec.h if step is None else step
    m = OperatorMeasure(
        spec,
        level,
        "absolutely-continuous",
        picture,
        step,
        lambda js, s: np.zeros_like(s[0]),
        name="zero",
        density_fn=lambda t, a: np.zeros_like(a),
    )
    other = "schrodinger" if picture == "heisenberg" else "heisenberg"
    if level == "density":
        m.adjoint_fn = lambda: zero_measure(spec, level, other, step)
    return m


def _rule_nodes(rule: Rule, nq: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes in [0, 1) and weights summing to 1."""
    if rule == "left":
        return np.zeros(1), np.ones(1)
    if rule == "gauss":
        x, w = np.polynomial.legendre.leggauss(nq)
        return (x + 1) / 2, w / 2
    raise DomainError(f"unknown quadrature rule {rule!r}")


def bounded_density_measure(
    family: SemigroupFamily,
    M: GridOperator,
    step: float | None = None,
    rule: Rule = "left",
    nq: int = 2,
) -> OperatorMeasure:
    """``mass(t, s) = int_t^s T_r M dr`` by per-cell quadrature; density ``P(t) = T_t M``."""
    spec = family.spec
    _check_same(spec, M.spec)
    step = spec.h if step is None else step
    xq, wq = _rule_nodes(rule, nq)
    Mt = M.entries.T

    def cells_sum(js, stack):
        v = stack @ Mt
        out = np.zeros(stack.shape[1:], dtype=complex)
        for x, w in zip(xq, wq):
            for j, vj in zip(js, v):
                out += (w * step) * family.apply_array((j + x) * step, vj)
        return out

    return OperatorMeasure(
        spec,
        "vector",
        "absolutely-continuous",
        "heisenberg",
        step,
        cells_sum,
        name="bounded-density",
        density_fn=lambda t, a: family.apply_array(t, a @ Mt),
    )


def generator_density_measure(family: SemigroupFamily, M: GridOperator, step: float | None = None) -> OperatorMeasure:
    """``mass(t, s) = (T_t - T_s) M`` exactly.

    The density is ``P(t) = -T_t G M`` with ``G`` the generator attached to
    the family, since ``T_t - T_s = -int_t^s T_r G dr``.
    """
    spec = family.spec
    _check_same(spec, M.spec)
    step = spec.h if step is None else step
    Mt = M.entries.T

    def exact(a, b, x):
        v = x @ Mt
        return family.apply_array(a, v) - family.apply_array(b, v)

    def cells_sum(js, stack):
        v = stack @ Mt
        out = np.zeros(stack.shape[1:], dtype=complex)
        for j, vj in zip(js, v):
            out += family.apply_array(j * step, vj) - family.apply_array((j + 1) * step, vj)
        return out

    density_fn = None
    if family.generator is not None:
        GMt = (family.generator.entries @ M.entries).T
        density_fn = lambda t, a: -family.apply_array(t, a @ GMt)  # noqa: E731

    return OperatorMeasure(
        spec,
        "vector",
        "absolutely-continuous",
        "heisenberg",
        step,
        cells_sum,
        name="generator-density",
        density_fn=density_fn,
        exact_mass=exact,
    )


def singular_rank_one_measure(e: GridFunction, step: float | None = None) -> OperatorMeasure:
    """``mass(t, s) eta = <e, eta> chi_[t, s)``, covariant for right shifts and singular."""
    spec = e.spec
    step = spec.h if step is None else step
    m = _nodes_per_cell(spec, step)
    n = spec.n_points
    ec = e.values.conj()

    def cells_sum(js, stack):
        amp = spec.h * (stack @ ec)  # (k, B)
        out = np.zeros(stack.shape[1:], dtype=complex)
        for j, col in zip(js, amp):
            lo, hi = min(j * m, n), min((j + 1) * m, n)
            out[:, lo:hi] += col[:, None]
        return out

    return OperatorMeasure(spec, "vector", "singular", "heisenberg", step, cells_sum, name="singular-rank-one")


def _as_super(family, picture: Picture) -> SuperOperatorFamily:
    if isinstance(family, SuperOperatorFamily):
        if family.picture != picture:
            if family.vector_family is None:
                raise DomainError("picture mismatch between measure and super-operator family")
            return family.dual()
        return family
    return no_event_family(family, picture)


def jump_measure(
    vector_family: SemigroupFamily,
    Ls: Sequence[GridOperator],
    step: float | None = None,
    rule: Rule | None = None,
    nq: int = 2,
    picture: Picture = "schrodinger",
) -> OperatorMeasure:
    """``mass(t, s) w = int_t^s Lam(T_{*r} w) dr`` with ``Lam(w) = sum_j L_j w L_j*``.

    Cells use the left endpoint for shift families (exact, since shifts are
    only evaluated at whole cells) and ``nq``-point Gauss-Legendre otherwise.
    The left rule is unstable inside a time march once the cell is long
    compared with the fastest decay of the base, which is the usual
    situation for a diffusion generator.
    """
    spec = vector_family.spec
    for L in Ls:
        _check_same(spec, L.spec)
    step = spec.h if step is None else step
    if rule is None:
        rule = "left" if vector_family.is_shift else "gauss"
    xq, wq = _rule_nodes(rule, nq)
    Lm = np.stack([L.entries for L in Ls]) if Ls else np.zeros((0, spec.n_points, spec.n_points))
    Lh = np.conj(np.swapaxes(Lm, -1, -2))
    schrod = no_event_family(vector_family, "schrodinger")
    heis = no_event_family(vector_family, "heisenberg")

    def lam(W):
        out = np.zeros_like(W)
        for L, LH in zip(Lm, Lh):
            out += L @ W @ LH
        return out

    def lam_star(X):
        out = np.zeros_like(X)
        for L, LH in zip(Lm, Lh):
            out += LH @ X @ L
        return out

    # per quadrature node, T at (j + x_q) * step for j = 0, 1, ...; grown on demand
    tstack: list[np.ndarray] = [np.zeros((0, spec.n_points, spec.n_points)) for _ in xq]

    lock = threading.Lock()

    def node_matrices(q: int, js: np.ndarray) -> np.ndarray:
        with lock:
            have = tstack[q].shape[0]
            need = int(js.max()) + 1
            if need > have:
                grow = max(need, 2 * have)
                extra = [vector_family.matrix((j + xq[q]) * step) for j in range(have, grow)]
                tstack[q] = np.concatenate([tstack[q], np.stack(extra)])
            cached = tstack[q]
        if js[-1] - js[0] + 1 == len(js) and np.all(np.diff(js) == 1):
            return cached[js[0]:js[-1] + 1]
        return cached[js]

    def conj_sum(fam: SuperOperatorFamily, js, stack):
        acc = np.zeros(stack.shape[1:], dtype=complex)
        for q, (x, w) in enumerate(zip(xq, wq)):
            if vector_family.is_shift:
                out = fam.apply_many((js + x) * step, stack)
            else:
                out = fam.apply_stacked(node_matrices(q, js), stack)
            acc += (w * step) * out.sum(axis=0)
        return acc

    if picture == "schrodinger":
        cells_sum = lambda js, stack: lam(conj_sum(schrod, js, stack))  # noqa: E731
        density_fn = lambda t, a: lam(schrod.apply_array(t, a))  # noqa: E731
    else:
        cells_sum = lambda js, stack: conj_sum(heis, js, lam_star(stack))  # noqa: E731
        density_fn = lambda t, a: heis.apply_array(t, lam_star(a))  # noqa: E731
    other = "heisenberg" if picture == "schrodinger" else "schrodinger"
    return OperatorMeasure(
        spec,
        "density",
        "absolutely-continuous",
        picture,
        step,
        cells_sum,
        name="jump",
        density_fn=density_fn if len(Ls) else (lambda t, a: np.zeros_like(a)),
        adjoint_fn=lambda: jump_measure(vector_family, Ls, step, rule, nq, other),
    )


def lindblad_jump_measure(
    vector_family: SemigroupFamily,
    Ls: Sequence[GridOperator],
    step: float | None = None,
    rule: Rule | None = None,
    nq: int = 2,
    picture: Picture = "schrodinger",
) -> OperatorMeasure:
    """Jump measure whose perturbation generator is the jump part ``2 sum_j L_j w L_j*``.

    Perturbing the no-event semigroup by ``int Lam T_{*r} dr`` adds ``Lam``
    to the generator, so matching the Lindbladian with its factor 2 needs
    ``Lam`` built from ``sqrt(2) L_j``.
    """
    scaled = [L * np.sqrt(2.0) for L in Ls]
    m = jump_measure(vector_family, scaled, step, rule, nq, picture)
    m.name = "lindblad-jump"
    other = "heisenberg" if picture == "schrodinger" else "schrodinger"
    m.adjoint_fn = lambda: lindblad_jump_measure(vector_family, Ls, step, rule, nq, other)
    return m


def boundary_injection_measure(
    omega0: DensityOperator,
    step: float | None = None,
    picture: Picture = "schrodinger",
) -> OperatorMeasure:
    """``mass(t, s) w = (h * sum_{x_i in [t, s)} W_ii) * omega0``.

    On ``|psi><phi|`` the scalar is the quadrature of ``psi * conj(phi)``
    over ``[t, s)``: whatever the left shift pushes through the origin is
    re-injected as the state ``omega0``.  Covariant for the right-shift
    no-event semigroup, exactly.
    """
    spec = omega0.spec
    step = spec.h if step is None else step
    m = _nodes_per_cell(spec, step)
    n, h = spec.n_points, spec.h
    W0 = omega0.matrix

    def coeffs(js, stack):
        # (k, B) scalars: quadrature of the diagonal kernel over each cell
        diag = np.einsum("kbii->kbi", stack)
        out = np.zeros(stack.shape[:2], dtype=complex)
        for i, j in enumerate(js):
            lo, hi = min(j * m, n), min((j + 1) * m, n)
            out[i] = h * diag[i, :, lo:hi].sum(axis=-1)
        return out

    if picture == "schrodinger":

        def cells_sum(js, stack):
            return coeffs(js, stack).sum(axis=0)[:, None, None] * W0

        def density_fn(t, a):
            i = min(int(t / h), n - 1)
            return np.einsum("...ii->...", a[..., i:i + 1, i:i + 1])[..., None, None] * W0

        return OperatorMeasure(
            spec,
            "density",
            "absolutely-continuous",
            "schrodinger",
            step,
            cells_sum,
            name="boundary-injection",
            density_fn=density_fn,
            adjoint_fn=lambda: boundary_injection_measure(omega0, step, "heisenberg"),
            range_basis=W0[None],
            range_coeffs=lambda js, stack: coeffs(js, stack)[..., None],
        )

    def cells_sum_h(js, stack):
        # Tr(X w0) times the projector onto each cell
        pair = h * np.einsum("kbij,ji->kb", stack, W0)
        out = np.zeros(stack.shape[1:], dtype=complex)
        for i, j in enumerate(js):
            lo, hi = min(j * m, n), min((j + 1) * m, n)
            idx = np.arange(lo, hi)
            out[:, idx, idx] += pair[i][:, None]
        return out

    def density_h(t, a):
        i = min(int(t / h), n - 1)
        out = np.zeros_like(a)
        out[..., i, i] = np.einsum("...ij,ji->...", a, W0)
        return out

    return OperatorMeasure(
        spec,
        "density",
        "absolutely-continuous",
        "heisenberg",
        step,
        cells_sum_h,
        name="boundary-injection",
        density_fn=density_h,
        adjoint_fn=lambda: boundary_injection_measure(omega0, step, "schrodinger"),
    )


@dataclass(frozen=True)
class CovarianceReport:
    residual: float
    scale: float
    form: Picture
    tol: float

    @property
    def passed(self) -> bool:
        return self.residual <= self.tol


def _norm(spec: GridSpec, arr: np.ndarray, kind: str) -> float:
    if kind == "vector":
        return float(np.sqrt(spec.h) * np.linalg.norm(arr))
    if kind == "state":
        return float(spec.h * np.linalg.norm(arr))  # Hilbert-Schmidt norm of h*W
    return float(np.linalg.norm(arr))


def _raw(probe):
    if isinstance(probe, GridFunction):
        return probe.spec, probe.values
    if isinstance(probe, DensityOperator):
        return probe.spec, probe.matrix
    if isinstance(probe, GridOperator):
        return probe.spec, probe.entries
    return None, np.asarray(probe, dtype=complex)


def check_covariance(
    measure: OperatorMeasure,
    family,
    a: float,
    b: float,
    t: float,
    probe,
    tol: float = 1e-12,
) -> CovarianceReport:
    """Covariance residual in the measure's own form.

    Heisenberg form: ``||T_t mass(a, b) p - mass(a + t, b + t) p||``.
    Schrödinger form: ``||mass(a, b) T_{*t} p - mass(a + t, b + t) p||``.
    """
    spec, x = _raw(probe)
    if spec is not None:
        _check_same(measure.spec, spec)
    _check_same(measure.spec, family.spec)
    if x.ndim != measure.arg_ndim:
        raise SpecMismatchError(f"probe of dimension {x.ndim} does not match a {measure.level}-level measure")
    if measure.level == "vector":
        if not isinstance(family, SemigroupFamily):
            raise DomainError("a vector-level measure needs a vector semigroup")
        lhs = family.apply_array(t, measure.mass_apply(a, b, x))
        kind = "vector"
    else:
        sup = _as_super(family, measure.picture)
        if measure.picture == "schrodinger":
            lhs = measure.mass_apply(a, b, sup.apply_array(t, x))
            kind = "state"
        else:
            lhs = sup.apply_array(t, measure.mass_apply(a, b, x))
            kind = "observable"
    rhs = measure.mass_apply(a + t, b + t, x)
    return CovarianceReport(
        _norm(measure.spec, lhs - rhs, kind), _norm(measure.spec, rhs, kind), measure.picture, tol
    )


def additivity_residual(measure: OperatorMeasure, a: float, b: float, c: float, probe) -> float:
    """``max |mass(a, c) p - mass(a, b) p - mass(b, c) p|``."""
    _, x = _raw(probe)
    r = measure.mass_apply(a, c, x) - measure.mass_apply(a, b, x) - measure.mass_apply(b, c, x)
    return float(np.max(np.abs(r), initial=0.0))
