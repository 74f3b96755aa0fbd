"""Exponential-vector calculus on the symmetric Fock space over the half-line.

Nothing is expanded in a number basis.  A vector ``e(f)`` is represented by
its test function ``f`` and every operator by a finite sum of terms
``c |e(f)><e(g)|``; all quantities of interest are matrix elements

    <e(h1), c |e(f)><e(g)| e(h2)> = c exp(<h1, f> + <g, h2>),

so the only approximation is the quadrature behind ``<., .>``.

Shifts act on test functions: the second quantized right shift sends
``e(f)`` to ``e(S_t f)``, and the no-event map sends ``|e(f)><e(g)|`` to
``|e(S_t* f)><e(S_t* g)|``.  The forgetting semigroup keeps the part of the
overlap that crossed the origin as a scalar factor ``exp(int_0^t conj(g) f)``
instead of discarding it, which makes it trace preserving.

Interval integrals over nodes come in two rules:

``node``
    second order: node ``i`` contributes ``h conj(g_i) f_i`` split evenly
    between shifts by ``i`` and ``i + 1`` cells (trapezoid in the shift).
``cell``
    discretely exact: node ``i`` contributes ``exp(h conj(g_i) f_i) - 1`` at
    shift ``i + 1``, so the telescoping identities hold to roundoff on the grid.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from covlab.errors import CapacityError, DomainError, SpecMismatchError
from covlab.grid import GridFunction, GridSpec, inner_product, shift_left_array, shift_right_array

Rule = Literal["node", "cell"]
Direction = Literal["right", "left-adjoint"]

DEFAULT_TERM_CAP = 100_000


class IllConditionedWarning(UserWarning):
    """The requested approximation relies on a hypothesis that fails for the input."""


def _check_same(a: GridSpec, b: GridSpec) -> None:
    if a != b:
        raise SpecMismatchError(f"grid mismatch: {a} vs {b}")


@dataclass(frozen=True, eq=False)
class ExpVector:
    f: GridFunction

    @property
    def spec(self) -> GridSpec:
        return self.f.spec

    @classmethod
    def vacuum(cls, spec: GridSpec) -> "ExpVector":
        return cls(GridFunction.zeros(spec))

    def norm_squared(self) -> float:
        return float(np.exp(self.f.norm() ** 2))


@dataclass(frozen=True, eq=False)
class ExpRankOne:
    """``coeff |e(ket)><e(bra)|``."""

    coeff: complex
    ket: GridFunction
    bra: GridFunction

    def __post_init__(self):
        _check_same(self.ket.spec, self.bra.spec)
        object.__setattr__(self, "coeff", complex(self.coeff))

    @property
    def spec(self) -> GridSpec:
        return self.ket.spec


@dataclass(frozen=True, eq=False)
class ExpOperatorSum:
    """``sum_k coeffs[k] |e(kets[k])><e(bras[k])|`` with test functions stored row-wise."""

    spec: GridSpec
    coeffs: np.ndarray = field(repr=False)
    kets: np.ndarray = field(repr=False)
    bras: np.ndarray = field(repr=False)
    cap: int = DEFAULT_TERM_CAP

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.coeffs, dtype=complex))
        n = self.spec.n_points
        k = np.asarray(self.kets, dtype=complex).reshape(-1, n)
        b = np.asarray(self.bras, dtype=complex).reshape(-1, n)
        if not (len(c) == k.shape[0] == b.shape[0]):
            raise SpecMismatchError(f"term arrays disagree: {len(c)}, {k.shape[0]}, {b.shape[0]}")
        if len(c) > self.cap:
            raise CapacityError(f"{len(c)} terms exceed the cap of {self.cap}")
        for a in (c, k, b):
            a.flags.writeable = False
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "kets", k)
        object.__setattr__(self, "bras", b)

    @classmethod
    def empty(cls, spec: GridSpec) -> "ExpOperatorSum":
        n = spec.n_points
        return cls(spec, np.zeros(0), np.zeros((0, n)), np.zeros((0, n)))

    @classmethod
    def from_terms(cls, terms, spec: GridSpec | None = None) -> "ExpOperatorSum":
        terms = list(terms)
        if not terms:
            if spec is None:
                raise DomainError("an empty term list needs an explicit grid")
            return cls.empty(spec)
        spec = terms[0].spec if spec is None else spec
        for t in terms:
            _check_same(spec, t.spec)
        return cls(
            spec,
            np.array([t.coeff for t in terms]),
            np.stack([t.ket.values for t in terms]),
            np.stack([t.bra.values for t in terms]),
        )

    def __len__(self) -> int:
        return len(self.coeffs)

    def terms(self):
        for c, k, b in zip(self.coeffs, self.kets, self.bras):
            yield ExpRankOne(c, GridFunction(self.spec, k), GridFunction(self.spec, b))

    def __add__(self, other: "ExpOperatorSum") -> "ExpOperatorSum":
        _check_same(self.spec, other.spec)
        return ExpOperatorSum(
            self.spec,
            np.concatenate([self.coeffs, other.coeffs]),
            np.concatenate([self.kets, other.kets]),
            np.concatenate([self.bras, other.bras]),
            min(self.cap, other.cap),
        )

    def __mul__(self, c: complex) -> "ExpOperatorSum":
        return ExpOperatorSum(self.spec, c * self.coeffs, self.kets, self.bras, self.cap)

    __rmul__ = __mul__

    def __neg__(self) -> "ExpOperatorSum":
        return self * -1.0


def _as_sum(x) -> ExpOperatorSum:
    if isinstance(x, ExpOperatorSum):
        return x
    if isinstance(x, ExpRankOne):
        return ExpOperatorSum(x.spec, [x.coeff], x.ket.values[None], x.bra.values[None])
    raise TypeError(f"expected ExpRankOne or ExpOperatorSum, got {type(x).__name__}")


def exp_inner(f: GridFunction, g: GridFunction) -> complex:
    """``<e(f), e(g)> = exp(<f, g>)``."""
    return complex(np.exp(inner_product(f, g)))


def matrix_element(X, h1: GridFunction, h2: GridFunction) -> complex:
    """``<e(h1), X e(h2)>``."""
    X = _as_sum(X)
    _check_same(X.spec, h1.spec)
    _check_same(X.spec, h2.spec)
    h = X.spec.h
    if len(X) == 0:
        return 0j
    expo = h * (X.kets @ h1.values.conj() + X.bras.conj() @ h2.values)
    return complex(np.sum(X.coeffs * np.exp(expo)))


def trace(X) -> complex:
    """``Tr X = sum_k c_k <e(bra_k), e(ket_k)>``."""
    X = _as_sum(X)
    if len(X) == 0:
        return 0j
    return complex(np.sum(X.coeffs * np.exp(X.spec.h * np.einsum("ki,ki->k", X.bras.conj(), X.kets))))


def _shift_rows(arr: np.ndarray, m: int, direction: Direction) -> np.ndarray:
    if direction == "right":
        return shift_right_array(arr, m)
    if direction == "left-adjoint":
        return shift_left_array(arr, m)
    raise DomainError(f"unknown shift direction {direction!r}")


def shift_exp(v, t: float, direction: Direction = "right"):
    """Replace every test function by its shift; coefficients are untouched.

    On a rank-one term ``left-adjoint`` is the no-event map and ``right``
    its dual.
    """
    if isinstance(v, ExpVector):
        m = v.spec.steps(t)
        return ExpVector(GridFunction(v.spec, _shift_rows(v.f.values, m, direction)))
    X = _as_sum(v)
    m = X.spec.steps(t)
    out = ExpOperatorSum(X.spec, X.coeffs, _shift_rows(X.kets, m, direction), _shift_rows(X.bras, m, direction), X.cap)
    if isinstance(v, ExpRankOne):
        return next(out.terms())
    return out


def forgetting_factor_exponent(f: np.ndarray, g: np.ndarray, m: int, h: float) -> np.ndarray:
    """``h sum_{i<m} conj(g_i) f_i`` along the last axis."""
    return h * np.sum(g[..., :m].conj() * f[..., :m], axis=-1)


def forgetting_apply(r, t: float):
    """Left shift by ``t`` keeping the crossed overlap: ``exp(int_0^t conj(g) f) |e(S_t* f)><e(S_t* g)|``."""
    X = _as_sum(r)
    m = X.spec.steps(t)
    fac = np.exp(forgetting_factor_exponent(X.kets, X.bras, m, X.spec.h))
    out = ExpOperatorSum(
        X.spec, X.coeffs * fac, shift_left_array(X.kets, m), shift_left_array(X.bras, m), X.cap
    )
    if isinstance(r, ExpRankOne):
        return next(out.terms())
    return out


@dataclass(frozen=True, eq=False)
class WVector:
    """A vector of ``C Omega (+) H (x) L^2`` sampled on nodes.

    ``scalar`` is the vacuum component; node ``i`` carries the Fock vector
    ``e(funcs[i])`` times the amplitude ``amps[i]``, with quadrature weight
    ``weights[i]`` and position index ``cells[i]`` (a node of the grid).
    """

    spec: GridSpec
    scalar: complex
    funcs: np.ndarray = field(repr=False)
    amps: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    cells: np.ndarray = field(repr=False)


def w_embed(f: GridFunction, a: float = 0.0, b: float | None = None, scalar: complex = 1.0) -> WVector:
    """Node sampling of ``W e(f)``, optionally restricted to positions in ``[a, b)``.

    Node ``i`` carries ``e(S_{ih}* f)`` with amplitude ``f_i``: the shift is
    aligned to the left edge of the cell, and :func:`w_pairing` moves it to
    the cell midpoint.
    """
    spec = f.spec
    b = spec.x_max if b is None else b
    ia, ib = spec.steps(a, "a"), spec.steps(b, "b")
    idx = np.arange(ia, min(ib, spec.n_points))
    funcs = np.stack([shift_left_array(f.values, i) for i in idx]) if len(idx) else np.zeros((0, spec.n_points))
    return WVector(spec, complex(scalar), funcs, f.values[idx], np.full(len(idx), spec.h), idx)


def _split_cell_inner(F: np.ndarray, G: np.ndarray, h: float, split: bool) -> np.ndarray:
    """Row-wise ``<F, G>``, optionally with half weight on the first cell."""
    prod = F.conj() * G
    s = h * prod.sum(axis=-1)
    if split:
        s = s - 0.5 * h * prod[..., 0]
    return s


def w_pairing(u: WVector, v: WVector, split_cell: bool = True) -> complex:
    """Inner product of two node-sampled W vectors.

    Only nodes at the same position pair up.  With ``split_cell`` the
    overlap of the shifted test functions drops half of their first cell,
    i.e. uses shifts to the cell midpoint, which makes the pairing second
    order accurate.
    """
    _check_same(u.spec, v.spec)
    common, iu, iv = np.intersect1d(u.cells, v.cells, return_indices=True)
    out = np.conj(u.scalar) * v.scalar
    if len(common):
        ov = _split_cell_inner(u.funcs[iu], v.funcs[iv], u.spec.h, split_cell)
        out += np.sum(u.weights[iu] * np.conj(u.amps[iu]) * v.amps[iv] * np.exp(ov))
    return complex(out)


def w_inner(f: GridFunction, g: GridFunction, split_cell: bool = True) -> complex:
    """``<W e(f), W e(g)>`` in closed form over all nodes (no node functions stored).

    Equal to :func:`w_pairing` of the two embeddings.
    """
    _check_same(f.spec, g.spec)
    h = f.spec.h
    a = f.values.conj() * g.values
    tail = h * np.cumsum(a[::-1])[::-1]  # <S_{ih}* f, S_{ih}* g>
    if split_cell:
        tail = tail - 0.5 * h * a
    return complex(1.0 + h * np.sum(a * np.exp(tail)))


def _measure_weights(a_vals: np.ndarray, h: float, rule: Rule):
    """Per-node (weights, shifts) lists for the rule."""
    if rule == "node":
        return [(0.5 * h * a_vals, 0), (0.5 * h * a_vals, 1)]
    if rule == "cell":
        return [(np.expm1(h * a_vals), 1)]
    raise DomainError(f"unknown rule {rule!r}")


def fock_measure_apply(r, a: float, b: float, rule: Rule = "node") -> ExpOperatorSum:
    """``int_a^b |e(S_t* f)><e(S_t* g)| conj(g(t)) f(t) dt`` as a sum of rank-one terms.

    Each input term contributes one (``cell``) or two (``node``) terms per
    node in ``[a, b)``; terms with zero weight are dropped.
    """
    X = _as_sum(r)
    spec = X.spec
    ia, ib = spec.steps(a, "a"), spec.steps(b, "b")
    if ib < ia:
        raise DomainError(f"reversed interval [{a}, {b})")
    ib = min(ib, spec.n_points)
    nodes = np.arange(ia, ib)
    coeffs, kets, bras = [], [], []
    for c, f, g in zip(X.coeffs, X.kets, X.bras):
        av = g[nodes].conj() * f[nodes]
        for w, off in _measure_weights(av, spec.h, rule):
            keep = w != 0
            for i, wi in zip(nodes[keep], w[keep]):
                coeffs.append(c * wi)
                kets.append(shift_left_array(f, i + off))
                bras.append(shift_left_array(g, i + off))
        if len(coeffs) > X.cap:
            raise CapacityError(f"measure application exceeds the cap of {X.cap} terms")
    if not coeffs:
        return ExpOperatorSum.empty(spec)
    return ExpOperatorSum(spec, np.array(coeffs), np.stack(kets), np.stack(bras), X.cap)


def fock_measure_terms(r: ExpRankOne, a: float, b: float, rule: Rule = "node"):
    """Like :func:`fock_measure_apply` but also returns each term's shift in cells."""
    spec = r.spec
    ia, ib = spec.steps(a, "a"), min(spec.steps(b, "b"), spec.n_points)
    nodes = np.arange(ia, ib)
    f, g = r.ket.values, r.bra.values
    av = g[nodes].conj() * f[nodes]
    out = []
    for w, off in _measure_weights(av, spec.h, rule):
        out.extend((r.coeff * wi, i + off) for i, wi in zip(nodes, w))
    return out


def measure_then_forget(r: ExpRankOne, t: float, rule: Rule = "node") -> ExpOperatorSum:
    """``int_0^t Tb_{*(t-s)} M_*(ds) r``: every measure term forgets for its remaining time."""
    spec = r.spec
    k = spec.steps(t)
    f, g = r.ket.values, r.bra.values
    coeffs, kets, bras = [], [], []
    for w, s in fock_measure_terms(r, 0.0, t, rule):
        fs, gs = shift_left_array(f, s), shift_left_array(g, s)
        rem = max(k - s, 0)
        coeffs.append(w * np.exp(forgetting_factor_exponent(fs, gs, rem, spec.h)))
        kets.append(shift_left_array(fs, rem))
        bras.append(shift_left_array(gs, rem))
    if not coeffs:
        return ExpOperatorSum.empty(spec)
    return ExpOperatorSum(spec, np.array(coeffs), np.stack(kets), np.stack(bras))


# -- two-route checks ---------------------------------------------------------


def forgetting_two_routes(r: ExpRankOne, t: float, h1: GridFunction, h2: GridFunction) -> tuple[complex, complex]:
    """Matrix element of the forgetting map, through the operator and through the closed formula."""
    spec = r.spec
    k = spec.steps(t)
    via_op = matrix_element(forgetting_apply(r, t), h1, h2)
    expo = (
        forgetting_factor_exponent(r.ket.values, r.bra.values, k, spec.h)
        + inner_product(r.bra, GridFunction(spec, shift_right_array(h2.values, k)))
        + inner_product(GridFunction(spec, shift_right_array(h1.values, k)), r.ket)
    )
    return via_op, complex(r.coeff * np.exp(expo))


def integral_equation_routes(r: ExpRankOne, t: float, h1: GridFunction, h2: GridFunction, rule: Rule = "node"):
    """Both sides of ``Tb_{*t} r - int_0^t Tb_{*(t-s)} M_*(ds) r = T_{*t} r`` as matrix elements."""
    lhs = matrix_element(forgetting_apply(r, t), h1, h2) - matrix_element(measure_then_forget(r, t, rule), h1, h2)
    rhs = matrix_element(shift_exp(r, t, "left-adjoint"), h1, h2)
    return lhs, rhs


def embedded_semigroup_routes(
    f: GridFunction, g: GridFunction, u: GridFunction, v: GridFunction, t: float, rule: Rule = "node"
) -> tuple[complex, complex]:
    """``<e(f), Tb_t X e(g)>`` for ``X = |e(u)><e(v)|``, directly and through the embedded decomposition.

    The direct route uses the forgetting map by duality; the embedded route
    adds the no-event part and the measure-weighted integral of forgetting
    maps started at each node.
    """
    r = ExpRankOne(1.0, g, f)  # pairs against X through Tr(X .) = <e(v), . e(u)>
    direct = matrix_element(forgetting_apply(r, t), v, u)
    embedded = matrix_element(shift_exp(r, t, "left-adjoint"), v, u) + matrix_element(
        measure_then_forget(r, t, rule), v, u
    )
    return direct, embedded


def measure_matrix_element_routes(
    r: ExpRankOne, a: float, b: float, h1: GridFunction, h2: GridFunction, rule: Rule = "node"
) -> tuple[complex, complex]:
    """``<e(h1), M_*([a, b)) r e(h2)>`` from the term sum and from the W-embedding pairing.

    The second route pairs the embeddings of the bra and ket test functions
    with ``|e(h2)><e(h1)| (x) chi[a, b)`` inserted, sampling the shift with
    the same rule.
    """
    spec = r.spec
    via_terms = matrix_element(fock_measure_apply(r, a, b, rule), h1, h2)
    ia, ib = spec.steps(a, "a"), min(spec.steps(b, "b"), spec.n_points)
    nodes = np.arange(ia, ib)
    f, g = r.ket.values, r.bra.values
    h = spec.h
    # <S_s* g, h2> and <h1, S_s* f> for every shift s
    gh2 = h * np.array([np.dot(shift_left_array(g, s).conj(), h2.values) for s in range(spec.n_points + 1)])
    h1f = h * np.array([np.dot(h1.values.conj(), shift_left_array(f, s)) for s in range(spec.n_points + 1)])
    av = g[nodes].conj() * f[nodes]
    total = 0j
    for w, off in _measure_weights(av, h, rule):
        s = nodes + off
        total += np.sum(w * np.exp(gh2[s] + h1f[s]))
    return via_terms, complex(r.coeff * total)


def measure_covariance_residual(r: ExpRankOne, a: float, b: float, t: float, h1: GridFunction, h2: GridFunction, rule: Rule = "node") -> float:
    """``|<e(h1), (M_*([a, b)) T_{*t} r - M_*([a+t, b+t)) r) e(h2)>|``."""
    shifted = shift_exp(r, t, "left-adjoint")
    lhs = matrix_element(fock_measure_apply(shifted, a, b, rule), h1, h2)
    rhs = matrix_element(fock_measure_apply(r, a + t, b + t, rule), h1, h2)
    return float(abs(lhs - rhs))


def forgetting_scalar_identity(f: GridFunction, g: GridFunction, t: float, rule: Rule = "node") -> tuple[float, complex, complex]:
    """Scalar content of the integral equation: ``int_0^t exp(int_s^t conj(g) f) conj(g(s)) f(s) ds = exp(int_0^t conj(g) f) - 1``.

    Returns ``(residual, quadrature_lhs, rhs)``; the right side uses the same
    discrete exponent as the forgetting map.
    """
    spec = f.spec
    k = spec.steps(t)
    h = spec.h
    a = g.values[:k].conj() * f.values[:k]
    tails = h * np.concatenate([np.cumsum(a[::-1])[::-1], [0.0]])  # tails[s] = h sum_{s<=i<k} a_i
    lhs = 0j
    for w, off in _measure_weights(a, h, rule):
        lhs += np.sum(w * np.exp(tails[np.arange(k) + off]))
    rhs = np.expm1(tails[0]) if k else 0j
    return float(abs(lhs - rhs)), complex(lhs), complex(rhs)


# -- approximating tensor products by W vectors -------------------------------


@dataclass(frozen=True)
class IndicatorApproximation:
    n_parts: int
    distance: float
    bound: float
    bound_terms: tuple[float, float]
    f0: complex


def _exp_overlap(F: np.ndarray, G: np.ndarray, h: float) -> np.ndarray:
    return np.exp(h * np.sum(F.conj() * G, axis=-1))


def approx_indicator_tensor(f: GridFunction, b: float, c: float, n_parts: int, first_part: int = 0) -> IndicatorApproximation:
    """Distance from a sum of W-increments to ``f(0) e(f) (x) chi[b, c)``.

    ``[b, c)`` is cut into ``n_parts`` pieces of length ``d`` starting at
    ``x_k``; part ``k`` is ``J(S_{x_k} f) - J(chi[x_{k+1}, inf) S_{x_k} f)``,
    whose node samples at ``x_k + tau`` are ``f(tau) e(S_tau* f)``.  Parts
    from ``first_part`` to ``n_parts - 1`` are summed.  Also returns the a
    priori bound ``sqrt(n) (A 2|f(0)| sqrt(d) + ||e(f)|| 2|f'(0)| d^{3/2})``
    with ``A = max_tau ||e(S_tau* f) - e(f)||``.

    ``f(0)`` and ``f'(0)`` are extrapolated from the first two nodes.
    """
    spec = f.spec
    h = spec.h
    if n_parts < 1:
        raise DomainError("n_parts must be positive")
    ib, ic = spec.steps(b, "b"), spec.steps(c, "c")
    if ic < ib or ic > spec.n_points:
        raise DomainError(f"need 0 <= b <= c <= x_max, got [{b}, {c})")
    v = f.values
    f0 = 1.5 * v[0] - 0.5 * v[1]
    df0 = (v[1] - v[0]) / h
    # a smooth f with f(0) = 0 extrapolates to O(h^2), so compare against h
    if abs(f0) <= h * np.abs(v).max():
        warnings.warn("f(0) = 0: the increments do not approximate the target", IllConditionedWarning, stacklevel=2)
    if ic == ib:
        return IndicatorApproximation(n_parts, 0.0, 0.0, (0.0, 0.0), complex(f0))
    width = ic - ib
    if width % n_parts:
        raise DomainError(f"[{b}, {c}) has {width} cells, not divisible into {n_parts} parts")
    m = width // n_parts
    d = m * h
    taus = np.arange(m)
    F = np.stack([shift_left_array(v, s) for s in taus])  # S_tau* f
    ef2 = float(np.exp(h * np.vdot(v, v).real))
    # ||f(tau) e(S_tau* f) - f(0) e(f)||^2 on each node of a part
    amp = v[taus]
    sq = (
        np.abs(amp) ** 2 * _exp_overlap(F, F, h).real
        - 2 * np.real(np.conj(amp) * f0 * _exp_overlap(F, v[None], h))
        + abs(f0) ** 2 * ef2
    )
    parts_in = n_parts - first_part
    dist2 = parts_in * h * sq.sum() + first_part * m * h * abs(f0) ** 2 * ef2
    A = np.sqrt(np.max(_exp_overlap(F, F, h).real - 2 * _exp_overlap(F, v[None], h).real + ef2, initial=0.0))
    t1 = float(A * 2 * abs(f0) * np.sqrt(d))
    t2 = float(np.sqrt(ef2) * 2 * abs(df0) * d**1.5)
    return IndicatorApproximation(
        n_parts, float(np.sqrt(max(dist2, 0.0))), float(np.sqrt(n_parts) * (t1 + t2)), (t1, t2), complex(f0)
    )
