"""Perturbed semigroups from covariant measures by discrete convolution.

With ``M_j`` the measure of ``[t_{j-1}, t_j)`` the marching recurrence is

    Heisenberg form:   Tb_k = T_k + sum_{j=1}^k M_j Tb_{k-j}
    Schrödinger form:  Tb_k = T_k + sum_{j=1}^k Tb_{k-j} M_j

Both are explicit.  The Heisenberg form propagates a single argument
directly.  The Schrödinger form composes on the wrong side for that, so a
single state is propagated through the equivalent resolvent sequence

    R_0 = w,   R_k = sum_{j=1}^k M_j R_{k-j},   Tb_k w = sum_{m=0}^k T_{k-m} R_m,

which is the same recurrence rearranged (compare generating functions).
Measures with a finite-dimensional range carry ``R_k`` as coefficients on
the range basis and additionally propagate the basis itself, so the
Schrödinger identity can be checked literally on one trajectory.

Orbits are arrays of shape ``(K + 1, B, *arg)``: step, argument, argument
shape.  Reference mode propagates a full basis so every ``Tb_k`` is
available as a matrix.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from covlab.dynamics import DensityOperator, SuperOperatorFamily, no_event_family
from covlab.errors import (
    AlignmentError,
    CapacityError,
    ConfigError,
    DomainError,
    SeriesDivergenceError,
    SpecMismatchError,
    UnsupportedOperationError,
)
from covlab.grid import ALIGN_RTOL, GridFunction, GridOperator, GridSpec
from covlab.measures import OperatorMeasure
from covlab.semigroup import SemigroupFamily

Mode = Literal["reference", "trajectory"]
Kind = Literal["vector", "state", "observable"]

DEFAULT_REFERENCE_CAP = 32
REFERENCE_BYTES = 2 * 1024**3
CAP_ENV = "COVLAB_REFERENCE_CAP"


def reference_cap() -> int:
    """Largest ``n_points`` allowed in reference mode (``$COVLAB_REFERENCE_CAP``, default 32)."""
    raw = os.environ.get(CAP_ENV)
    if raw is None:
        return DEFAULT_REFERENCE_CAP
    try:
        cap = int(raw)
    except ValueError as exc:
        raise ConfigError(f"{CAP_ENV} must be an integer, got {raw!r}") from exc
    if cap < 1:
        raise ConfigError(f"{CAP_ENV} must be positive, got {cap}")
    return cap


@dataclass(frozen=True)
class TimeGrid:
    t_max: float
    n_steps: int

    def __post_init__(self):
        if not np.isfinite(self.t_max) or self.t_max <= 0:
            raise DomainError(f"t_max must be positive, got {self.t_max}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise DomainError(f"n_steps must be a positive integer, got {self.n_steps}")
        object.__setattr__(self, "n_steps", int(self.n_steps))

    @property
    def dt(self) -> float:
        return self.t_max / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    def aligned_to(self, spec: GridSpec) -> bool:
        """Whether the step is a whole number of space cells."""
        m = round(self.dt / spec.h)
        return m >= 1 and abs(m * spec.h - self.dt) <= ALIGN_RTOL * self.dt

    def refine(self, factor: int = 2) -> "TimeGrid":
        return TimeGrid(self.t_max, self.n_steps * factor)


def _kind(measure: OperatorMeasure) -> Kind:
    if measure.level == "vector":
        return "vector"
    return "state" if measure.picture == "schrodinger" else "observable"


def norms(spec: GridSpec, kind: Kind, arr: np.ndarray) -> np.ndarray:
    """Natural norms over the trailing argument axes: L^2, Hilbert-Schmidt of ``h*W``, Frobenius."""
    if kind == "vector":
        return np.sqrt(spec.h) * np.linalg.norm(arr, axis=-1)
    flat = np.linalg.norm(arr, axis=(-2, -1))
    return spec.h * flat if kind == "state" else flat


@dataclass(eq=False)
class PerturbedFamily:
    spec: GridSpec
    time_grid: TimeGrid
    kind: Kind
    mode: Mode
    args: np.ndarray = field(repr=False)
    orbit: np.ndarray = field(repr=False)
    base_orbit: np.ndarray = field(repr=False)
    resolvent: np.ndarray | None = field(default=None, repr=False)
    # finite-range Schrödinger path: orbit of the range basis, and its base orbit
    aux_orbit: np.ndarray | None = field(default=None, repr=False)
    aux_base_orbit: np.ndarray | None = field(default=None, repr=False)
    renewal: np.ndarray | None = field(default=None, repr=False)

    @property
    def picture(self) -> str:
        return "schrodinger" if self.kind == "state" else "heisenberg"

    @property
    def n_steps(self) -> int:
        return self.orbit.shape[0] - 1

    def at(self, k: int, b: int = 0):
        """The ``b``-th propagated argument after ``k`` steps, as a grid object."""
        val = self.orbit[k, b]
        if self.kind == "vector":
            return GridFunction(self.spec, val)
        if self.kind == "state":
            return DensityOperator(self.spec, val)
        return GridOperator(self.spec, val)

    def map_matrix(self, k: int) -> np.ndarray:
        """``Tb_k`` as a matrix on flattened arguments (reference mode only)."""
        if self.mode != "reference":
            raise UnsupportedOperationError("full maps are only stored in reference mode")
        d = self.args.shape[0]
        return self.orbit[k].reshape(d, -1).T

    @property
    def norms(self) -> np.ndarray:
        return norms(self.spec, self.kind, self.orbit)

    @property
    def traces(self) -> np.ndarray:
        if self.kind != "state":
            raise UnsupportedOperationError("traces are defined for state trajectories")
        return self.spec.h * np.einsum("kbii->kb", self.orbit)

    @property
    def min_eigenvalues(self) -> np.ndarray:
        if self.kind != "state":
            raise UnsupportedOperationError("eigenvalues are monitored for state trajectories")
        herm = 0.5 * (self.orbit + np.conj(np.swapaxes(self.orbit, -1, -2)))
        return self.spec.h * np.linalg.eigvalsh(herm).min(axis=-1)


def _prepare(base, measure: OperatorMeasure, tg: TimeGrid):
    """Validate levels and return (base, steps-per-cell)."""
    if measure.level == "vector":
        if not isinstance(base, SemigroupFamily):
            raise DomainError("a vector-level measure needs a vector semigroup as base")
    else:
        if isinstance(base, SemigroupFamily):
            base = no_event_family(base, measure.picture)
        elif not isinstance(base, SuperOperatorFamily):
            raise DomainError(f"unsupported base {type(base).__name__}")
        if base.picture != measure.picture:
            raise DomainError(f"base picture {base.picture} does not match measure picture {measure.picture}")
    if base.spec != measure.spec:
        raise SpecMismatchError(f"grid mismatch: {base.spec} vs {measure.spec}")
    m = round(tg.dt / measure.step)
    if m < 1 or abs(m * measure.step - tg.dt) > ALIGN_RTOL * tg.dt:
        raise AlignmentError(f"time step {tg.dt} is not a multiple of the measure cell width {measure.step}")
    return base, int(m)


def _base_apply(base, t: float, x: np.ndarray) -> np.ndarray:
    return base.apply_array(t, x)


def _base_orbit(base, tg: TimeGrid, args: np.ndarray) -> np.ndarray:
    out = np.empty((tg.n_steps + 1,) + args.shape, dtype=complex)
    out[0] = args
    for k in range(1, tg.n_steps + 1):
        out[k] = _base_apply(base, k * tg.dt, args)
    return out


def _conv_at(measure: OperatorMeasure, m: int, seq: np.ndarray, k: int) -> np.ndarray:
    """``sum_{j=1}^k M_j(seq[k-j])``."""
    if k == 0:
        return np.zeros(seq.shape[1:], dtype=complex)
    stack = seq[k - 1::-1][:k]
    if m == 1:
        return measure.cells_sum(np.arange(k), stack)
    return measure.cells_sum(np.arange(k * m), np.repeat(stack, m, axis=0))


def _base_stack(base, tg: TimeGrid) -> np.ndarray | None:
    """Vector-level matrices ``T_k`` for every step, when the base is a dense no-event family."""
    if isinstance(base, SuperOperatorFamily) and base.evaluator is None and not base.vector_family.is_shift:
        return np.stack([base.vector_family.matrix(k * tg.dt) for k in range(tg.n_steps + 1)])
    return None


def _resolvent_sum(
    base, tg: TimeGrid, R: np.ndarray, k: int, stack: np.ndarray | None = None, start: int = 0
) -> np.ndarray:
    """``sum_{m=start}^k T_{k-m} R_m``."""
    if stack is not None:
        return base.apply_stacked(stack[k - start::-1], R[start : k + 1]).sum(axis=0)
    times = (k - np.arange(start, k + 1)) * tg.dt
    return base.apply_many(times, R[start : k + 1]).sum(axis=0)


def _basis(spec: GridSpec, kind: Kind) -> np.ndarray:
    n = spec.n_points
    if kind == "vector":
        return np.eye(n, dtype=complex)
    return np.eye(n * n, dtype=complex).reshape(n * n, n, n)


def _to_array(arg, spec: GridSpec, kind: Kind) -> np.ndarray:
    if isinstance(arg, GridFunction):
        x = arg.values
    elif isinstance(arg, DensityOperator):
        x = arg.matrix
    elif isinstance(arg, GridOperator):
        x = arg.entries
    else:
        x = np.asarray(arg, dtype=complex)
    if isinstance(arg, (GridFunction, DensityOperator, GridOperator)) and arg.spec != spec:
        raise SpecMismatchError(f"grid mismatch: {arg.spec} vs {spec}")
    nd = 1 if kind == "vector" else 2
    n = spec.n_points
    if x.shape[-nd:] != (n,) * nd or x.ndim not in (nd, nd + 1):
        raise SpecMismatchError(f"argument of shape {x.shape} does not match a {kind} march on n={n}")
    return np.array(x[None] if x.ndim == nd else x, dtype=complex)


def _check_capacity(spec: GridSpec, kind: Kind, tg: TimeGrid) -> None:
    cap = reference_cap()
    if spec.n_points > cap:
        raise CapacityError(
            f"reference mode stores full maps; n_points={spec.n_points} exceeds the cap {cap} "
            f"(set {CAP_ENV} to raise it, or use trajectory mode)"
        )
    d = spec.n_points if kind == "vector" else spec.n_points**2
    need = 3 * (tg.n_steps + 1) * d * d * 16
    if need > REFERENCE_BYTES:
        raise CapacityError(f"reference mode would need about {need / 1024**3:.1f} GiB; use trajectory mode")


def _range_coeff_table(measure: OperatorMeasure, m: int, K: int, args: np.ndarray) -> np.ndarray:
    """Coefficients of ``M_j(args)`` on the range basis for j = 1..K, shape (K, B, r)."""
    stack = np.broadcast_to(args, (K * m,) + args.shape)
    c = measure.range_coeffs(np.arange(K * m), stack)
    return c.reshape((K, m) + c.shape[1:]).sum(axis=1)


def _finite_range_orbits(measure, base, tg, m, args):
    """Schrödinger march for a measure of finite range; returns orbit, base orbit, coefficient resolvent."""
    K = tg.n_steps
    basis = measure.range_basis
    C0 = _range_coeff_table(measure, m, K, args)  # (K, B, r)
    A = _range_coeff_table(measure, m, K, basis)  # (K, r, r)
    P = _base_orbit(base, tg, basis)  # (K+1, r, n, n)
    rho = np.zeros((K + 1,) + C0.shape[1:], dtype=complex)
    for k in range(1, K + 1):
        acc = C0[k - 1].copy()
        if k > 1:
            acc += np.einsum("jbr,jrs->bs", rho[k - 1:0:-1], A[: k - 1])
        rho[k] = acc
    base_orbit = _base_orbit(base, tg, args)
    orbit = base_orbit + _toeplitz_apply(rho, P)
    return orbit, base_orbit, rho, P


def march_perturbed(
    base,
    measure: OperatorMeasure,
    tg: TimeGrid,
    mode: Mode = "trajectory",
    arg=None,
) -> PerturbedFamily:
    """Solve the perturbation equation by explicit convolution marching.

    Parameters
    ----------
    base : SemigroupFamily or SuperOperatorFamily
        Unperturbed family; a vector semigroup is lifted to its no-event
        family when the measure acts on density matrices.
    measure : OperatorMeasure
        Its cell width must divide ``tg.dt``.
    tg : TimeGrid
    mode : {"trajectory", "reference"}
        Reference mode propagates a full basis (capped, see
        :func:`reference_cap`); trajectory mode propagates ``arg``.
    arg : GridFunction, DensityOperator, GridOperator or array, optional
        Initial argument(s) for trajectory mode; a leading batch axis is allowed.
    """
    base, m = _prepare(base, measure, tg)
    spec = measure.spec
    kind = _kind(measure)
    if mode == "reference":
        _check_capacity(spec, kind, tg)
        args = _basis(spec, kind)
    elif mode == "trajectory":
        if arg is None:
            raise DomainError("trajectory mode needs an initial argument")
        args = _to_array(arg, spec, kind)
    else:
        raise DomainError(f"unknown mode {mode!r}")
    K = tg.n_steps

    if kind != "state":
        base_orbit = _base_orbit(base, tg, args)
        orbit = base_orbit.copy()
        for k in range(1, K + 1):
            orbit[k] += _conv_at(measure, m, orbit, k)
        return PerturbedFamily(spec, tg, kind, mode, args, orbit, base_orbit)

    if measure.range_basis is not None:
        orbit, base_orbit, rho, P = _finite_range_orbits(measure, base, tg, m, args)
        aux, aux_base, _, _ = _finite_range_orbits(measure, base, tg, m, measure.range_basis)
        R = np.concatenate([args[None], np.einsum("kbr,rij->kbij", rho[1:], measure.range_basis)])
        return PerturbedFamily(spec, tg, kind, mode, args, orbit, base_orbit, R, aux, aux_base)

    R = np.zeros((K + 1,) + args.shape, dtype=complex)
    R[0] = args
    for k in range(1, K + 1):
        R[k] = _conv_at(measure, m, R, k)
    base_orbit = _base_orbit(base, tg, args)
    orbit = base_orbit.copy()
    stack = _base_stack(base, tg)
    for k in range(1, K + 1):
        if R[1 : k + 1].any():
            orbit[k] += _resolvent_sum(base, tg, R, k, stack, start=1)
    return PerturbedFamily(spec, tg, kind, mode, args, orbit, base_orbit, R)


def _compose_right_terms(pf: PerturbedFamily, measure: OperatorMeasure, m: int, k: int) -> np.ndarray:
    """``sum_{j=1}^k Tb_{k-j}(M_j(args))`` for a Schrödinger family."""
    args = pf.args
    if pf.aux_orbit is not None:
        C0 = _range_coeff_table(measure, m, k, args)  # (k, B, r)
        return np.einsum("jbr,jrxy->bxy", C0, pf.aux_orbit[k - 1::-1][:k])
    if pf.mode == "reference":
        d = args.shape[0]
        out = np.zeros(args.shape, dtype=complex)
        for j in range(1, k + 1):
            js = np.arange((j - 1) * m, j * m)
            Mj = measure.cells_sum(js, np.broadcast_to(args, (m,) + args.shape)).reshape(d, -1)
            out += (Mj @ pf.map_matrix(k - j).T).reshape(args.shape)
        return out
    # nothing is fed back when the measure annihilates the argument (zero measure)
    stack = np.broadcast_to(args, (m,) + args.shape)
    if not any(measure.cells_sum(np.arange(j * m, (j + 1) * m), stack).any() for j in range(k)):
        return np.zeros(args.shape, dtype=complex)
    raise UnsupportedOperationError(
        "the Schrödinger-form identity needs the perturbed family on other arguments: "
        "use reference mode, a finite-range measure, or the dual Heisenberg march"
    )


def identity_residuals(pf: PerturbedFamily, measure: OperatorMeasure, base=None) -> np.ndarray:
    """Per-step residual of the discrete integral equation, max over propagated arguments.

    Heisenberg form: ``||Tb_k x - T_k x - sum_j M_j(Tb_{k-j} x)||``; Schrödinger
    form: ``||Tb_k w - T_k w - sum_j Tb_{k-j}(M_j w)||``.  ``base`` is only used
    to recompute ``T_k`` when given; by default the stored base orbit is used.
    """
    tg = pf.time_grid
    if base is not None:
        base, m = _prepare(base, measure, tg)
        base_orbit = _base_orbit(base, tg, pf.args)
    else:
        m = round(tg.dt / measure.step)
        base_orbit = pf.base_orbit
    out = np.zeros(pf.n_steps + 1)
    out[0] = norms(pf.spec, pf.kind, pf.orbit[0] - pf.args).max()
    for k in range(1, pf.n_steps + 1):
        if pf.kind == "state":
            rhs = _compose_right_terms(pf, measure, m, k)
        else:
            rhs = _conv_at(measure, m, pf.orbit, k)
        out[k] = norms(pf.spec, pf.kind, pf.orbit[k] - base_orbit[k] - rhs).max()
    return out


def reconstruct_base(pf: PerturbedFamily, measure: OperatorMeasure, tg: TimeGrid | None = None) -> np.ndarray:
    """Recover the unperturbed orbit ``T_k(args)`` from the perturbed one.

    Returns an array shaped like ``pf.orbit``.  Inverts the marching
    recurrence, so on march output it reproduces the base to roundoff.
    """
    tg = pf.time_grid if tg is None else tg
    if tg != pf.time_grid:
        raise SpecMismatchError(f"time grid {tg} does not match the perturbed family's {pf.time_grid}")
    if measure.spec != pf.spec:
        raise SpecMismatchError(f"grid mismatch: {measure.spec} vs {pf.spec}")
    m = round(tg.dt / measure.step)
    if m < 1 or abs(m * measure.step - tg.dt) > ALIGN_RTOL * tg.dt:
        raise AlignmentError(f"time step {tg.dt} is not a multiple of the measure cell width {measure.step}")
    out = np.empty_like(pf.orbit)
    out[0] = pf.orbit[0]
    for k in range(1, pf.n_steps + 1):
        if pf.kind == "state":
            out[k] = pf.orbit[k] - _compose_right_terms(pf, measure, m, k)
        else:
            out[k] = pf.orbit[k] - _conv_at(measure, m, pf.orbit, k)
    return out


@dataclass(frozen=True)
class DysonReport:
    term_norms: tuple[float, ...]
    converged: bool
    tol: float

    @property
    def orders(self) -> int:
        return len(self.term_norms)


def _toeplitz_apply(rho: np.ndarray, P: np.ndarray) -> np.ndarray:
    """``out[k] = sum_{m=1}^k rho[m] P[k - m]`` for all ``k`` as one matrix product.

    ``rho`` is (K+1, B, r) scalar coefficients, ``P`` the (K+1, r, ...) orbit of
    the range basis.
    """
    K1, B, r = rho.shape
    tail = P.shape[2:]
    R = np.zeros((K1, B, K1, r), dtype=complex)
    for k in range(1, K1):
        # column j = k - m holds rho[m]
        R[k, :, :k, :] = np.transpose(rho[k:0:-1], (1, 0, 2))
    out = R.reshape(K1 * B, K1 * r) @ P.reshape(K1 * r, -1)
    return out.reshape((K1, B) + tail)


def dyson_series(
    base,
    measure: OperatorMeasure,
    tg: TimeGrid,
    order_cap: int = 64,
    tol: float = 1e-14,
    arg=None,
    mode: Mode = "trajectory",
) -> tuple[PerturbedFamily, DysonReport]:
    """Sum the perturbed family as a series of iterated convolutions with the measure.

    Term ``n`` carries ``n`` factors of the measure; on a grid of ``K`` steps
    every term beyond order ``K`` vanishes, so the series is finite, but it
    is stopped as soon as a term's norm (max over steps) drops to ``tol``.

    Raises
    ------
    SeriesDivergenceError
        If the term norms are still above ``tol`` at ``order_cap``.
    """
    base, m = _prepare(base, measure, tg)
    spec = measure.spec
    kind = _kind(measure)
    if mode == "reference":
        _check_capacity(spec, kind, tg)
        args = _basis(spec, kind)
    else:
        if arg is None:
            raise DomainError("trajectory mode needs an initial argument")
        args = _to_array(arg, spec, kind)
    K = tg.n_steps
    base_orbit = _base_orbit(base, tg, args)
    total = base_orbit.copy()
    term_norms = [float(norms(spec, kind, base_orbit).max())]
    finite = kind == "state" and measure.range_basis is not None

    if kind != "state":
        prev = base_orbit
    elif finite:
        C0 = _range_coeff_table(measure, m, K, args)
        A = _range_coeff_table(measure, m, K, measure.range_basis)
        P = _base_orbit(base, tg, measure.range_basis)
        prev = None
    else:
        prev = np.zeros_like(base_orbit)
        prev[0] = args
        stack = _base_stack(base, tg)

    converged = False
    for order in range(1, order_cap + 1):
        term = np.zeros_like(base_orbit)
        if kind != "state":
            new = np.zeros_like(base_orbit)
            for k in range(1, K + 1):
                new[k] = _conv_at(measure, m, prev, k)
            term = new
            prev = new
        elif finite:
            rho = np.zeros((K + 1,) + C0.shape[1:], dtype=complex)
            if order == 1:
                rho[1:] = C0
            else:
                for k in range(2, K + 1):
                    rho[k] = np.einsum("jbr,jrs->bs", prev[k - 1:0:-1], A[: k - 1])
            prev = rho
            term = _toeplitz_apply(rho, P)
        else:
            new = np.zeros_like(prev)
            for k in range(1, K + 1):
                new[k] = _conv_at(measure, m, prev, k)
            prev = new
            for k in range(1, K + 1):
                term[k] = _resolvent_sum(base, tg, new, k, stack)
        size = float(norms(spec, kind, term).max())
        term_norms.append(size)
        total += term
        if size <= tol:
            converged = True
            break
    report = DysonReport(tuple(term_norms), converged, tol)
    if not converged:
        raise SeriesDivergenceError(
            f"Dyson terms still at {term_norms[-1]:.3g} after {order_cap} orders "
            f"(norms {['%.2g' % v for v in term_norms[-4:]]}); use march_perturbed instead"
        )
    return PerturbedFamily(spec, tg, kind, mode, args, total, base_orbit), report


def scalar_volterra_rank_one(e: GridFunction, eta: GridFunction, tg: TimeGrid) -> PerturbedFamily:
    """Right shifts perturbed by ``eta -> <e, eta> chi``, through a scalar renewal equation.

    With ``phi_m = <e, Tb_m eta>`` the perturbed orbit is
    ``(Tb_k eta)_i = (S_k eta)_i + phi_{k-1-i}`` for ``i < k``, and
    ``phi_m = <e, S_m eta> + h sum_{i<m} conj(e_i) phi_{m-1-i}``.
    Cost is ``O(K^2)`` scalars plus ``O(K n)`` for assembly.
    """
    spec = e.spec
    if eta.spec != spec:
        raise SpecMismatchError(f"grid mismatch: {eta.spec} vs {spec}")
    h, n, K = spec.h, spec.n_points, tg.n_steps
    if abs(tg.dt - h) > ALIGN_RTOL * h:
        raise AlignmentError(f"the renewal fast path needs a time step equal to h={h}, got {tg.dt}")
    ec = e.values.conj()
    x = eta.values
    # <e, S_m eta> for all m at once
    direct = np.array([h * np.dot(ec[mm:], x[: n - mm]) if mm < n else 0.0 for mm in range(K + 1)], dtype=complex)
    w = h * ec  # kernel weights on the first nodes
    phi = np.zeros(K + 1, dtype=complex)
    for mm in range(K + 1):
        i = np.arange(min(mm, n))
        phi[mm] = direct[mm] + np.dot(w[i], phi[mm - 1 - i])
    orbit = np.zeros((K + 1, 1, n), dtype=complex)
    base_orbit = np.zeros_like(orbit)
    for k in range(K + 1):
        shifted = np.zeros(n, dtype=complex)
        if k < n:
            shifted[k:] = x[: n - k]
        base_orbit[k, 0] = shifted
        i = np.arange(min(k, n))
        orbit[k, 0] = shifted
        orbit[k, 0, i] += phi[k - 1 - i]
    return PerturbedFamily(spec, tg, "vector", "trajectory", x[None].astype(complex), orbit, base_orbit, renewal=phi)


@dataclass(frozen=True, eq=False)
class Reconstruction:
    estimate: np.ndarray = field(repr=False)
    mask: np.ndarray = field(repr=False)
    window: tuple[float, float]


def reconstruct_initial_state(pf: PerturbedFamily, measure: OperatorMeasure, base: SemigroupFamily, t: float, b: int = 0) -> Reconstruction:
    """Recover the initial argument from the perturbed trajectory up to time ``t``.

    The measure contribution is removed with :func:`reconstruct_base`,
    giving ``T_t`` applied to the initial argument, and the shift is then
    inverted on its range.  The right shift loses nothing but what it pushes
    past ``x_max``, so vectors are recovered on ``[0, x_max - t]``; the
    no-event map of a right shift discards what crosses the origin, so
    states are recovered on ``[t, x_max]`` in both kernel variables, and
    observables (Heisenberg form) on ``[0, x_max - t]``.

    Entries outside the window are zero in ``estimate`` and ``False`` in ``mask``.
    """
    if not isinstance(base, SemigroupFamily) or base.kind != "right-shift":
        raise UnsupportedOperationError(
            "initial states can only be reconstructed over the right-shift semigroup; "
            "other bases are not invertible on the grid"
        )
    spec = pf.spec
    tg = pf.time_grid
    k = round(t / tg.dt)
    if abs(k * tg.dt - t) > ALIGN_RTOL * max(1.0, t) or k > pf.n_steps:
        raise AlignmentError(f"t={t} is not a step of the perturbed family's time grid")
    shift = spec.steps(t)
    n = spec.n_points
    if shift >= n:
        raise DomainError(f"t={t} leaves an empty reconstruction window (x_max={spec.x_max})")
    if k == 0:
        est = pf.orbit[0, b]
        return Reconstruction(est, np.ones(est.shape, dtype=bool), (0.0, spec.x_max))
    # only the trajectory up to step k is needed
    sub = PerturbedFamily(
        spec,
        TimeGrid(k * tg.dt, k),
        pf.kind,
        pf.mode,
        pf.args,
        pf.orbit[: k + 1],
        pf.base_orbit[: k + 1],
        None if pf.resolvent is None else pf.resolvent[: k + 1],
        None if pf.aux_orbit is None else pf.aux_orbit[: k + 1],
        None if pf.aux_base_orbit is None else pf.aux_base_orbit[: k + 1],
    )
    Tt = reconstruct_base(sub, measure)[k, b]
    if pf.kind == "vector":
        est = np.zeros(n, dtype=complex)
        est[: n - shift] = Tt[shift:]
        mask = np.zeros(n, dtype=bool)
        mask[: n - shift] = True
        return Reconstruction(est, mask, (0.0, spec.x_max - t))
    est = np.zeros((n, n), dtype=complex)
    mask = np.zeros((n, n), dtype=bool)
    if pf.kind == "state":
        # (T_{*t} w)[a, b] = w[a + s, b + s]
        est[shift:, shift:] = Tt[: n - shift, : n - shift]
        mask[shift:, shift:] = True
        return Reconstruction(est, mask, (t, spec.x_max))
    est[: n - shift, : n - shift] = Tt[shift:, shift:]
    mask[: n - shift, : n - shift] = True
    return Reconstruction(est, mask, (0.0, spec.x_max - t))


def duality_residuals(heis: PerturbedFamily, schrod: PerturbedFamily) -> np.ndarray:
    """``max |Tr(Tb_k(x) w) - Tr(x Tb_{*k}(w))|`` per step over all argument pairs."""
    if heis.kind != "observable" or schrod.kind != "state":
        raise DomainError("need an observable family and a state family")
    if heis.n_steps != schrod.n_steps or heis.spec != schrod.spec:
        raise SpecMismatchError("families live on different grids")
    h = heis.spec.h
    lhs = h * np.einsum("kaij,kbji->kab", heis.orbit, np.broadcast_to(schrod.args, schrod.orbit.shape))
    rhs = h * np.einsum("kaij,kbji->kab", np.broadcast_to(heis.args, heis.orbit.shape), schrod.orbit)
    return np.abs(lhs - rhs).max(axis=(1, 2))
