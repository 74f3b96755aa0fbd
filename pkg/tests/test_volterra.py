import mpmath as mp
import numpy as np
import pytest
from scipy.integrate import quad

from covlab.dynamics import DensityOperator, diffusion_jump_operators, gksl_evolve, no_event_family, stencil_heat_family
from covlab.errors import (
    AlignmentError,
    CapacityError,
    ConfigError,
    DomainError,
    SeriesDivergenceError,
    UnsupportedOperationError,
)
from covlab.grid import GridFunction, GridOperator, GridSpec
from covlab.measures import (
    boundary_injection_measure,
    bounded_density_measure,
    lindblad_jump_measure,
    singular_rank_one_measure,
    zero_measure,
)
from covlab.semigroup import heat_family, right_shift_family
from covlab.volterra import (
    TimeGrid,
    duality_residuals,
    dyson_series,
    identity_residuals,
    march_perturbed,
    norms,
    reconstruct_base,
    reconstruct_initial_state,
    reference_cap,
    scalar_volterra_rank_one,
)
from conftest import smooth


def exp_psi(spec):
    return GridFunction.from_callable(spec, lambda x: np.sqrt(2) * np.exp(-x))


def injection_setup(n, x_max=8.0, t_max=2.0):
    s = GridSpec(x_max, n)
    tg = TimeGrid(t_max, round(t_max / s.h))
    w = DensityOperator.rank_one(exp_psi(s))
    w0 = w * (1 / w.trace().real)
    return s, tg, w, boundary_injection_measure(w0, step=tg.dt)


def test_time_grid():
    tg = TimeGrid(2.0, 8)
    assert tg.dt == 0.25 and len(tg.times) == 9
    assert tg.aligned_to(GridSpec(8.0, 32)) and not tg.aligned_to(GridSpec(8.0, 20))
    with pytest.raises(DomainError):
        TimeGrid(0.0, 4)
    with pytest.raises(DomainError):
        TimeGrid(1.0, 0)


def test_zero_measure_gives_base():
    s = GridSpec(8.0, 64)
    tg = TimeGrid(2.0, 16)
    eta = smooth(s, np.random.default_rng(0))
    pf = march_perturbed(right_shift_family(s), zero_measure(s, step=tg.dt), tg, arg=eta)
    np.testing.assert_array_equal(pf.orbit, pf.base_orbit)
    w = DensityOperator.rank_one(eta)
    pf = march_perturbed(heat_family(s), zero_measure(s, "density", step=tg.dt), tg, arg=w)
    np.testing.assert_array_equal(pf.orbit, pf.base_orbit)
    rb = reconstruct_base(pf, zero_measure(s, "density", step=tg.dt))
    np.testing.assert_array_equal(rb, pf.orbit)


def test_injection_restores_trace():
    worst = []
    for n in (128, 256):
        s, tg, w, m = injection_setup(n)
        pf = march_perturbed(right_shift_family(s), m, tg, arg=w)
        worst.append(np.abs(pf.traces[:, 0] - 1).max())
        # the unperturbed no-event trace decays like exp(-2t)
        base_tr = s.h * np.real(np.einsum("kbii->kb", pf.base_orbit))[:, 0]
        assert np.abs(base_tr - np.exp(-2 * tg.times)).max() <= 1e-3
        assert pf.min_eigenvalues.min() >= -1e-8
        assert identity_residuals(pf, m).max() <= 1e-12
    assert worst[1] <= 1e-3 and worst[1] <= worst[0] / 1.9


def test_injection_dyson_agrees():
    s, tg, w, m = injection_setup(256, t_max=1.0)
    pf = march_perturbed(right_shift_family(s), m, tg, arg=w)
    dy, rep = dyson_series(right_shift_family(s), m, tg, order_cap=256, arg=w)
    assert rep.converged
    assert np.abs(dy.orbit - pf.orbit).max() <= 1e-10
    tail = np.array(rep.term_norms[3:])
    assert np.all(tail[1:] <= tail[:-1] + 1e-15)


def test_dyson_order_zero_and_divergence():
    s = GridSpec(8.0, 64)
    tg = TimeGrid(2.0, 16)
    eta = smooth(s, np.random.default_rng(1))
    dy, rep = dyson_series(right_shift_family(s), zero_measure(s, step=tg.dt), tg, arg=eta)
    np.testing.assert_array_equal(dy.orbit, dy.base_orbit)
    assert rep.term_norms[1:] == (0.0,)
    e = GridFunction.from_callable(s, lambda x: 4 * np.exp(-x))
    with pytest.raises(SeriesDivergenceError, match="march_perturbed"):
        dyson_series(right_shift_family(s), singular_rank_one_measure(e, step=tg.dt), tg, order_cap=2, arg=eta)


def test_rank_one_solvers_agree():
    s = GridSpec(8.0, 256)
    tg = TimeGrid(2.0, 64)
    rng = np.random.default_rng(2)
    e = GridFunction.from_callable(s, lambda x: 0.5 * np.exp(-x))
    eta = smooth(s, rng)
    m = singular_rank_one_measure(e, step=tg.dt)
    pf = march_perturbed(right_shift_family(s), m, tg, arg=eta)
    dy, _ = dyson_series(right_shift_family(s), m, tg, order_cap=256, arg=eta)
    assert np.abs(dy.orbit - pf.orbit).max() <= 1e-10
    sc = scalar_volterra_rank_one(e, eta, tg)
    assert np.abs(sc.orbit - pf.orbit).max() <= 1e-10
    assert np.abs(sc.orbit - dy.orbit).max() <= 1e-10


def test_scalar_path_trivial_and_alignment():
    s = GridSpec(4.0, 32)
    eta = smooth(s, np.random.default_rng(3))
    sc = scalar_volterra_rank_one(GridFunction.zeros(s), eta, TimeGrid(1.0, 8))
    np.testing.assert_array_equal(sc.orbit, sc.base_orbit)
    with pytest.raises(AlignmentError):
        scalar_volterra_rank_one(GridFunction.zeros(s), eta, TimeGrid(1.0, 4))


def test_renewal_against_laplace_inversion():
    # e = c exp(-x) turns the renewal kernel into c/(s+1) in the transform variable
    c = 0.5
    eta = lambda x: np.exp(-((x - 1.5) ** 2))  # noqa: E731
    A = quad(lambda y: np.exp(-y) * eta(y), 0, np.inf)[0]
    errs = []
    for n in (64, 128, 256):
        s = GridSpec(8.0, n)
        tg = TimeGrid(2.0, round(2.0 / s.h))
        sc = scalar_volterra_rank_one(
            GridFunction.from_callable(s, lambda x: c * np.exp(-x)), GridFunction.from_callable(s, eta), tg
        )
        ms = np.arange(0, tg.n_steps, tg.n_steps // 8)
        tau = (ms + 0.5) * s.h
        ref = np.array([float(mp.invertlaplace(lambda p: c * A / (p + 1 - c), t, method="talbot")) for t in tau])
        errs.append(np.abs(sc.renewal[ms] - ref).max())
    assert errs[0] <= 1e-2
    assert 1.8 < errs[0] / errs[1] < 2.2 and 1.8 < errs[1] / errs[2] < 2.2


def test_reconstruct_base_and_initial_state_rank_one():
    s = GridSpec(8.0, 256)
    tg = TimeGrid(2.0, 64)
    eta = smooth(s, np.random.default_rng(4))
    m = singular_rank_one_measure(GridFunction.from_callable(s, lambda x: 0.5 * np.exp(-x)), step=tg.dt)
    fam = right_shift_family(s)
    pf = march_perturbed(fam, m, tg, arg=eta)
    assert norms(s, "vector", reconstruct_base(pf, m) - pf.base_orbit).max() <= 1e-12
    rec = reconstruct_initial_state(pf, m, fam, 1.5)
    assert rec.window == (0.0, 6.5)
    assert np.abs(np.where(rec.mask, rec.estimate - eta.values, 0)).max() <= 1e-10
    rec0 = reconstruct_initial_state(pf, m, fam, 0.0)
    assert rec0.mask.all() and np.array_equal(rec0.estimate, eta.values)


def test_reconstruct_initial_state_injection():
    s, tg, w, m = injection_setup(256)
    fam = right_shift_family(s)
    pf = march_perturbed(fam, m, tg, arg=w)
    rec = reconstruct_initial_state(pf, m, fam, 1.0)
    assert rec.window == (1.0, 8.0)
    assert s.h * np.linalg.norm(np.where(rec.mask, rec.estimate - w.matrix, 0)) <= 1e-9


def test_reconstruct_errors():
    s = GridSpec(4.0, 32)
    tg = TimeGrid(1.0, 8)
    eta = smooth(s, np.random.default_rng(5))
    m = zero_measure(s, step=tg.dt)
    pf = march_perturbed(heat_family(s), m, tg, arg=eta)
    with pytest.raises(UnsupportedOperationError):
        reconstruct_initial_state(pf, m, heat_family(s), 0.5)
    pf = march_perturbed(right_shift_family(s), m, tg, arg=eta)
    with pytest.raises(AlignmentError):
        reconstruct_initial_state(pf, m, right_shift_family(s), 0.3)


def test_reference_mode_capacity(monkeypatch):
    s = GridSpec(4.0, 64)
    tg = TimeGrid(1.0, 16)
    m = zero_measure(s, "density", step=tg.dt)
    with pytest.raises(CapacityError):
        march_perturbed(right_shift_family(s), m, tg, mode="reference")
    monkeypatch.setenv("COVLAB_REFERENCE_CAP", "8")
    assert reference_cap() == 8
    with pytest.raises(CapacityError):
        march_perturbed(right_shift_family(GridSpec(4.0, 16)), zero_measure(GridSpec(4.0, 16), "density", step=0.25), TimeGrid(1.0, 4), mode="reference")
    monkeypatch.setenv("COVLAB_REFERENCE_CAP", "many")
    with pytest.raises(ConfigError):
        reference_cap()


def test_reference_duality_diffusion():
    s = GridSpec(4.0, 8)
    tg = TimeGrid(0.2, 20)
    _, L = diffusion_jump_operators(s)
    vf = stencil_heat_family(s)
    m = lindblad_jump_measure(vf, [L], step=tg.dt)
    sch = march_perturbed(vf, m, tg, mode="reference")
    heis = march_perturbed(vf, m.adjoint(), tg, mode="reference")
    assert duality_residuals(heis, sch).max() <= 1e-10
    assert identity_residuals(sch, m).max() <= 1e-12
    assert identity_residuals(heis, m.adjoint()).max() <= 1e-12


def test_bounded_measure_vector_march():
    s = GridSpec(16.0, 128)
    tg = TimeGrid(1.0, 8)
    fam = heat_family(s)
    M = GridOperator(s, 0.5 * np.diag(np.exp(-s.nodes)))
    m = bounded_density_measure(fam, M, step=tg.dt)
    eta = smooth(s, np.random.default_rng(6))
    pf = march_perturbed(fam, m, tg, arg=eta)
    assert identity_residuals(pf, m).max() <= 1e-12
    assert norms(s, "vector", reconstruct_base(pf, m) - pf.base_orbit).max() <= 1e-12


def test_diffusion_march_matches_gksl():
    errs = []
    for n, K in ((16, 100), (32, 200)):
        s = GridSpec(8.0, n)
        tg = TimeGrid(0.5, K)
        Kop, L = diffusion_jump_operators(s)
        vf = stencil_heat_family(s)
        psi = GridFunction.from_callable(s, lambda x: x * np.exp(-((x - 3) ** 2)))
        w = DensityOperator.rank_one(psi * (1 / psi.norm()))
        m = lindblad_jump_measure(vf, [L], step=tg.dt)
        pf = march_perturbed(no_event_family(vf), m, tg, arg=w)
        ref = gksl_evolve(Kop, [L], w, 0.5, K).states[-1]
        errs.append(np.linalg.norm(pf.orbit[-1, 0] - ref) / np.linalg.norm(ref))
        assert pf.min_eigenvalues.min() >= -1e-8
    assert errs[1] <= 1e-2 and errs[0] / errs[1] >= 2
