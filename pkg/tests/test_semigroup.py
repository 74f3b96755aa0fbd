import threading

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from covlab.errors import DomainError
from covlab.grid import GridFunction, GridSpec, indicator
from covlab.semigroup import (
    check_semigroup_law,
    custom_family,
    heat_family,
    left_shift_family,
    right_shift_family,
    semigroup_at,
)
from conftest import smooth


@pytest.mark.parametrize("make", [right_shift_family, left_shift_family, heat_family])
def test_identity_at_zero(make):
    s = GridSpec(4.0, 32)
    np.testing.assert_array_equal(semigroup_at(make(s), 0.0).entries, np.eye(32))


def test_right_shift_two_cells():
    s = GridSpec(4.0, 32)
    e0, _ = indicator(s, 0.0, s.h)
    e2, _ = indicator(s, 2 * s.h, 3 * s.h)
    np.testing.assert_array_equal(semigroup_at(right_shift_family(s), 2 * s.h)(e0).values, e2.values)


def test_heat_against_kernel_quadrature():
    s = GridSpec(8.0, 256)
    f = GridFunction.from_callable(s, lambda x: x * np.exp(-x * x))
    out = semigroup_at(heat_family(s), 1.0)(f).values.real

    def kernel_integral(x):
        p = lambda y: (np.exp(-(x - y) ** 2 / 4) - np.exp(-(x + y) ** 2 / 4)) / np.sqrt(4 * np.pi)  # noqa: E731
        return quad(lambda y: p(y) * y * np.exp(-y * y), 0, np.inf, epsabs=1e-14, epsrel=1e-12)[0]

    idx = np.arange(0, 256, 16)
    oracle = np.array([kernel_integral(x) for x in s.nodes[idx]])
    # same solution from the odd extension on the whole line
    closed = s.nodes[idx] * 5 ** -1.5 * np.exp(-s.nodes[idx] ** 2 / 5)
    np.testing.assert_allclose(oracle, closed, atol=1e-12)
    assert np.max(np.abs(out[idx] - oracle)) <= 1e-6 * np.max(np.abs(oracle))


def test_negative_time():
    with pytest.raises(DomainError):
        semigroup_at(heat_family(GridSpec(4.0, 8)), -0.1)


@given(st.integers(0, 30), st.integers(0, 30))
def test_shift_law_exact(a, b):
    s = GridSpec(4.0, 32)
    for fam in (right_shift_family(s), left_shift_family(s)):
        r = check_semigroup_law(fam, a * s.h, b * s.h, tol=0.0)
        assert r.operator_norm == 0 and r.frobenius == 0 and r.passed


def test_heat_law_within_window():
    # the sampled image kernel obeys the law to roundoff away from the cutoff
    for n in (128, 256, 512):
        r = check_semigroup_law(heat_family(GridSpec(20.0, n)), 0.5, 0.5, tol=1e-3)
        assert r.passed and r.frobenius < 1e-12
    assert check_semigroup_law(heat_family(GridSpec(20.0, 64)), 0.0, 0.5).frobenius == 0


def test_heat_law_cutoff_leakage_outside_window():
    s = GridSpec(6.0, 96)
    full = check_semigroup_law(heat_family(s), 1.0, 1.0, window=(0.0, 6.0))
    inner = check_semigroup_law(heat_family(s), 1.0, 1.0)
    assert full.frobenius > 1e-4 > inner.frobenius


@given(st.data())
def test_contraction(data):
    s = GridSpec(8.0, 64)
    rng = np.random.default_rng(data.draw(st.integers(0, 2**32 - 1)))
    f = smooth(s, rng)
    k = data.draw(st.integers(0, 64))
    for fam in (right_shift_family(s), left_shift_family(s), heat_family(s)):
        t = k * s.h if fam.is_shift else data.draw(st.floats(0.01, 3.0))
        assert semigroup_at(fam, t)(f).norm() <= f.norm() * (1 + 1e-12)


def test_strong_continuity_for_shifts():
    s = GridSpec(8.0, 256)
    f = GridFunction.from_callable(s, lambda x: np.exp(-((x - 3) ** 2)))
    fam = right_shift_family(s)
    d = [(semigroup_at(fam, k * s.h)(f) - f).norm() for k in (8, 4, 2, 1, 0)]
    assert all(a > b for a, b in zip(d, d[1:])) and d[-1] == 0


def test_cache_is_thread_safe():
    s = GridSpec(8.0, 64)
    fam = heat_family(s)
    out = []

    def work():
        out.append(fam.matrix(0.7))

    threads = [threading.Thread(target=work) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert all(m is out[0] for m in out)
    assert not out[0].flags.writeable


def test_custom_family_real_dtype():
    s = GridSpec(2.0, 4)
    fam = custom_family(s, lambda t: np.exp(-t) * np.eye(4))
    assert fam.matrix(1.0).dtype == float
    assert fam.kind == "custom"
