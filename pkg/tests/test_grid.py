import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from covlab.errors import AlignmentError, DomainError, SpecMismatchError
from covlab.grid import (
    GridFunction,
    GridOperator,
    GridSpec,
    heat_op,
    indicator,
    inner_product,
    shift_op,
)
from covlab.semigroup import leakage_margin
from conftest import smooth


def test_nodes_are_midpoints():
    s = GridSpec(4.0, 8)
    assert s.h == 0.5
    np.testing.assert_allclose(s.nodes, np.arange(8) * 0.5 + 0.25)
    assert s.nodes[0] > 0 and s.nodes[-1] < s.x_max


@pytest.mark.parametrize("x_max,n", [(0.0, 4), (-1.0, 4), (1.0, 1), (1.0, 2.5)])
def test_bad_spec(x_max, n):
    with pytest.raises(DomainError):
        GridSpec(x_max, n)


def test_inner_product_zero_and_indicator():
    s = GridSpec(5.0, 50)
    z = GridFunction.zeros(s)
    assert inner_product(z, z) == 0
    one, _ = indicator(s, 0.0, 5.0)
    assert inner_product(one, one) == pytest.approx(5.0)


def test_inner_product_exponentials():
    s = GridSpec(20.0, 2048)
    f = GridFunction.from_callable(s, lambda x: np.exp(-x))
    g = GridFunction.from_callable(s, lambda x: np.exp(-2 * x))
    oracle = quad(lambda x: np.exp(-3 * x), 0, np.inf)[0]
    assert abs(inner_product(f, g) - oracle) < 1e-3


def test_inner_product_second_order():
    oracle = quad(lambda x: np.exp(-x) * np.exp(-((x - 1) ** 2)), 0, 20)[0]
    errs = []
    for n in (64, 128, 256):
        s = GridSpec(20.0, n)
        f = GridFunction.from_callable(s, lambda x: np.exp(-x))
        g = GridFunction.from_callable(s, lambda x: np.exp(-((x - 1) ** 2)))
        errs.append(abs(inner_product(f, g) - oracle))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(np.abs(orders - 2) < 0.2)


def test_inner_product_spec_mismatch():
    with pytest.raises(SpecMismatchError):
        inner_product(GridFunction.zeros(GridSpec(1.0, 4)), GridFunction.zeros(GridSpec(1.0, 8)))


@given(st.data())
def test_inner_product_sesquilinear(data):
    s = GridSpec(6.0, 32)
    rng = np.random.default_rng(data.draw(st.integers(0, 2**32 - 1)))
    f, g = smooth(s, rng), smooth(s, rng)
    c = complex(data.draw(st.floats(-3, 3)), data.draw(st.floats(-3, 3)))
    assert inner_product(f, g) == pytest.approx(np.conj(inner_product(g, f)))
    assert inner_product(f * c, g) == pytest.approx(np.conj(c) * inner_product(f, g))
    assert inner_product(f, g * c) == pytest.approx(c * inner_product(f, g))


def test_shift_basics():
    s = GridSpec(4.0, 16)
    np.testing.assert_array_equal(shift_op(s, 0.0).entries, np.eye(16))
    e0, _ = indicator(s, 0.0, s.h)
    e1, _ = indicator(s, s.h, 2 * s.h)
    np.testing.assert_array_equal(shift_op(s, s.h)(e0).values, e1.values)
    with pytest.raises(AlignmentError):
        shift_op(s, 0.3 * s.h)
    with pytest.raises(DomainError):
        shift_op(s, -s.h)


def test_left_adjoint_overlap():
    s = GridSpec(16.0, 2048)
    f = GridFunction.from_callable(s, lambda x: np.exp(-x))
    Sl = shift_op(s, 1.0, "left-adjoint")
    assert abs(inner_product(Sl(f), Sl(f)) - np.exp(-2) / 2) < 1e-3


@given(st.integers(0, 20), st.integers(0, 20))
def test_shift_semigroup_law_exact(a, b):
    s = GridSpec(4.0, 16)
    t, u = a * s.h, b * s.h
    lhs = shift_op(s, t).entries @ shift_op(s, u).entries
    np.testing.assert_array_equal(lhs, shift_op(s, t + u).entries)
    np.testing.assert_array_equal(shift_op(s, t, "left-adjoint").entries, shift_op(s, t).entries.T)


def test_heat_op_properties():
    s = GridSpec(20.0, 256)
    for t in (0.01, 0.1, 1.0):
        H = heat_op(s, t)
        assert H.norm() <= 1.0
        np.testing.assert_allclose(H.entries, H.entries.T, atol=1e-15)
        v = np.abs(np.random.default_rng(0).normal(size=256))
        assert (H.entries.real @ v).min() >= -1e-12
    # image kernel cancels near the origin
    H = heat_op(s, 0.5)
    assert np.abs(H.entries[0]).max() < 0.1 * np.abs(H.entries[40]).max()
    with pytest.raises(DomainError):
        heat_op(s, 0.0)


def test_heat_op_composition():
    s = GridSpec(20.0, 256)
    r = (heat_op(s, 0.5) @ heat_op(s, 0.5) - heat_op(s, 1.0)).entries
    m = int((20.0 - leakage_margin(1.0)) / s.h)
    assert np.linalg.norm(r[:m, :m]) <= 1e-3
    # what is left lives against the cutoff and does not move with h or x_max
    assert np.linalg.norm(r) > 1e-3
    big = GridSpec(40.0, 512)
    rb = (heat_op(big, 0.5) @ heat_op(big, 0.5) - heat_op(big, 1.0)).entries
    assert np.linalg.norm(rb[:m, :m]) < 1e-10


def test_indicator():
    s = GridSpec(4.0, 16)
    f, P = indicator(s, 1.0, 1.0)
    assert not f.values.any()
    _, P = indicator(s, 0.0, 4.0)
    np.testing.assert_array_equal(P.entries, np.eye(16))
    f12, _ = indicator(s, 1.0, 2.0)
    f23, _ = indicator(s, 2.0, 3.0)
    np.testing.assert_array_equal(shift_op(s, 1.0)(f12).values, f23.values)
    with pytest.raises(DomainError):
        indicator(s, 2.0, 1.0)
    with pytest.raises(AlignmentError):
        indicator(s, 0.1, 1.0)


def test_values_are_immutable():
    s = GridSpec(1.0, 4)
    f = GridFunction(s, np.ones(4))
    with pytest.raises(ValueError):
        f.values[0] = 2
    with pytest.raises(DomainError):
        GridFunction(s, [np.nan, 0, 0, 0])
    with pytest.raises(SpecMismatchError):
        GridOperator(s, np.eye(3))
