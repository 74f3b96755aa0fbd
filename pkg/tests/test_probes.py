import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from covlab.grid import GridSpec
from covlab.probes import combine, exponential, gaussian, random_probe


def quad_inner(p, q, a, b):
    re = quad(lambda x: np.real(np.conj(p(x)) * q(x)), a, b, epsabs=1e-14, epsrel=1e-12, limit=200)[0]
    im = quad(lambda x: np.imag(np.conj(p(x)) * q(x)), a, b, epsabs=1e-14, epsrel=1e-12, limit=200)[0]
    return re + 1j * im


@given(st.integers(0, 2**32 - 1), st.sampled_from([(0.0, np.inf), (0.5, 2.0), (3.0, 40.0)]))
def test_inner_matches_quadrature(seed, interval):
    rng = np.random.default_rng(seed)
    p, q = random_probe(rng), random_probe(rng)
    assert p.inner(q, *interval) == pytest.approx(quad_inner(p, q, *interval), abs=1e-10)


def test_far_tail_is_stable():
    g = gaussian(1.0, 2.0, 0.5)
    v = g.inner(g, 30.0, np.inf)
    assert np.isfinite(v.real) and 0 <= v.real < 1e-300


def test_closed_forms():
    e = exponential(np.sqrt(2), 1.0)
    assert e.inner(e) == pytest.approx(1.0, rel=1e-14)
    assert e.inner(e, 0.0, 1.0) == pytest.approx(1 - np.exp(-2), rel=1e-14)
    g = gaussian(1.0, 0.0, 1.0)
    assert g.inner(g, -np.inf, np.inf) == pytest.approx(np.sqrt(np.pi), rel=1e-14)


@given(st.integers(0, 2**32 - 1), st.floats(0.0, 3.0))
def test_shifted(seed, s):
    p = random_probe(np.random.default_rng(seed))
    x = np.linspace(0, 5, 11)
    np.testing.assert_allclose(p.shifted(s)(x), p(x + s), rtol=1e-12, atol=1e-300)


def test_combine_and_sample():
    p = combine(exponential(1.0, 2.0), gaussian(0.5j, 1.0, 0.3))
    s = GridSpec(4.0, 16)
    np.testing.assert_allclose(p.sample(s).values, np.exp(-2 * s.nodes) + 0.5j * np.exp(-((s.nodes - 1) ** 2) / 0.18))


def test_random_probe_is_seeded():
    a = random_probe(np.random.default_rng(7))
    b = random_probe(np.random.default_rng(7))
    np.testing.assert_array_equal(a.coeffs, b.coeffs)
    np.testing.assert_array_equal(a.beta, b.beta)
