import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from isoflow import phase as ph
from isoflow import spectral as sp
from isoflow.verify import random_flow_state


def test_scalar_case():
    p = sp.spectral_poly([[1]], [[0]], [[2.5]])
    assert np.allclose(p.coeffs, [[-2.5], [1]])


def test_hand_determinant():
    # (lam + z)(lam + 2z) = lam^2 + 3 lam z + 2 z^2
    p = sp.spectral_poly(np.eye(2), np.diag([1, 2]), np.zeros((2, 2)))
    ref = np.zeros((3, 3))
    ref[2, 0], ref[1, 1], ref[0, 2] = 1, 3, 2
    assert np.allclose(p.padded((3, 3)), ref)


def test_shape_mismatch():
    with pytest.raises(sp.SpectralError):
        sp.spectral_poly(np.eye(2), np.eye(3), np.eye(2))


def test_transform_examples():
    p = sp.spectral_poly([[1]], [[0]], [[3]])
    same = sp.gl2_transform_poly(ph.Mobius(1, 0, 0, 1), p)
    assert np.allclose(same.coeffs, p.coeffs)
    fl = sp.gl2_transform_poly(ph.Mobius.fourier_laplace(), p)
    # lam - 3 becomes -z - 3
    assert np.allclose(fl.padded((1, 2)), [[-3, -1]])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 4))
def test_transform_of_linear_powers(seed, m):
    rng = np.random.default_rng(seed)
    g = ph.Mobius.random(rng)
    c = np.zeros((m + 1, m + 1), complex)
    c[m, 0] = 1  # lam^m
    out = sp.gl2_transform_poly(g, sp.BivarPoly(c))
    assert np.allclose(out.padded((m + 1, m + 1)), sp.binomial_expand_check(g.a, g.b, m))


def test_polynomial_matches_determinant():
    rng = np.random.default_rng(2)
    s = random_flow_state(rng)
    p = sp.state_spectral_poly(s)
    a, b, g = ph.weyl_matrix(s)
    for lam, z in [(0.4, -1.2), (1j, 0.3 + 0.5j)]:
        assert abs(p(lam, z) - np.linalg.det(a * lam + b * z - g)) < 1e-9 * max(1, abs(p(lam, z)))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_invariance_under_sl2(seed):
    rng = np.random.default_rng(seed)
    s = random_flow_state(rng, max_dim=2)
    g = ph.Mobius.random(rng)
    p = sp.state_spectral_poly(s)
    q = sp.state_spectral_poly(ph.sl2_act(g, s))
    _, err = sp.match_up_to_constant(sp.gl2_transform_poly(g, p), q)
    assert err < 1e-8


def test_coefficients_commute():
    rng = np.random.default_rng(4)
    s = random_flow_state(rng, nparts=2, max_dim=1, scale=0.7)
    br, scale = sp.spectral_brackets(s)
    assert np.max(np.abs(br)) / scale < 1e-6
