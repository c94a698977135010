import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.polynomial import hermite_e as He

from magfp import hermite


def test_multi_index_count_and_order():
    for d in (1, 2, 3):
        for n in (0, 3, 6):
            al = hermite.multi_indices(d, n)
            assert len(al) == math.comb(n + d, d)
            deg = al.sum(axis=1)
            assert np.all(np.diff(deg) >= 0)
    al = hermite.multi_indices(2, 2)
    assert [tuple(a) for a in al] == [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]
    with pytest.raises(ValueError):
        al[0, 0] = 5


def test_hermite_1d_matches_numpy():
    x = np.linspace(-4, 4, 33)
    vals = hermite.hermite_1d(7, x)
    for k in range(8):
        ref = He.hermeval(x, [0] * k + [1]) / math.sqrt(math.factorial(k))
        np.testing.assert_allclose(vals[k], ref, atol=1e-10, rtol=1e-12)


def test_basis_orthonormal_in_gaussian_measure():
    d, n = 2, 6
    al = hermite.multi_indices(d, n)
    nodes, logw = hermite.gauss_hermite(d, n + 4, 1.0)
    w = np.exp(logw) / (2 * np.pi) ** (d / 2)
    V = hermite.basis_values(al, nodes)
    np.testing.assert_allclose((V * w[:, None]).T @ V, np.eye(len(al)), atol=1e-12)


@pytest.mark.parametrize("scale", [0.5, 1.0, 2.0])
def test_gauss_hermite_even_moments(scale):
    # int v^{2j} exp(-s v^2 / 2) dv = sqrt(2 pi / s) (2j - 1)!! / s^j
    nodes, logw = hermite.gauss_hermite(1, 12, scale)
    w = np.exp(logw)
    for j in range(6):
        ref = math.sqrt(2 * math.pi / scale) * math.prod(range(1, 2 * j, 2)) / scale**j
        assert np.isclose((w * nodes[:, 0] ** (2 * j)).sum(), ref, rtol=1e-12)


def _coeff_fn(al, c):
    return lambda v: hermite.basis_values(al, v) @ c


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=25, deadline=None)
def test_ladder_operators_match_pointwise_action(seed):
    d, n = 2, 7
    rng = np.random.default_rng(seed)
    al = hermite.multi_indices(d, n)
    c = rng.standard_normal(len(al))
    c[al.sum(axis=1) > n - 1] = 0.0
    v = rng.standard_normal((9, d))
    P = hermite.basis_values(al, v) @ c
    grad = hermite.basis_gradient(al, v) @ c
    for j in range(d):
        np.testing.assert_allclose(hermite.basis_values(al, v) @ (hermite.mult_matrix(d, n, j) @ c),
                                   v[:, j] * P, atol=1e-10)
        np.testing.assert_allclose(hermite.basis_values(al, v) @ (hermite.deriv_matrix(d, n, j) @ c),
                                   grad[j], atol=1e-10)
        np.testing.assert_allclose(hermite.basis_values(al, v) @ (hermite.creation_matrix(d, n, j) @ c),
                                   -grad[j] + v[:, j] * P, atol=1e-10)


def test_rotation_is_exact_and_skew():
    d, n = 3, 5
    al = hermite.multi_indices(d, n)
    rng = np.random.default_rng(3)
    c = rng.standard_normal(len(al))
    v = rng.standard_normal((7, d))
    g = hermite.basis_gradient(al, v) @ c
    # R_1 = v3 d2 - v2 d3, R_2 = v1 d3 - v3 d1, R_3 = v2 d1 - v1 d2
    refs = [v[:, 2] * g[1] - v[:, 1] * g[2], v[:, 0] * g[2] - v[:, 2] * g[0], v[:, 1] * g[0] - v[:, 0] * g[1]]
    for k in range(3):
        R = hermite.rotation_matrix(d, n, k)
        np.testing.assert_allclose(hermite.basis_values(al, v) @ (R @ c), refs[k], atol=1e-10)
        assert abs(R + R.T).max() == 0
        # degree preserving
        deg = al.sum(axis=1)
        rows, cols = R.nonzero()
        assert np.all(deg[rows] == deg[cols])


def test_number_operator_diagonal():
    N = hermite.number_matrix(2, 4)
    al = hermite.multi_indices(2, 4)
    np.testing.assert_array_equal(N.diagonal(), al.sum(axis=1))


def test_laplacian_values():
    al = hermite.multi_indices(2, 4)
    v = np.array([[0.3, -1.1], [2.0, 0.5]])
    h = 1e-4
    V = hermite.basis_values
    lap = sum((V(al, v + h * e) - 2 * V(al, v) + V(al, v - h * e)) / h**2 for e in np.eye(2))
    np.testing.assert_allclose(hermite.basis_hessian_trace(al, v), lap, atol=1e-5)
