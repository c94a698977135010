import math

import numpy as np
import pytest
import scipy.sparse as sp
import sympy
from hypothesis import given, settings, strategies as st

from magfp.field import FieldState, Frame, FrameError, GridConfig, MagneticField, Weight, maxwellian, \
    project_function, random_state
from magfp.operators import (LinearOperatorRep, Symmetry, a_ledger, a_mp_limit, assemble_collision,
                             assemble_generator, assemble_magnetic, assemble_splitting, assemble_transport,
                             commutator_checks, cutoff, nonpositivity_check, psi_lyapunov, psi_values,
                             search_splitting)

from conftest import varying_field


def _b(x):
    return 0.2 + 0.5 * np.cos(x[..., 0]) + 0.15 * np.sin(x[..., 0])


def test_transport_acts_as_v_dot_grad_x(small_grid):
    g = small_grid
    f = project_function(g, lambda x, v: np.cos(x[..., 0]) * v[..., 1])
    ref = project_function(g, lambda x, v: -np.sin(x[..., 0]) * v[..., 0] * v[..., 1])
    np.testing.assert_allclose(assemble_transport(g).apply(f).coeffs, ref.coeffs, atol=1e-13)


def test_magnetic_operator_2d_sign(small_grid):
    # (v ^ b) = b (v2, -v1), so (v ^ b).grad_v v1 = b v2
    g = small_grid
    B = MagneticField.from_modes(g, [(0, (1,), 0.5, 0.15)], [0.2])
    f = project_function(g, lambda x, v: v[..., 0] + 0 * x[..., 0])
    ref = project_function(g, lambda x, v: _b(x) * v[..., 1])
    np.testing.assert_allclose(assemble_magnetic(g, B).apply(f).coeffs, ref.coeffs, atol=1e-13)


def test_magnetic_operator_3d_components():
    g = GridConfig(1, 3, 5, 4)
    B = MagneticField.constant(g, [0.3, -0.7, 1.1])
    # (v ^ B)_1 = v2 B3 - v3 B2 acting on f = v1
    f = project_function(g, lambda x, v: v[..., 0] + 0 * x[..., 0])
    ref = project_function(g, lambda x, v: v[..., 1] * 1.1 - v[..., 2] * (-0.7) + 0 * x[..., 0])
    np.testing.assert_allclose(assemble_magnetic(g, B).apply(f).coeffs, ref.coeffs, atol=1e-13)


@pytest.mark.parametrize("which", ["small", "3d"])
def test_skew_adjointness(which, small_grid, grid3):
    g = small_grid if which == "small" else grid3
    B = varying_field(g)
    assert assemble_transport(g).skew_defect() <= 1e-14
    assert assemble_magnetic(g, B).skew_defect() <= 1e-14
    assert assemble_collision(g).self_defect() == 0


@pytest.mark.parametrize("which", ["small", "3d"])
def test_commutator_identities(which, small_grid, grid3, rng):
    g = small_grid if which == "small" else grid3
    B = varying_field(g)
    states = [random_state(g, rng, margin=2, x_margin=1) for _ in range(5)]
    defects = commutator_checks(g, B, states)
    assert set(defects) == {1, 2, 3, 4}
    assert max(defects.values()) <= 1e-12


def test_commutators_detect_truncation(small_grid, rng):
    # without the degree margin the truncated ladder breaks identity (2)
    states = [random_state(small_grid, rng)]
    assert commutator_checks(small_grid, MagneticField.zero(small_grid), states)[2] > 1e-3


@given(st.integers(0, 10**6))
@settings(max_examples=20, deadline=None)
def test_accretivity(seed):
    g = GridConfig(1, 2, 5, 6)
    f = random_state(g, np.random.default_rng(seed))
    B = MagneticField.from_modes(g, [(0, (1,), 0.4, 0.1)], [1.0])
    P1 = -assemble_generator(g, B).matrix
    lhs = np.vdot(f.vector, P1 @ f.vector).real
    rhs = float((np.tile(g.degrees, g.n_fourier) * np.abs(f.vector) ** 2).sum())
    assert lhs == pytest.approx(rhs, rel=1e-13)


def test_generator_conserves_mass_and_fixes_equilibrium(small_grid, rng):
    g = small_grid
    B = varying_field(g)
    P = assemble_generator(g, B)
    for _ in range(5):
        assert abs(P.apply(random_state(g, rng)).mean()) <= 1e-14
    P0 = assemble_generator(g, B, Frame.ORIGINAL)
    assert P0.label == "-P0"
    assert np.abs(P0.apply(maxwellian(g)).vector).max() == 0


def test_frame_mismatch_is_rejected(small_grid):
    P = assemble_generator(small_grid, MagneticField.zero(small_grid))
    with pytest.raises(FrameError):
        P.apply(maxwellian(small_grid, Frame.ORIGINAL))


def test_symmetry_claim_is_verified(small_grid):
    n = small_grid.size
    m = sp.random(n, n, density=0.01, random_state=1, format="csr")
    with pytest.raises(ValueError):
        LinearOperatorRep(small_grid, Frame.PERTURBATION, m, Symmetry.SKEW_ADJOINT, "bogus")


def test_field_band_is_enforced(small_grid):
    big = GridConfig(1, 2, 11, 8)
    B = MagneticField.from_modes(big, [(0, (5,), 1.0, 0.0)])
    with pytest.raises(ValueError):
        assemble_magnetic(small_grid, B)


def test_cutoff_shape():
    s = np.linspace(0, 3, 301)
    c = cutoff(s)
    assert np.all(c[s <= 1] == 1) and np.all(c[s >= 2] == 0)
    assert np.all(np.diff(c) <= 0)
    h = 1e-4
    for s0 in (1.0, 2.0):
        # C^2 joins: first and second derivatives vanish at the ends
        d1 = (cutoff(s0 + h) - cutoff(s0 - h)) / (2 * h)
        d2 = (cutoff(s0 + h) - 2 * cutoff(s0) + cutoff(s0 - h)) / h**2
        assert abs(d1) < 1e-6 and abs(d2) < 1e-3


def test_splitting_bundle(small_grid):
    g = small_grid
    B = varying_field(g)
    bun = assemble_splitting(g, B, M=4.0, R=2.0)
    assert bun.split_defect() == 0
    assert bun.a_norm() <= bun.M * (1 + 1e-12)
    assert bun.A.fourier_diagonal
    assert bun.A.self_defect() <= 1e-14


def _psi_sympy(k, theta, p, d, point):
    v = sympy.symbols(f"v0:{d}", real=True)
    r2 = sum(x**2 for x in v)
    m = (1 + r2) ** (sympy.nsimplify(k) / 2) * sympy.exp(sympy.nsimplify(theta) * r2 / 2)
    grad = [sympy.diff(m, x) for x in v]
    lap = sum(sympy.diff(m, x, 2) for x in v)
    psi = (p - 1) * sum(gx**2 for gx in grad) / m**2 + lap / m + (1 - sympy.Rational(1) / p) * d \
        - sum(x * gx for x, gx in zip(v, grad)) / m
    return float(psi.subs(dict(zip(v, point))))


@pytest.mark.parametrize("k,theta,p", [(4.0, 0.0, 2.0), (3.0, 0.0, 1.5), (0.0, 0.5, 2.0), (2.0, 0.25, 1.0)])
def test_psi_against_symbolic_formula(k, theta, p):
    # Psi with the drift K = v: (p-1)|grad m|^2/m^2 + Delta m/m + (1-1/p) d - v.grad m/m
    w = Weight(k, theta)
    pts = np.array([[0.3, -0.4], [1.7, 2.2], [-3.0, 0.5]])
    vals = psi_values(w, p, pts)
    for pt, val in zip(pts, vals):
        assert val == pytest.approx(_psi_sympy(k, theta, p, 2, pt), rel=1e-10, abs=1e-12)


def test_psi_limits():
    far = np.array([[3e3, 4e3]])
    for k, p in ((4.0, 2.0), (8.0, 1.0), (2.5, 1.5)):
        w = Weight.polynomial(k)
        lim = a_mp_limit(w, p, 2)
        assert lim == 2 * (1 - 1 / p) - k
        assert psi_values(w, p, far)[0] == pytest.approx(lim, abs=1e-5)
    # p theta = 1: finite positive limit theta d + (1-1/p) d + k
    assert a_mp_limit(Weight.exponential(0.5), 2.0, 2) == 2.0
    assert psi_values(Weight.exponential(0.5), 2.0, far)[0] == pytest.approx(2.0, abs=1e-6)
    assert a_mp_limit(Weight.exponential(0.25), 2.0, 2) == -math.inf
    assert a_mp_limit(Weight.exponential(0.75), 2.0, 2) == math.inf


def test_printed_sign_gives_positive_limit(small_grid):
    rep = psi_lyapunov(Weight.polynomial(4), 2.0, small_grid, printed_sign=True)
    assert rep.a_mp_limit == 2 * 0.5 + 4 and not rep.admissible
    rep = psi_lyapunov(Weight.polynomial(4), 2.0, small_grid)
    assert rep.admissible and "corrected" in rep.sign_convention


def test_psi_is_field_independent(small_grid):
    w = Weight.polynomial(4)
    a = psi_lyapunov(w, 1.5, small_grid, B=varying_field(small_grid)).psi_sup_outside
    b = psi_lyapunov(w, 1.5, small_grid).psi_sup_outside
    assert a == b


def test_a_ledger_values(small_grid):
    B = MagneticField.constant(small_grid, 1.0)
    led = a_ledger(Weight.polynomial(8), B, 2.0)
    assert led.a_m1 == (-9.0, -3.5, -7.5)
    assert led.a_m2 == pytest.approx((-7.5, -2.0, -5.5))
    assert led.hyp5 and led.hyp6 and led.hyp2 and led.violated() == []
    bad = a_ledger(Weight.polynomial(4), MagneticField.constant(small_grid, 2.0))
    assert not bad.hyp5 and any("7/2" in s for s in bad.violated())
    with pytest.raises(ValueError):
        a_ledger(Weight.exponential(0.5), B)


def test_search_splitting_monotone_certificate(small_grid):
    res = search_splitting(Weight.polynomial(4), 2.0, -1.0, small_grid)
    assert res.success and res.sup <= -1.0
    sups = [h[2] for h in res.history]
    assert all(b <= a + 1e-12 for a, b in zip(sups, sups[1:]))
    fail = search_splitting(Weight.polynomial(4), 2.0, -3.5, small_grid)
    assert not fail.success and "a_mp" in fail.reason


@pytest.mark.parametrize("p", [1.0, 1.5, 2.0])
def test_nonpositivity(small_grid, rng, p):
    for _ in range(5):
        g = random_state(small_grid, rng, decay=0.3, margin=2)
        assert nonpositivity_check(g, p) <= 1e-8
    with pytest.raises(ValueError):
        nonpositivity_check(g, 0.5)


def test_nonpositivity_p2_equals_minus_gradient_norm(small_grid, rng):
    # for p = 2, int Delta g g = -int |grad g|^2 in plain L^2(dv)
    g = random_state(small_grid, rng, decay=0.3, margin=2)
    val = nonpositivity_check(g, 2.0)
    from magfp import hermite
    from magfp.field import to_physical
    grid = small_grid
    nodes, logw = hermite.gauss_hermite(2, grid.quad_order + 24, 2.0)
    w = np.exp(logw) / (2 * np.pi) ** 2
    phys = to_physical(g.coeffs, 1, 4 * grid.n_x).reshape(-1, grid.n_alpha)
    V = hermite.basis_values(grid.alphas, nodes)
    G = hermite.basis_gradient(grid.alphas, nodes)
    P = (phys @ V.T).real
    tot = 0.0
    for j in range(2):
        dj = (phys @ G[j].T).real - nodes[:, j] * P
        tot += (dj**2 * w).sum() / P.shape[0]
    assert val == pytest.approx(-tot, rel=1e-10)
