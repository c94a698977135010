import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from magfp.evolution import IntegratorConfig, Scheme, TrajectoryRecord, evolve
from magfp.field import GridConfig, MagneticField, Weight, random_state
from magfp.hypoco import (EntropyConstants, choose_constants, entropy_f_eps, entropy_h1, fit_decay, h1_norm_sq,
                          lemma_identities, lp_m_dissipativity_probe, macro_residual, measure_cop,
                          modified_poincare_probe, poincare_check, poincare_gap, rayleigh_weighted,
                          stepwise_entropy_dissipation)
from magfp.operators import assemble_generator, assemble_splitting, search_splitting

from conftest import varying_field


def test_constants_for_zero_field(small_grid):
    c = choose_constants(MagneticField.zero(small_grid), small_grid)
    assert (c.E, c.D, c.C) == (2.0, 2.25, 21.625)
    assert c.kappa_h1 == pytest.approx(2 / (16 * 21.625))
    assert c.c_P == 1.0
    assert c.eps == min(0.5, 1 / (2 * c.C_op))
    assert c.kappa_l2 == pytest.approx(c.eps / 8)
    assert not c.strict_sandwich


def test_unit_field_raises_A_by_five_and_a_half(small_grid):
    c0 = choose_constants(MagneticField.zero(small_grid), small_grid)
    c1 = choose_constants(MagneticField.constant(small_grid, 1.0), small_grid)
    assert c1.C - c0.C == pytest.approx(2 * 2.25 + 2 / 2)


def test_constants_validation():
    with pytest.raises(ValueError):
        EntropyConstants(0.7, 20, 2.25, 2, 1, 1, 1, 0.1, 0.1, 1)
    with pytest.raises(ValueError):
        EntropyConstants(0.3, 20, 1.5, 2, 1, 1, 1, 0.1, 0.1, 1)
    with pytest.raises(ValueError):
        EntropyConstants(0.3, 20, 2.25, 1.5, 1, 1, 1, 0.1, 0.1, 1)


def test_cop_grows_with_field(small_grid):
    a = measure_cop(small_grid, MagneticField.zero(small_grid))
    b = measure_cop(small_grid, MagneticField.constant(small_grid, 2.0))
    assert 0 < a < b


def test_poincare(small_grid, rng):
    assert poincare_gap(small_grid) == 1.0
    cP = poincare_gap(GridConfig(2, 2, 5, 4))
    assert cP == 1.0
    assert poincare_check(small_grid, rng) >= 0.5 - 1e-15


def test_modified_poincare_is_positive(small_grid, rng):
    worst, ritz = modified_poincare_probe(small_grid, 30, rng)
    assert worst >= ritz > 0


@given(st.integers(0, 10**6))
@settings(max_examples=20, deadline=None)
def test_entropy_equivalences(seed):
    g = GridConfig(1, 2, 7, 6)
    rng = np.random.default_rng(seed)
    f = random_state(g, rng, mean_zero=True)
    c = choose_constants(MagneticField.constant(g, 0.5), g)
    n2 = f.l2() ** 2
    Fe = entropy_f_eps(f, c.eps)
    assert (1 - c.eps) * n2 <= Fe <= (1 + c.eps) * n2
    lo, hi = c.sandwich
    E, H = entropy_h1(f, c), h1_norm_sq(f)
    assert lo * H <= E * (1 + 1e-12) and E <= hi * H * (1 + 1e-12)


@pytest.mark.parametrize("field", ["constant", "varying"])
def test_stepwise_dissipation(small_grid, rng, field):
    g = small_grid
    B = MagneticField.constant(g, 2.0) if field == "constant" else varying_field(g, 0.8)
    c = choose_constants(B, g)
    f0 = random_state(g, rng, mean_zero=True, decay=0.1)
    tr = evolve(assemble_generator(g, B), f0, IntegratorConfig(Scheme.EXACT_SMALL, 0.05, 3.0),
                {"F": lambda s: entropy_f_eps(s, c.eps), "E": lambda s: entropy_h1(s, c)})
    ok, worst = stepwise_entropy_dissipation(tr, "F", c.kappa_l2, 1e-6)
    assert ok and worst < 1
    ok, worst = stepwise_entropy_dissipation(tr, "E", c.kappa_h1, 1e-6)
    assert ok and worst < 1


def test_stepwise_check_detects_growth():
    t = np.linspace(0, 1, 11)
    tr = TrajectoryRecord(t, np.zeros_like(t), {"q": np.exp(0.1 * t)})
    ok, worst = stepwise_entropy_dissipation(tr, "q", 0.0)
    assert not ok and worst > 1


@given(st.floats(0.01, 3.0), st.floats(0.1, 10.0))
@settings(max_examples=30, deadline=None)
def test_fit_recovers_exponential_rate(rate, amp):
    t = np.linspace(0, 5, 51)
    tr = TrajectoryRecord(t, np.zeros_like(t), {"q": amp * np.exp(-rate * t)})
    fit = fit_decay(tr, "q")
    assert fit.rate == pytest.approx(rate, rel=1e-9)
    assert fit.r2 == pytest.approx(1.0) and fit.meaningful
    assert fit.monotone_after == 0.0


def test_fit_rejects_nonpositive_samples():
    t = np.linspace(0, 1, 5)
    tr = TrajectoryRecord(t, np.zeros_like(t), {"q": np.array([1.0, 0.5, 0.0, 0.1, 0.05])})
    with pytest.raises(ValueError):
        fit_decay(tr, "q")
    assert fit_decay(tr, "q", (0.0, 0.25)).rate > 0


def test_macro_identities(small_grid, rng):
    g = small_grid
    B = varying_field(g)
    P = assemble_generator(g, B)
    f0 = random_state(g, rng, decay=0.2)
    tr = evolve(P, f0, IntegratorConfig(Scheme.EXACT_SMALL, 0.05, 0.5))
    _, rr, rm = macro_residual(tr, B, generator=P)
    assert rr.max() <= 1e-12 and rm.max() <= 1e-12
    # central differences: second order in the sampling step
    errs = []
    for dt in (0.02, 0.01):
        tr = evolve(P, f0, IntegratorConfig(Scheme.EXACT_SMALL, dt, 0.2))
        _, rr, rm = macro_residual(tr, B)
        errs.append(max(rr.max(), rm.max()))
    assert 3.0 < errs[0] / errs[1] < 5.0


def test_field_gradient_identities(grid3, rng):
    f = random_state(grid3, rng, decay=0.3)
    B = varying_field(grid3)
    res = lemma_identities(f, B)
    for lhs, rhs in res.values():
        assert lhs == pytest.approx(rhs, rel=1e-10)
        assert abs(lhs) > 1e-6
    with pytest.raises(ValueError):
        lemma_identities(random_state(GridConfig(1, 2, 5, 4), rng), MagneticField.zero(GridConfig(1, 2, 5, 4)))


def test_dissipativity_of_split_operator(small_grid, rng):
    g = small_grid
    w = Weight.polynomial(4)
    res = search_splitting(w, 2.0, -1.0, g)
    assert rayleigh_weighted(g, w, res.M, res.R) <= -1.0 + 1e-8
    bun = assemble_splitting(g, MagneticField.constant(g, 1.0), w, 2.0, res.M, res.R)
    pr = lp_m_dissipativity_probe(bun, w, 2.0, -1.0, 5, rng)
    assert pr.passed
    res1 = search_splitting(w, 1.0, -1.0, g)
    bun1 = assemble_splitting(g, MagneticField.constant(g, 1.0), w, 1.0, res1.M, res1.R)
    assert lp_m_dissipativity_probe(bun1, w, 1.0, -1.0, 5, rng).passed
    with pytest.raises(ValueError):
        lp_m_dissipativity_probe(bun, w, 2.0, -3.5, 2, rng)


def test_rayleigh_without_splitting_is_not_dissipative(small_grid):
    # with M = 0 only the large-velocity limit remains; a near-zero target fails
    assert rayleigh_weighted(small_grid, Weight.polynomial(4), 0.0, 2.0) > -1.0
