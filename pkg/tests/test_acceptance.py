"""Acceptance criteria on the desk grid (d_x=1, d_v=2, n_x=17, n_v=24).

Each test records one ``PASS``/``FAIL`` line, printed in the terminal summary.
"""

import math
from pathlib import Path

import numpy as np
import pytest

from magfp import hermite
from magfp.config import load_config
from magfp.evolution import (IntegratorConfig, Scheme, convergence_order, convolution_power, convolve,
                             duhamel_residual, evolve, semigroup, smoothing_probe, spectral_projection_pi0,
                             t_n_direct, t_n_inductive)
from magfp.experiments import deviation, rough_state, run_decay
from magfp.field import Frame, GridConfig, MagneticField, Weight, convert_frame, maxwellian, random_state, \
    shifted_maxwellian
from magfp.hypoco import (choose_constants, entropy_f_eps, entropy_h1, lp_m_dissipativity_probe, rayleigh_weighted,
                          stepwise_entropy_dissipation)
from magfp.operators import (a_ledger, assemble_collision, assemble_generator, assemble_magnetic, assemble_splitting,
                             assemble_transport, commutator_checks, nonpositivity_check, search_splitting)

from conftest import ACCEPTANCE_LINES

CONFIGS = Path(__file__).resolve().parents[1] / "demos" / "configs"
DESK = GridConfig(d_x=1, d_v=2, n_x=17, n_v=24)


def record(number: int, name: str, passed: bool, detail: str) -> None:
    line = f"[{'PASS' if passed else 'FAIL'}] {number:2d}. {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert passed, line


def desk_field(amp: float = 1.0) -> MagneticField:
    """B(x) = amp (0.2 + 0.5 cos x + 0.3 sin x), sup ~ 0.78 amp."""
    return MagneticField.from_modes(DESK, [(0, (1,), 0.5 * amp, 0.3 * amp)], [0.2 * amp])


@pytest.fixture(scope="module")
def split_bundle_search():
    w = Weight.polynomial(4)
    res = search_splitting(w, 2.0, -1.0, DESK)
    assert res.success
    return w, res


def test_criterion_01_algebraic():
    g, B = DESK, desk_field()
    rng = np.random.default_rng(101)
    T, G, C = assemble_transport(g), assemble_magnetic(g, B), assemble_collision(g)
    skew = max(T.skew_defect(), G.skew_defect())
    states = [random_state(g, rng, margin=2, decay=0.1) for _ in range(100)]
    comm = max(commutator_checks(g, B, states).values())
    deg = np.tile(g.degrees, g.n_fourier)
    acc = 0.0
    for s in states:
        c = s.vector
        lhs = np.vdot(c, C.matrix @ c).real
        rhs = float((deg * np.abs(c) ** 2).sum())
        acc = max(acc, abs(lhs - rhs) / rhs)
    ok = skew <= 1e-12 and comm <= 1e-12 and acc <= 1e-14
    record(1, "algebraic suite (100 states)", ok,
           f"skew {skew:.2e}, commutators {comm:.2e} (tol 1e-12), accretivity {acc:.2e} (tol 1e-14)")


def test_criterion_02_conservation():
    g, B = DESK, desk_field()
    P = assemble_generator(g, B)
    f0 = random_state(g, np.random.default_rng(102), decay=0.2)
    tr = evolve(P, f0, IntegratorConfig(Scheme.STRANG_IMEX, 0.02, 10.0, 50, keep_states=False))
    drift = tr.mass_drift()
    mu = maxwellian(g, Frame.ORIGINAL)
    stat = float(np.abs(P.with_frame(Frame.ORIGINAL).matrix @ mu.vector).max())
    F = convert_frame(f0, Frame.ORIGINAL)
    p1 = spectral_projection_pi0(F)
    idem = float(np.abs(spectral_projection_pi0(p1).vector - p1.vector).max())
    ok = drift <= 1e-10 and stat <= 1e-12 and idem <= 1e-14
    record(2, "conservation and equilibrium", ok,
           f"mass drift {drift:.2e} over [0,10], |P mu| {stat:.2e}, Pi0 idempotence {idem:.2e}")


@pytest.fixture(scope="module")
def entropy_runs():
    """Five mean-zero solutions for a constant and a space-varying field, both with sup |B| <= 2."""
    out = []
    for label, B in (("constant", MagneticField.constant(DESK, 2.0)), ("varying", desk_field(2.0))):
        assert B.sup_norm <= 2.0
        c = choose_constants(B, DESK)
        P = assemble_generator(DESK, B)
        rng = np.random.default_rng(103)
        scheme = Scheme.EXACT_SMALL if P.fourier_diagonal else Scheme.STRANG_IMEX
        dt = 0.05 if scheme is Scheme.EXACT_SMALL else 0.01
        for _ in range(5):
            f0 = deviation(random_state(DESK, rng, decay=0.2))
            tr = evolve(P, f0, IntegratorConfig(scheme, dt, 5.0, keep_states=False),
                        {"F": lambda s: entropy_f_eps(s, c.eps), "E": lambda s: entropy_h1(s, c)})
            out.append((label, c, tr))
    return out


def test_criterion_03_l2_entropy(entropy_runs):
    worst, details = 0.0, {}
    ok = True
    for label, c, tr in entropy_runs:
        passed, w = stepwise_entropy_dissipation(tr, "F", c.kappa_l2, 1e-6)
        ok &= passed
        worst = max(worst, w)
        details[label] = (c.C_op, c.eps, c.kappa_l2)
    desc = ", ".join(f"{k}: C_op {v[0]:.3f} eps {v[1]:.3f} kappa {v[2]:.4f}" for k, v in details.items())
    record(3, "stepwise F_eps dissipation", ok, f"worst step ratio {worst:.6f} (<= 1+1e-6); {desc}")


def test_criterion_04_h1_entropy(entropy_runs):
    zero = choose_constants(MagneticField.zero(DESK), DESK)
    consts_ok = (zero.E, zero.D, zero.C) == (2.0, 2.25, 21.625) and math.isclose(zero.kappa_h1, 2 / (16 * 21.625))
    ok, worst = consts_ok, 0.0
    for _, c, tr in entropy_runs:
        passed, w = stepwise_entropy_dissipation(tr, "E", c.kappa_h1, 1e-6)
        ok &= passed
        worst = max(worst, w)
    record(4, "stepwise H1 entropy dissipation", ok,
           f"worst step ratio {worst:.6f}; B=0 constants E={zero.E} D={zero.D} C={zero.C} "
           f"kappa_h1={zero.kappa_h1:.3e}")


def test_criterion_05_weighted_decay(tmp_path):
    cfg = load_config(CONFIGS / "desk_decay.cfg", {"run.suites": "lpm"})
    gates = a_ledger(cfg.weight, cfg.field, cfg.p).violated()
    rep = run_decay(cfg, tmp_path)
    s = rep["suites"]["lpm"]
    ok = not gates and s["rate"] > 0 and s["r2"] >= 0.99 and s["c"] <= 10 and s["a"] == -0.5
    record(5, "decay in L2(<v>^8), B=1", ok,
           f"log-slope {-s['rate']:.4f} over {rep['fits']['lpm']['window']}, r2 {s['r2']:.5f}, "
           f"c {s['c']:.4f} for a=-1/2 (<= 10), gates violated: {len(gates)}")


def test_criterion_06_dissipativity(split_bundle_search):
    w, res = split_bundle_search
    ray = rayleigh_weighted(DESK, w, res.M, res.R)
    bun = assemble_splitting(DESK, MagneticField.constant(DESK, 1.0), w, 2.0, res.M, res.R)
    probe = lp_m_dissipativity_probe(bun, w, 1.0, -1.0, 20, np.random.default_rng(106))
    ok = ray <= -1.0 + 1e-8 and probe.passed
    record(6, "dissipativity of B", ok,
           f"search M={res.M:g} R={res.R:g}, p=2 Rayleigh {ray:.4f} (<= a=-1), "
           f"L1(m) finite-difference worst {probe.fd_worst:.4f} over 20 states")


def test_criterion_07_smoothing(split_bundle_search):
    w, res = split_bundle_search
    ts = np.logspace(-3, -1, 13)
    slopes, bounded = [], []
    for B in (MagneticField.zero(DESK), MagneticField.constant(DESK, 1.0), desk_field()):
        bun = assemble_splitting(DESK, B, w, 2.0, res.M, res.R)
        for seed in range(5):
            rough = rough_state(DESK, np.random.default_rng([107, seed]))
            slopes.append(smoothing_probe(bun, rough, 1.0, 2.0, ts, fit_range=(1e-3, 1e-1)).slope)
        smooth = convert_frame(shifted_maxwellian(DESK, [0.4, -0.2]), Frame.PERTURBATION)
        bounded.append(float(smoothing_probe(bun, smooth, 1.0, 2.0, ts).ratios.max()))
    ok = max(slopes) <= -0.5 and max(bounded) < 10
    record(7, "smoothing of S_B", ok,
           f"rough-data slopes in [{min(slopes):.4f}, {max(slopes):.4f}] (<= -0.5), "
           f"matched-data ratio max {max(bounded):.3f}")


def test_criterion_08_enlargement_machinery(split_bundle_search):
    w, res = split_bundle_search
    bun = assemble_splitting(DESK, desk_field(), w, 2.0, res.M, res.R)
    f0 = random_state(DESK, np.random.default_rng(108), decay=0.2)
    duh = duhamel_residual(bun, 0.5, f0)

    def S(t, x):
        return np.exp(-t) * x

    conv = 0.0
    for t in (0.3, 1.0, 4.0):
        conv = max(conv, abs(convolve(S, S, t, np.array([1.0]), tol=1e-13).value[0] - t * math.exp(-t)))
    Sb = MagneticField.constant(DESK, 1.0)
    bun_c = assemble_splitting(DESK, Sb, w, 2.0, res.M, res.R)
    tn = 0.0
    for n in (1, 2, 3):
        ti = t_n_inductive(bun_c, n, 0.4, f0.vector, quad_points=8)
        td = t_n_direct(bun_c, n, 0.4, f0.vector)
        tn = max(tn, float(np.linalg.norm(ti - td) / np.linalg.norm(td)))
    ok = duh <= 1e-6 and conv <= 1e-10 and tn <= 1e-6
    record(8, "enlargement machinery", ok,
           f"Duhamel residual {duh:.2e}, scalar convolution error {conv:.2e}, T_n (n=1..3) agreement {tn:.2e}")


def test_criterion_09_nonpositivity():
    rng = np.random.default_rng(109)
    worst = {}
    for p in (1.0, 1.5, 2.0):
        worst[p] = max(nonpositivity_check(random_state(DESK, rng, decay=0.4, margin=2), p) for _ in range(100))
    ok = max(worst.values()) <= 1e-8
    record(9, "diffusion non-positivity (100 states)", ok,
           ", ".join(f"p={p:g}: {v:.3e}" for p, v in worst.items()))


def test_criterion_10_numerics_hygiene(tmp_path):
    P = assemble_generator(DESK, desk_field())
    f0 = random_state(DESK, np.random.default_rng(110), decay=0.2)
    orders, _ = convergence_order(P, f0, 0.5, [0.02, 0.01, 0.005])
    cfg = load_config(CONFIGS / "desk_decay.cfg")
    run_decay(cfg, tmp_path / "a")
    run_decay(load_config(CONFIGS / "desk_decay.cfg"), tmp_path / "b")
    same = all((tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
               for f in ("trajectory.csv", "report.json"))
    ok = bool(np.all((orders >= 1.9) & (orders <= 2.1))) and same
    record(10, "numerics hygiene", ok,
           f"Strang orders {', '.join(f'{o:.4f}' for o in orders)}, bit-identical outputs: {same}")
