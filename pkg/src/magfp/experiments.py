"""Experiment runners behind the command line: verify, decay, enlarge and report.

Each runner takes an :class:`~magfp.config.ExperimentConfig` and an output
directory, writes its artifacts there and returns the report dictionary
(also written as ``report.json``). ``report["passed"]`` aggregates the
per-suite verdicts.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from . import hermite
from .config import ConfigError, ExperimentConfig
from .evolution import (IntegratorConfig, Scheme, TrajectoryRecord, evolve, duhamel_residual,
                        smoothing_probe, spectral_projection_pi0, t_n_direct, t_n_inductive)
from .field import (FieldState, Frame, GridConfig, convert_frame, maxwellian, norm_lp_m, norm_w1p_m,
                    random_state)
from .hypoco import (choose_constants, entropy_f_eps, entropy_h1, fit_decay, h1_norm_sq,
                     lp_m_dissipativity_probe, stepwise_entropy_dissipation)
from .io import file_sha256, write_json, write_operator_coo, write_trajectory_csv
from .operators import (a_ledger, a_mp_limit, assemble_collision, assemble_generator, assemble_magnetic,
                        assemble_splitting, assemble_transport, commutator_checks, nonpositivity_check,
                        psi_lyapunov, weighted_gram)

__all__ = ["GateRefusal", "run_verify", "run_decay", "run_enlarge", "run_report", "rough_state",
           "deviation"]


class GateRefusal(ConfigError):
    """A requested suite needs a weight gate that the configuration violates."""

    def __init__(self, gates: list):
        self.gates = list(gates)
        super().__init__("refused: violated gate(s): " + "; ".join(self.gates))


def deviation(s: FieldState) -> FieldState:
    """Remove the equilibrium component ``mu <F>`` (the Pi_0 image) from a Perturbation state."""
    b = np.array(s.blocks)
    b[s.grid.zero_mode, 0] -= s.mean()
    return FieldState(s.grid, s.frame, b)


def rough_state(grid: GridConfig, rng: np.random.Generator, shell: int = 0,
                frame: Frame = Frame.PERTURBATION) -> FieldState:
    """Random data carried by the top Hermite shells ``|alpha| >= n_v - shell`` (grid-scale roughness)."""
    s = random_state(grid, rng, frame)
    b = np.array(s.blocks)
    b[:, grid.degrees < grid.n_v - shell] = 0
    return FieldState(grid, frame, b)


def _suite(passed: bool, **details) -> dict:
    return {"passed": bool(passed), **details}


def _finish(report: dict, out: Path, files: list) -> dict:
    report["files"] = {Path(f).name: file_sha256(f) for f in files}
    report["passed"] = all(s["passed"] for s in report["suites"].values())
    write_json(report, out / "report.json")
    return report


def _header(cfg: ExperimentConfig, command: str) -> dict:
    return {"command": command, "label": cfg.label, "config": cfg.to_dict(), "seed": cfg.seed,
            "suites": {}, "rates": [], "warnings": []}


# ---------------------------------------------------------------------------
# verify


def run_verify(cfg: ExperimentConfig, out) -> dict:
    """Algebraic and conservation invariants of the assembled operators."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    g, B, tol = cfg.grid, cfg.field, cfg.tolerances
    rep = _header(cfg, "verify")
    if "w1p" in cfg.suites:
        if cfg.weight.kind != "polynomial":
            raise GateRefusal(["the W1p(m) suite needs a polynomial weight"])
        bad = a_ledger(cfg.weight, B, cfg.p).violated()
        if bad:
            raise GateRefusal(bad)

    T = assemble_transport(g)
    G = assemble_magnetic(g, B)
    C = assemble_collision(g)
    P = assemble_generator(g, B)
    rng = cfg.rng(1)
    n = cfg.n_trials

    # skew-adjointness, unweighted and in L2(m) for the velocity rotations
    sk = {"transport": T.skew_defect(), "magnetic": G.skew_defect()}
    if cfg.weight.theta < 1:
        Gw = weighted_gram(g, cfg.weight)
        ks = (2,) if g.d_v == 2 else (0, 1, 2)
        wd = 0.0
        for k in ks:
            R = hermite.rotation_matrix(g.d_v, g.n_v, k).toarray()
            num = np.abs(Gw @ R + R.T @ Gw).max()
            wd = max(wd, float(num / max(np.abs(Gw @ R).max(), 1e-300)))
        sk["magnetic_weighted"] = wd
    rep["suites"]["skew"] = _suite(max(sk.values()) <= tol["algebraic"], defects=sk, tol=tol["algebraic"])

    states = [random_state(g, rng, margin=2, decay=0.1) for _ in range(n)]
    cm = commutator_checks(g, B, states)
    rep["suites"]["commutators"] = _suite(max(cm.values()) <= tol["algebraic"], defects=cm,
                                          tol=tol["algebraic"], n_states=n)

    worst = 0.0
    Cm = C.matrix
    for s in states:
        c = s.vector
        lhs = np.vdot(c, Cm @ c).real
        rhs = float((np.tile(g.degrees, g.n_fourier) * np.abs(c) ** 2).sum())
        worst = max(worst, abs(lhs - rhs) / max(rhs, 1e-300))
    rep["suites"]["accretivity"] = _suite(worst <= 1e-14, defect=worst, tol=1e-14)

    # conservation, equilibrium, projection
    mass = max(abs(P.apply(s).mean()) / s.l2() for s in states)
    mu = maxwellian(g, Frame.ORIGINAL)
    stat = float(np.abs(P.with_frame(Frame.ORIGINAL).matrix @ mu.vector).max())
    F = convert_frame(states[0], Frame.ORIGINAL)
    p1 = spectral_projection_pi0(F)
    idem = float(np.abs(spectral_projection_pi0(p1).vector - p1.vector).max())
    rep["suites"]["conservation"] = _suite(mass <= tol["algebraic"] and stat <= tol["algebraic"]
                                           and idem <= 1e-14, mass_rate=mass, equilibrium_rate=stat,
                                           pi0_idempotence=idem)

    # diffusion non-positivity
    npv = {}
    for p in (1.0, 1.5, 2.0):
        npv[str(p)] = max(nonpositivity_check(random_state(g, rng, decay=0.4, margin=2), p)
                          for _ in range(max(1, n // 4)))
    rep["suites"]["nonpositivity"] = _suite(max(npv.values()) <= tol["quadrature"], worst=npv,
                                            tol=tol["quadrature"])

    # the field does not enter the weighted energy balance
    if cfg.weight.theta < 1:
        Gw = weighted_gram(g, cfg.weight)
        e = 0.0
        for s in states[: max(1, n // 4)]:
            b = s.blocks
            gb = (G.matrix @ s.vector).reshape(b.shape)
            wb = b @ Gw
            e = max(e, abs(np.vdot(wb, gb).real) / max(np.linalg.norm(gb) * np.linalg.norm(wb), 1e-300))
        psiB = psi_lyapunov(cfg.weight, cfg.p, g, B=B).psi_sup_outside
        psi0 = psi_lyapunov(cfg.weight, cfg.p, g).psi_sup_outside
        rep["suites"]["field_independence"] = _suite(e <= tol["algebraic"] and psiB == psi0,
                                                     weighted_energy_defect=e, psi_sup=psiB)

    files = []
    if "coo" in cfg.formats:
        for op, name in ((P, "generator"), (T, "transport"), (G, "magnetic"), (C, "collision")):
            files.append(write_operator_coo(op, out / f"{name}.coo.csv"))
    return _finish(rep, out, files)


# ---------------------------------------------------------------------------
# decay


def _rate_row(quantity: str, fit, bound: float, provenance: str) -> dict:
    return {"quantity": quantity, "measured_rate": fit["rate"], "theory_bound": bound,
            "margin": fit["rate"] - bound, "r2": fit["r2"], "window": fit["window"], "provenance": provenance}


def _fit(traj: TrajectoryRecord, name: str, window) -> dict:
    q = np.asarray(traj.norms[name])
    if np.all(np.abs(q) <= 1e-14 * max(1.0, abs(traj.mass[0]))):
        # equilibrium data: nothing to fit
        return {"window": list(window), "rate": 0.0, "r2": 1.0, "monotone_after": 0.0, "slope": 0.0,
                "intercept": -math.inf, "residual": 0.0}
    return fit_decay(traj, name, window).to_dict()


def run_decay(cfg: ExperimentConfig, out) -> dict:
    """Decay to equilibrium in the selected norms with theory-vs-measured rate table."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    g, B, w, p, tol = cfg.grid, cfg.field, cfg.weight, cfg.p, cfg.tolerances
    rep = _header(cfg, "decay")
    ledger = None
    if "w1p" in cfg.suites:
        if w.kind != "polynomial":
            raise GateRefusal(["the W1p(m) suite needs a polynomial weight"])
        ledger = a_ledger(w, B, p)
        if ledger.violated():
            raise GateRefusal(ledger.violated())
    consts = choose_constants(B, g)
    rep["constants"] = consts.to_dict()
    rep["constants"]["eps_provenance"] = "eps = min(1/2, 1/(2 C_op)), C_op measured by SVD of the moment remainder map"

    P = assemble_generator(g, B)
    f0 = cfg.initial_state()
    if cfg.initial.get("mean_zero"):
        f0 = deviation(f0)
    traces = {}
    if "l2" in cfg.suites:
        traces["l2"] = lambda s: deviation(s).l2()
        traces["F_eps"] = lambda s: entropy_f_eps(deviation(s), consts.eps)
    if "h1" in cfg.suites:
        traces["h1"] = lambda s: math.sqrt(h1_norm_sq(deviation(s)))
        traces["E_h1"] = lambda s: entropy_h1(deviation(s), consts)
    if "lpm" in cfg.suites:
        traces["lpm"] = lambda s: norm_lp_m(deviation(s), w, p)
    if "w1p" in cfg.suites:
        traces["w1p"] = lambda s: norm_w1p_m(deviation(s), w, p)
    ic = cfg.integrator
    icfg = IntegratorConfig(ic.scheme, ic.dt, ic.t_end, ic.record_every, keep_states=False)
    if icfg.scheme is Scheme.EXACT_SMALL and not P.fourier_diagonal and g.size > 4000:
        rep["warnings"].append("exact_small needs a Fourier-diagonal generator at this size; using strang_imex")
        icfg = IntegratorConfig(Scheme.STRANG_IMEX, ic.dt, ic.t_end, ic.record_every, keep_states=False)
    traj = evolve(P, f0, icfg, traces)
    files = [write_trajectory_csv(traj, out / "trajectory.csv")]
    drift = traj.mass_drift()
    rep["suites"]["mass"] = _suite(drift <= tol["conservation"], drift=drift, tol=tol["conservation"])
    window = (icfg.t_end / 5, icfg.t_end)
    fits = {}
    for name in traj.norms:
        fits[name] = _fit(traj, name, window)
    rep["fits"] = fits

    if "l2" in cfg.suites:
        ok, worst = stepwise_entropy_dissipation(traj, "F_eps", consts.kappa_l2, tol["integration"])
        rep["suites"]["l2"] = _suite(ok, stepwise_worst=worst, kappa=consts.kappa_l2)
        rep["rates"].append(_rate_row("F_eps", fits["F_eps"], consts.kappa_l2,
                                      "kappa = eps c_P / (4 (c_P + 1)) with measured eps"))
    if "h1" in cfg.suites:
        ok, worst = stepwise_entropy_dissipation(traj, "E_h1", consts.kappa_h1, tol["integration"])
        rep["suites"]["h1"] = _suite(ok, stepwise_worst=worst, kappa=consts.kappa_h1)
        rep["rates"].append(_rate_row("E_h1", fits["E_h1"], consts.kappa_h1,
                                      "kappa = E c_P / (16 C) from the chosen constants"))
    for name, default in (("lpm", max(a_mp_limit(w, p, g.d_v), -0.5 * consts.kappa_l2)),
                          ("w1p", max(ledger.worst if ledger else -math.inf, -0.5 * consts.kappa_h1))):
        if name not in cfg.suites:
            continue
        a = cfg.a if cfg.a is not None else default
        q = np.asarray(traj.norms[name])
        if q[0] == 0:
            c = 0.0
        else:
            c = float(np.max(q * np.exp(-a * traj.times) / q[0]))
        fit = fits[name]
        ok = c <= tol["c_max"] and (fit["rate"] > 0 or q[0] == 0)
        rep["suites"][name] = _suite(ok, a=a, c=c, c_max=tol["c_max"], rate=fit["rate"], r2=fit["r2"],
                                     meaningful=fit["r2"] >= 0.99)
        prov = ("a > max(a_mp, -kappa/2) with a_mp the Lyapunov limit" if name == "lpm"
                else "a > max of the six weighted-Sobolev rate values and -kappa/2")
        rep["rates"].append(_rate_row(name, fit, -a, prov))
    if ledger is not None:
        rep["a_ledger"] = ledger.to_dict()
    if "json" in cfg.formats:
        files.append(write_json({"times": traj.times, "mass": traj.mass, "fits": fits}, out / "trajectory.json"))
    return _finish(rep, out, files)


# ---------------------------------------------------------------------------
# enlarge


def _small_space_gap(P, g: GridConfig, cfg: ExperimentConfig) -> tuple:
    """Spectral gap of the generator off the equilibrium direction."""
    if P.fourier_diagonal:
        top = -math.inf
        for f in range(g.n_fourier):
            ev = np.sort(np.linalg.eigvals(P.block(f)).real)[::-1]
            if f == g.zero_mode:
                ev = ev[1:]
            top = max(top, float(ev[0]))
        return -top, "exact block eigenvalues"
    f0 = deviation(random_state(g, cfg.rng(5), decay=0.2))
    ic = IntegratorConfig(Scheme.STRANG_IMEX, 0.02, 10.0, 5, keep_states=False)
    tr = evolve(P, f0, ic, {"l2": lambda s: s.l2()})
    return fit_decay(tr, "l2", (2.0, 10.0)).rate, "fitted decay of a random mean-zero solution"


def run_enlarge(cfg: ExperimentConfig, out) -> dict:
    """The three hypotheses of the enlargement argument, checked numerically."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    g, B, w, p, tol = cfg.grid, cfg.field, cfg.weight, cfg.p, cfg.tolerances
    rep = _header(cfg, "enlarge")
    lim = a_mp_limit(w, p, g.d_v)
    if not lim < 0:
        raise GateRefusal([f"a_mp = {lim:.6g} must be negative for a dissipative splitting"])
    a = cfg.split.get("a", 0.5 * lim)
    try:
        bundle = assemble_splitting(g, B, w, p, cfg.split.get("M"), cfg.split.get("R"), a)
    except ValueError as exc:
        raise ConfigError(f"split: {exc}") from None
    rep["splitting"] = bundle.to_dict()
    rep["splitting"]["a"] = a

    gap, how = _small_space_gap(bundle.L0, g, cfg)
    rep["suites"]["H1_gap"] = _suite(gap > 0, gap=gap, method=how)

    probe = lp_m_dissipativity_probe(bundle, w, p, a, cfg.n_trials, cfg.rng(2), tol["quadrature"])
    details = probe.to_dict()
    rep["suites"]["H2_dissipativity"] = _suite(details.pop("passed"), **details)

    ts = np.logspace(-3, -1, 13)
    rough = rough_state(g, cfg.rng(3))
    sm = {}
    for opname in ("S", "AS", "SA"):
        pr = smoothing_probe(bundle, rough, 1.0, 2.0, ts, fit_range=(1e-3, 1e-1), operator=opname)
        sm[opname] = {"slope": pr.slope, "max_ratio": float(pr.ratios.max())}
    bounded = all(np.isfinite(v["max_ratio"]) for v in sm.values())
    rep["suites"]["H3_smoothing"] = _suite(bounded and sm["S"]["slope"] <= -0.5, probes=sm)

    f0 = random_state(g, cfg.rng(4), decay=0.2)
    duh = duhamel_residual(bundle, 0.5, f0, tol["integration"])
    x = f0.vector
    ti = t_n_inductive(bundle, 2, 0.5, x)
    td = t_n_direct(bundle, 2, 0.5, x)
    tn = float(np.linalg.norm(ti - td) / max(np.linalg.norm(td), 1e-300))
    rep["suites"]["machinery"] = _suite(duh <= tol["integration"] and tn <= tol["integration"],
                                        duhamel=duh, t2_agreement=tn)
    return _finish(rep, out, [])


# ---------------------------------------------------------------------------
# report


def run_report(root, out=None) -> dict:
    """Merge run directories below ``root`` into ``summary.json``, ``decay_table.csv`` and ``series.csv``."""
    root = Path(root)
    if not root.is_dir():
        raise ConfigError(f"not a directory: {root}")
    out = Path(out) if out else root
    out.mkdir(parents=True, exist_ok=True)
    runs, incomplete = [], []
    candidates = sorted([d for d in root.iterdir() if d.is_dir()] + [root])
    for d in candidates:
        rj = d / "report.json"
        if not rj.exists():
            if d != root:
                why = "refused" if (d / "refusal.json").exists() else "no report.json"
                incomplete.append({"run": d.name, "reason": why})
            continue
        try:
            rep = json.loads(rj.read_text())
        except json.JSONDecodeError as exc:
            incomplete.append({"run": d.name, "reason": f"unreadable report.json: {exc}"})
            continue
        missing = [f for f, h in rep.get("files", {}).items()
                   if not (d / f).exists() or file_sha256(d / f) != h]
        if missing:
            incomplete.append({"run": d.name, "reason": "missing or modified files", "files": missing})
            continue
        runs.append((d, rep))

    table = []
    with (out / "decay_table.csv").open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["run", "quantity", "measured_rate", "theory_bound", "margin", "r2", "provenance"])
        for d, rep in runs:
            for r in rep.get("rates", []):
                row = [d.name, r["quantity"], repr(float(r["measured_rate"])), repr(float(r["theory_bound"])),
                       repr(float(r["margin"])), repr(float(r["r2"])), r["provenance"]]
                wr.writerow(row)
                table.append(row)
    with (out / "series.csv").open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["run", "t", "quantity", "value"])
        for d, rep in runs:
            tf = d / "trajectory.csv"
            if not tf.exists():
                continue
            with tf.open() as src:
                rows = list(csv.reader(src))
            head = rows[0]
            for row in rows[1:]:
                for name, val in zip(head[1:], row[1:]):
                    wr.writerow([d.name, row[0], name, val])
    summary = {
        "runs": [{"run": d.name, "command": rep.get("command"), "label": rep.get("label"),
                  "passed": rep.get("passed"), "suites": {k: v.get("passed") for k, v in rep.get("suites", {}).items()},
                  "files": rep.get("files", {})} for d, rep in runs],
        "incomplete": incomplete,
        "n_rates": len(table),
    }
    write_json(summary, out / "summary.json")
    return summary
