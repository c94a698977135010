"""Entropy functionals, hypocoercivity constants, decay fits and moment identities."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from . import hermite
from .evolution import TrajectoryRecord, semigroup
from .field import (FieldState, Frame, FrameError, GridConfig, MagneticField, Weight, moments,
                    norm_lp_m, random_state, to_physical)
from .operators import (LinearOperatorRep, SplitBundle, _fourier_multiplier, a_mp_limit, cutoff,
                        derivative_v)

__all__ = [
    "EntropyConstants",
    "DecayFit",
    "DissipativityProbe",
    "entropy_f_eps",
    "entropy_h1",
    "h1_norm_sq",
    "measure_cop",
    "choose_constants",
    "poincare_gap",
    "poincare_check",
    "modified_poincare_probe",
    "macro_residual",
    "fit_decay",
    "stepwise_entropy_dissipation",
    "lp_m_dissipativity_probe",
    "rayleigh_weighted",
    "lemma_identities",
]


# ---------------------------------------------------------------------------
# constants


@dataclass(frozen=True)
class EntropyConstants:
    """Constants of the two modified entropies.

    ``eta1`` and ``eta2`` stand for eta' and eta''. ``C_op`` is the measured
    norm of the moment remainder operator that fixes ``eps``.
    """

    eps: float
    C: float
    D: float
    E: float
    eta: float
    eta1: float
    eta2: float
    kappa_l2: float
    kappa_h1: float
    c_P: float
    C_op: float = math.nan

    def __post_init__(self):
        if not 0 < self.eps <= 0.5:
            raise ValueError("eps must lie in (0, 1/2]")
        if self.E < 2:
            raise ValueError("E must be >= 2")
        if self.D < 0.5 * (self.E**2 + 0.5 * self.eta1) - 1e-12:
            raise ValueError("D must be >= (E^2 + eta'/2)/2")
        if self.eta > 1 or self.eta2 > 1:
            raise ValueError("eta and eta'' must be <= 1")
        if self.D <= 0.5 * self.E**2:
            raise ValueError("the H1 entropy is not positive definite unless D > E^2/2")

    @property
    def strict_sandwich(self) -> bool:
        """Whether ``E^2 < D``, the hypothesis under which the (1/2, 2C) sandwich is stated."""
        return self.E**2 < self.D

    @property
    def sandwich(self) -> tuple:
        """Constants ``(lo, hi)`` with ``lo ||u||_H1^2 <= E(u) <= hi ||u||_H1^2``.

        From ``|E <a, b>| <= |a|^2/2 + E^2 |b|^2 / 2``.
        """
        lo = min(self.C, self.D - 0.5 * self.E**2, 0.5)
        hi = max(self.C, self.D + 0.5 * self.E**2, 1.5)
        return lo, hi

    def to_dict(self) -> dict:
        d = asdict(self)
        d["strict_sandwich"] = self.strict_sandwich
        d["sandwich"] = list(self.sandwich)
        return d


def poincare_gap(grid: GridConfig) -> float:
    """Spectral gap of ``-Delta_x`` on the torus band: smallest nonzero ``|xi|^2``."""
    xi2 = (grid.freqs**2).sum(axis=1)
    return float(xi2[xi2 > 0].min())


def poincare_check(grid: GridConfig, rng: np.random.Generator, n_trials: int = 50) -> float:
    """Minimum of ``||Lambda^{-1} grad phi||^2 / ||phi||^2`` over random mean-zero torus functions.

    Should be at least ``c_P / (c_P + 1)``.
    """
    xi2 = (grid.freqs**2).sum(axis=1)
    worst = math.inf
    shape = (grid.n_x,) * grid.d_x
    for _ in range(n_trials):
        c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        c = 0.5 * (c + c[(slice(None, None, -1),) * grid.d_x].conj())
        c = c.ravel()
        c[grid.zero_mode] = 0
        num = (xi2 / (1 + xi2) * np.abs(c) ** 2).sum()
        worst = min(worst, float(num / (np.abs(c) ** 2).sum()))
    return worst


def _wedge_field(grid: GridConfig, B: MagneticField) -> list:
    """Sparse Fourier matrices ``W[i][j]`` with ``(m ^ B)_i = sum_j W[i][j] m_j``."""
    d = grid.d_v
    Z = sp.csr_matrix((grid.n_fourier, grid.n_fourier), dtype=complex)
    W = [[Z] * d for _ in range(d)]
    if d == 2:
        T = _fourier_multiplier(grid, B.coeffs[0])
        W[0][1] = T
        W[1][0] = -T
    else:
        T = [_fourier_multiplier(grid, B.coeffs[k]) for k in range(3)]
        for i in range(3):
            a, b = (i + 1) % 3, (i + 2) % 3
            # (m ^ B)_i = m_a B_b - m_b B_a
            W[i][a] = W[i][a] + T[b]
            W[i][b] = W[i][b] - T[a]
    return W


def _op1_matrix(grid: GridConfig, B: MagneticField) -> np.ndarray:
    """Dense matrix of ``h -> (Lambda^{-1} div m, Lambda^{-1}(m ^ B + m + div M2[h]))``.

    Columns run over the Hermite modes of degree 1 and 2 (the only ones the
    remainder sees); rows over ``(xi, component)`` of the outputs.
    """
    d, nF = grid.d_v, grid.n_fourier
    e = np.eye(d, dtype=int)
    cols = [a for a in range(grid.n_alpha) if grid.degrees[a] in (1, 2)]
    col_of = {a: i for i, a in enumerate(cols)}
    n_in = nF * len(cols)
    lam = 1.0 / np.sqrt(1 + (grid.freqs**2).sum(axis=1))
    D = [sp.diags(1j * grid.freqs[:, j].astype(float)) for j in range(grid.d_x)]
    W = _wedge_field(grid, B)

    def sel(alpha, weight=1.0):
        # Fourier-identity block selecting one Hermite column
        m = sp.lil_matrix((nF, n_in), dtype=complex)
        c = col_of[grid.alpha_index(alpha)]
        for f in range(nF):
            m[f, f * len(cols) + c] = weight
        return m.tocsr()

    m_sel = [sel(e[j]) for j in range(d)]
    blocks = []
    div_m = sum(D[j] @ m_sel[j] for j in range(grid.d_x))
    blocks.append(sp.diags(lam) @ div_m)
    for j in range(d):
        out = m_sel[j].copy()
        for i in range(d):
            if W[j][i].nnz:
                out = out + W[j][i] @ m_sel[i]
        for i in range(grid.d_x):
            a = e[i] + e[j]
            weight = np.sqrt(2.0) if i == j else 1.0
            out = out + D[i] @ sel(a, weight)
        blocks.append(sp.diags(lam) @ out)
    return sp.vstack(blocks).toarray()


def measure_cop(grid: GridConfig, B: MagneticField) -> float:
    """Operator norm of the moment remainder map (exact, by dense SVD)."""
    return float(sla.svdvals(_op1_matrix(grid, B))[0])


def choose_constants(B: MagneticField, grid: GridConfig, eta: float = 1.0, eta1: float = 1.0,
                     eta2: float = 1.0, E: float = 2.0) -> EntropyConstants:
    """Smallest admissible constants ``D = (E^2 + eta'/2)/2`` and ``C = A``, plus ``eps``.

    ``A = (2D+E)^2/2 + 2D|B| + E|B|^2/(2 eta) + E^2 |grad B|^2/(2 eta') + eta'/2 + |grad B|^2/eta''``.
    ``eps = min(1/2, 1/(2 C_op))`` with ``C_op`` from :func:`measure_cop`.
    """
    b, gb = B.sup_norm, B.grad_sup_norm
    D = 0.5 * (E**2 + 0.5 * eta1)
    A = (0.5 * (2 * D + E) ** 2 + 2 * D * b + E / (2 * eta) * b**2 + E**2 / (2 * eta1) * gb**2
         + 0.5 * eta1 + gb**2 / eta2)
    C = A
    c_P = poincare_gap(grid)
    C_op = measure_cop(grid, B)
    eps = min(0.5, 1.0 / (2.0 * C_op))
    kappa_l2 = 0.25 * eps * c_P / (c_P + 1)
    kappa_h1 = E / 8 * c_P / (2 * C)
    return EntropyConstants(eps, C, D, E, eta, eta1, eta2, kappa_l2, kappa_h1, c_P, C_op)


# ---------------------------------------------------------------------------
# entropies


def entropy_f_eps(f: FieldState, eps: float) -> float:
    """``||f||^2 + eps Re sum_xi (i xi r(xi)) . conj(m(xi)) / (1 + |xi|^2)``."""
    if f.frame != Frame.PERTURBATION:
        raise FrameError("entropy_f_eps expects a Perturbation-frame state")
    if not 0 <= eps <= 0.5:
        raise ValueError("eps must lie in [0, 1/2]")
    g = f.grid
    mo = moments(f)
    xi = g.freqs.astype(float)
    lam2 = 1.0 + (xi**2).sum(axis=1)
    cross = 0.0
    for j in range(g.d_x):
        cross += np.sum((1j * xi[:, j] * mo.r) * np.conj(mo.m[:, j]) / lam2).real
    return float(f.l2() ** 2 + eps * cross)


def _h1_parts(f: FieldState) -> tuple:
    g = f.grid
    b = f.blocks
    xi2 = (g.freqs**2).sum(axis=1)
    u2 = float((np.abs(b) ** 2).sum())
    gv2 = float((g.degrees[None, :] * np.abs(b) ** 2).sum())
    gx2 = float((xi2[:, None] * np.abs(b) ** 2).sum())
    cross = 0.0
    for j in range(g.d_x):
        dx = b * (1j * g.freqs[:, j])[:, None]
        dv = (hermite.deriv_matrix(g.d_v, g.n_v, j) @ b.T).T
        cross += float(np.vdot(dv, dx).real)
    return u2, gv2, cross, gx2


def h1_norm_sq(f: FieldState) -> float:
    """``||u||^2 + ||grad_v u||^2 + ||grad_x u||^2`` in ``L^2(dx dmu)``."""
    u2, gv2, _, gx2 = _h1_parts(f)
    return u2 + gv2 + gx2


def entropy_h1(f: FieldState, c: EntropyConstants) -> float:
    """``C||u||^2 + D||grad_v u||^2 + E<grad_x u, grad_v u> + ||grad_x u||^2``."""
    if not isinstance(c, EntropyConstants):
        raise TypeError("constants must be an EntropyConstants instance")
    u2, gv2, cross, gx2 = _h1_parts(f)
    return c.C * u2 + c.D * gv2 + c.E * cross + gx2


# ---------------------------------------------------------------------------
# Poincare-type inequalities


def modified_poincare_probe(grid: GridConfig, n_trials: int = 50, rng: np.random.Generator | None = None,
                            max_degree: int | None = None) -> tuple:
    """Rayleigh ratios of ``int |grad_v P|^2 dmu / int (P - <P>)^2 (1 + |v|^2) dmu``.

    Returns
    -------
    min_ratio : float
        Smallest ratio over ``n_trials`` random polynomials.
    ritz : float
        Smallest generalized eigenvalue on the band (Ritz estimate of ``2 lambda_p``).
    """
    rng = rng or np.random.default_rng(0)
    n = max_degree or grid.n_v
    al = hermite.multi_indices(grid.d_v, n)
    order = n + 4
    nodes, logw = hermite.gauss_hermite(grid.d_v, order, 1.0)
    w = np.exp(logw) / (2 * np.pi) ** (grid.d_v / 2) * (1 + (nodes**2).sum(axis=1))
    V = hermite.basis_values(al, nodes)[:, 1:]
    G = (V * w[:, None]).T @ V
    G = 0.5 * (G + G.T)
    K = np.diag(al.sum(axis=1)[1:].astype(float))
    ritz = float(sla.eigh(K, G, eigvals_only=True, subset_by_index=[0, 0])[0])
    worst = math.inf
    for _ in range(n_trials):
        c = rng.standard_normal(len(al) - 1) * np.exp(-0.3 * al.sum(axis=1)[1:])
        worst = min(worst, float(c @ K @ c / (c @ G @ c)))
    if not (worst > 0 and ritz > 0):
        raise AssertionError("modified Poincare ratio is not positive")
    return worst, ritz


# ---------------------------------------------------------------------------
# moment identities


def macro_residual(traj: TrajectoryRecord, B: MagneticField, generator: LinearOperatorRep | None = None):
    """Residuals of the local conservation law and the momentum balance.

    ``R_r = ||d_t r + div m||`` and
    ``R_m = ||d_t m + grad r + m ^ B + m + div M2[h]||`` (x-L2 norms).

    With ``generator`` the time derivative is the exact right-hand side at
    each sample; otherwise second-order central differences of the samples
    are used (interior samples only).

    Returns
    -------
    times, R_r, R_m : ndarray
    """
    if traj.states is None:
        raise ValueError("trajectory was recorded without states")
    states = traj.states
    grid = states[0].grid
    if generator is not None:
        dts = [FieldState.from_vector(grid, s.frame, generator.matrix @ s.vector) for s in states]
        idx = range(len(states))
    else:
        t = traj.times
        dts, idx = [], range(1, len(states) - 1)
        for i in idx:
            h = t[i + 1] - t[i - 1]
            dts.append(FieldState(grid, states[i].frame, (states[i + 1].coeffs - states[i - 1].coeffs) / h))
    W = _wedge_field(grid, B)
    xi = grid.freqs.astype(float)
    d = grid.d_v
    Rr, Rm, times = [], [], []
    for k, i in enumerate(idx):
        s = states[i]
        if s.frame != Frame.PERTURBATION:
            from .field import convert_frame
            s = convert_frame(s, Frame.PERTURBATION)
            ds = FieldState(grid, Frame.PERTURBATION, dts[k].coeffs)
        else:
            ds = dts[k]
        mo = moments(s, include_density=False)
        dm = moments(ds, include_density=False)
        div_m = sum(1j * xi[:, j] * mo.m[:, j] for j in range(grid.d_x))
        rr = dm.r + div_m
        res = np.zeros((grid.n_fourier, d), dtype=complex)
        for j in range(d):
            res[:, j] = dm.m[:, j] + mo.m[:, j]
            if j < grid.d_x:
                res[:, j] += 1j * xi[:, j] * mo.r
            for i2 in range(d):
                if W[j][i2].nnz:
                    res[:, j] += W[j][i2] @ mo.m[:, i2]
            for i2 in range(grid.d_x):
                res[:, j] += 1j * xi[:, i2] * mo.M2[:, i2, j]
        Rr.append(float(np.linalg.norm(rr)))
        Rm.append(float(np.linalg.norm(res)))
        times.append(traj.times[i])
    return np.array(times), np.array(Rr), np.array(Rm)


# ---------------------------------------------------------------------------
# decay fits


@dataclass(frozen=True)
class DecayFit:
    """Least-squares fit of ``log q(t) = intercept + slope t`` on a window."""

    window: tuple
    rate: float
    r2: float
    monotone_after: float
    slope: float
    intercept: float
    residual: float

    @property
    def meaningful(self) -> bool:
        return self.r2 >= 0.99

    def to_dict(self) -> dict:
        return {"window": list(self.window), "rate": self.rate, "r2": self.r2,
                "monotone_after": self.monotone_after, "slope": self.slope,
                "intercept": self.intercept, "residual": self.residual}


def fit_decay(traj: TrajectoryRecord, quantity_name: str, window: tuple | None = None) -> DecayFit:
    """Fit an exponential rate to a traced quantity.

    Raises
    ------
    ValueError
        If a sample in the window is not positive.
    """
    t = traj.times
    q = np.asarray(traj.norms[quantity_name], dtype=float)
    lo, hi = window or (t[0], t[-1])
    sel = (t >= lo) & (t <= hi)
    ts, qs = t[sel], q[sel]
    if ts.size < 2:
        raise ValueError("fit window contains fewer than two samples")
    if np.any(qs <= 0):
        raise ValueError(f"nonpositive samples of {quantity_name} in the fit window")
    y = np.log(qs)
    slope, intercept = np.polyfit(ts, y, 1)
    pred = intercept + slope * ts
    ss_res = float(((y - pred) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    inc = np.nonzero(np.diff(q) > 0)[0]
    monotone_after = float(t[inc[-1] + 1]) if inc.size else float(t[0])
    return DecayFit((float(lo), float(hi)), float(-slope), float(r2), monotone_after, float(slope),
                    float(intercept), math.sqrt(ss_res / ts.size))


def stepwise_entropy_dissipation(traj: TrajectoryRecord, functional, rate: float, tol: float = 1e-6) -> tuple:
    """Check ``F(t_{j+1}) <= exp(-rate dt) F(t_j) (1 + tol)`` for every sample pair.

    ``functional`` is a trace name or a callable on states. Returns
    ``(ok, worst)`` where ``worst`` is the largest ``F(t_{j+1}) / (exp(-rate dt) F(t_j))``.
    """
    if isinstance(functional, str):
        vals = np.asarray(traj.norms[functional], dtype=float)
    else:
        if traj.states is None:
            raise ValueError("trajectory has no stored states")
        vals = np.array([functional(s) for s in traj.states])
    t = traj.times
    worst = 0.0
    for j in range(len(t) - 1):
        bound = math.exp(-rate * (t[j + 1] - t[j])) * vals[j]
        if bound == 0 and vals[j + 1] == 0:
            continue
        if bound <= 0:
            return False, math.inf
        worst = max(worst, float(vals[j + 1] / bound))
    return bool(worst <= 1 + tol), worst


# ---------------------------------------------------------------------------
# dissipativity of B in weighted spaces


@dataclass(frozen=True)
class DissipativityProbe:
    p: float
    a: float
    rayleigh_max: float
    fd_worst: float
    passed: bool

    def to_dict(self) -> dict:
        return asdict(self)


def rayleigh_weighted(grid: GridConfig, w: Weight, M: float, R: float, order: int | None = None) -> float:
    """Largest generalized eigenvalue of the ``L^2(m)`` form of the velocity part of ``B``.

    For densities ``F = mu P`` and ``W = mu m^2``,
    ``<(-L - M chi_R) F, F>_{L^2(m)} = -int mu W |grad P|^2 - int mu W g P v.grad P - M int chi_R mu W P^2``
    with ``g = -1 + 2 grad m/m . v / |v|^2``. Transport and magnetic parts have zero
    symmetric part in ``L^2(m)`` and are checked separately.
    """
    s = 2.0 * (1.0 - w.theta)
    order = order or (grid.n_v + int(math.ceil(w.k)) + (48 if grid.d_v == 2 else 24))
    nodes, logw = hermite.gauss_hermite(grid.d_v, order, s)
    d = grid.d_v
    r2 = (nodes**2).sum(axis=1)
    lw = logw - d * (1 - w.theta) * np.log(2 * np.pi) + w.k * np.log1p(r2)
    om = np.exp(lw)
    V = hermite.basis_values(grid.alphas, nodes)
    Gr = hermite.basis_gradient(grid.alphas, nodes)
    g = -1.0 + 2.0 * (w.k / (1 + r2) + w.theta)
    vgrad = sum(nodes[:, j][:, None] * Gr[j] for j in range(d))
    Gm = (V * om[:, None]).T @ V
    K = sum((Gr[j] * om[:, None]).T @ Gr[j] for j in range(d))
    Cg = (V * (om * g)[:, None]).T @ vgrad
    Ach = (V * (om * M * cutoff(np.sqrt(r2) / R))[:, None]).T @ V
    Q = -K - 0.5 * (Cg + Cg.T) - Ach
    Q = 0.5 * (Q + Q.T)
    Gm = 0.5 * (Gm + Gm.T)
    # orthonormalize against the Gram matrix for a stable pencil
    lam, U = np.linalg.eigh(Gm)
    keep = lam > lam.max() * 1e-14
    T = U[:, keep] / np.sqrt(lam[keep])
    return float(np.linalg.eigvalsh(T.T @ Q @ T).max())


def lp_m_dissipativity_probe(bundle: SplitBundle, w: Weight, p: float, a: float, n_trials: int = 20,
                             rng: np.random.Generator | None = None, tol: float = 1e-8,
                             h: float = 1e-4) -> DissipativityProbe:
    """Check that ``B - a`` is dissipative in ``L^p(m)``.

    For ``p = 2`` the Rayleigh bound of :func:`rayleigh_weighted` must not
    exceed ``a + tol``. For every ``p`` a central finite difference of
    ``t -> ||S_B(t) F||_{L^p(m)}`` at ``t = 0`` must not exceed
    ``(a + tol) ||F||`` on ``n_trials`` random smooth densities.

    Raises
    ------
    ValueError
        If ``a <= a_{m,p}``.
    """
    grid = bundle.grid
    lim = a_mp_limit(w, p, grid.d_v)
    if not a > lim:
        raise ValueError(f"inadmissible rate a={a}: must exceed a_mp={lim}")
    rng = rng or np.random.default_rng(0)
    ray = rayleigh_weighted(grid, w, bundle.M, bundle.R) if p == 2 else math.nan
    SB = semigroup(bundle.B)
    worst = -math.inf
    for _ in range(n_trials):
        F = random_state(grid, rng, frame=bundle.B.frame, decay=0.35, margin=2, x_margin=1)
        n0 = norm_lp_m(F, w, p)
        plus = FieldState.from_vector(grid, F.frame, SB(h, F.vector))
        minus = FieldState.from_vector(grid, F.frame, SB(-h, F.vector))
        deriv = (norm_lp_m(plus, w, p) - norm_lp_m(minus, w, p)) / (2 * h)
        worst = max(worst, deriv / n0)
    ok = worst <= a + tol and (p != 2 or ray <= a + tol)
    return DissipativityProbe(p, a, ray, float(worst), bool(ok))


# ---------------------------------------------------------------------------
# the two compact identities for the field-gradient terms (d_v = 3)


def lemma_identities(f: FieldState, B: MagneticField, order: int | None = None) -> dict:
    """Both sides of the field-gradient identities, by direct quadrature.

    i.  ``sum_j <(v ^ d_j B).grad_v f, d_{v_j} f> = <curl_v G, grad_v f>``,
        ``G_b = sum_j d_j B_b d_{v_j} f``;
    ii. ``sum_j <(v ^ d_j B).grad_v f, d_{x_j} f> = <curl_v H, grad_v f>``,
        ``H_b = sum_j d_j B_b d_{x_j} f``.

    Inner products are in ``L^2(dx dmu)``; ``j`` runs over spatial axes.
    """
    g = f.grid
    if g.d_v != 3:
        raise ValueError("the curl identities need d_v = 3")
    order = order or (g.n_v + 4)
    n_pts = 2 * g.n_x + 1
    nodes, logw = hermite.gauss_hermite(3, order, 1.0)
    wts = np.exp(logw) / (2 * np.pi) ** 1.5
    basis = hermite.basis_values(g.alphas, nodes)
    dv = [derivative_v(g, j).matrix for j in range(3)]

    def ev(vec):
        c = vec.reshape(g.shape)
        return (to_physical(c, g.d_x, n_pts).reshape(-1, g.n_alpha) @ basis.T).real

    c = f.vector
    gv = [ev(dv[a] @ c) for a in range(3)]
    hess = [[ev(dv[a] @ (dv[b] @ c)) for b in range(3)] for a in range(3)]
    gx = []
    for j in range(g.d_x):
        cx = (f.blocks * (1j * g.freqs[:, j])[:, None]).reshape(-1)
        gx.append(ev(cx))
    gxv = [[ev(dv[a] @ (f.blocks * (1j * g.freqs[:, j])[:, None]).reshape(-1)) for a in range(3)]
           for j in range(g.d_x)]
    dB = B.gradient_coeffs()
    dBx = [np.moveaxis(to_physical(np.moveaxis(dB[j], 0, -1), g.d_x, n_pts).real, -1, 0).reshape(3, -1)
           for j in range(g.d_x)]
    v = nodes

    def wedge_dot(Bv, grad):
        # (v ^ Bv) . grad with Bv of shape (3, n_x_pts) and grad list of (n_x_pts, n_v_pts)
        out = 0.0
        for i in range(3):
            a, b = (i + 1) % 3, (i + 2) % 3
            comp = v[None, :, a] * Bv[b][:, None] - v[None, :, b] * Bv[a][:, None]
            out = out + comp * grad[i]
        return out

    def integ(x):
        return float((x * wts[None, :]).sum() / x.shape[0])

    lhs1 = sum(integ(wedge_dot(dBx[j], gv) * gv[j]) for j in range(g.d_x))
    lhs2 = sum(integ(wedge_dot(dBx[j], gv) * gx[j]) for j in range(g.d_x))
    rhs1 = rhs2 = 0.0
    for k in range(3):
        a, b = (k + 1) % 3, (k + 2) % 3
        # (curl G)_k = d_a G_b - d_b G_a
        cg = sum(dBx[j][b][:, None] * hess[a][j] - dBx[j][a][:, None] * hess[b][j] for j in range(g.d_x))
        ch = sum(dBx[j][b][:, None] * gxv[j][a] - dBx[j][a][:, None] * gxv[j][b] for j in range(g.d_x))
        rhs1 += integ(cg * gv[k])
        rhs2 += integ(ch * gv[k])
    return {"i": (lhs1, rhs1), "ii": (lhs2, rhs2)}
