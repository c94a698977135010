"""Sparse coefficient-space operators and their algebraic verifiers.

Coefficient vectors are Fourier-major: entry ``f * n_alpha + a`` holds the
coefficient of ``e^{i xi_f x} phi_{alpha_a}(v)``. Every operator is a sum of
Kronecker products ``X (x) V`` with ``X`` acting on Fourier modes and ``V`` on
Hermite modes.

The equation in the Perturbation frame reads
``d_t f = -v.grad_x f + (v ^ B).grad_v f - L f`` with ``L = (-grad_v + v).grad_v``.
The same coefficient matrix propagates the Original and Flat frames.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from . import hermite
from .field import (BandError, FieldState, Frame, FrameError, GridConfig, MagneticField,
                    Weight, density_coeffs, to_physical)

__all__ = [
    "Symmetry",
    "LinearOperatorRep",
    "SplitBundle",
    "LyapunovReport",
    "ALedger",
    "SplittingSearch",
    "assemble_collision",
    "assemble_transport",
    "assemble_magnetic",
    "assemble_generator",
    "assemble_splitting",
    "derivative_v",
    "derivative_x",
    "multiply_v",
    "creation",
    "field_wedge_grad",
    "identity",
    "commutator",
    "commutator_checks",
    "cutoff",
    "psi_lyapunov",
    "psi_values",
    "a_mp_limit",
    "search_splitting",
    "a_ledger",
    "nonpositivity_check",
    "weighted_gram",
]

SYMMETRY_TOL = 1e-12


class Symmetry(enum.Enum):
    SELF_ADJOINT = "self_adjoint"
    SKEW_ADJOINT = "skew_adjoint"
    NONE = "none"


def _defect(m: sp.spmatrix, sign: int) -> float:
    d = m + sign * m.conj().T
    return float(abs(d).max()) if d.nnz else 0.0


@dataclass(frozen=True, eq=False)
class LinearOperatorRep:
    """Immutable sparse operator on the coefficient space of a grid.

    The declared ``symmetry`` is verified on construction against
    ``SYMMETRY_TOL`` in the orthonormal coefficient basis.
    """

    grid: GridConfig
    frame: Frame
    matrix: sp.csr_matrix
    symmetry: Symmetry = Symmetry.NONE
    label: str = ""

    def __post_init__(self):
        m = sp.csr_matrix(self.matrix, dtype=complex)
        if m.shape != (self.grid.size, self.grid.size):
            raise ValueError(f"matrix shape {m.shape} incompatible with grid size {self.grid.size}")
        m.eliminate_zeros()
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "frame", Frame(self.frame))
        object.__setattr__(self, "symmetry", Symmetry(self.symmetry))
        if self.symmetry is Symmetry.SKEW_ADJOINT and _defect(m, +1) > SYMMETRY_TOL:
            raise ValueError(f"{self.label}: declared skew-adjoint, defect {_defect(m, +1):.3e}")
        if self.symmetry is Symmetry.SELF_ADJOINT and _defect(m, -1) > SYMMETRY_TOL:
            raise ValueError(f"{self.label}: declared self-adjoint, defect {_defect(m, -1):.3e}")

    # -- structure -------------------------------------------------------
    @cached_property
    def fourier_diagonal(self) -> bool:
        """True when the operator does not couple distinct Fourier modes."""
        c = self.matrix.tocoo()
        na = self.grid.n_alpha
        return bool(np.all(c.row // na == c.col // na))

    def skew_defect(self) -> float:
        """``max |M + M^*|``."""
        return _defect(self.matrix, +1)

    def self_defect(self) -> float:
        """``max |M - M^*|``."""
        return _defect(self.matrix, -1)

    def hermitian_part(self) -> "LinearOperatorRep":
        m = 0.5 * (self.matrix + self.matrix.conj().T)
        return LinearOperatorRep(self.grid, self.frame, m, Symmetry.SELF_ADJOINT, f"herm({self.label})")

    def skew_part(self) -> "LinearOperatorRep":
        m = 0.5 * (self.matrix - self.matrix.conj().T)
        return LinearOperatorRep(self.grid, self.frame, m, Symmetry.SKEW_ADJOINT, f"skew({self.label})")

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def block(self, f: int = 0) -> np.ndarray:
        """Dense Hermite block on the diagonal for Fourier mode ``f``."""
        na = self.grid.n_alpha
        return self.matrix[f * na:(f + 1) * na, f * na:(f + 1) * na].toarray()

    # -- algebra ---------------------------------------------------------
    def _compat(self, other: "LinearOperatorRep"):
        if other.grid != self.grid:
            raise ValueError("grid mismatch")
        if other.frame != self.frame:
            raise FrameError("frame mismatch")

    def apply(self, state: FieldState) -> FieldState:
        if state.grid != self.grid:
            raise ValueError("grid mismatch")
        if state.frame != self.frame:
            raise FrameError(f"operator in {self.frame.value} frame applied to {state.frame.value} state")
        return FieldState.from_vector(self.grid, self.frame, self.matrix @ state.vector)

    def __matmul__(self, other):
        if isinstance(other, FieldState):
            return self.apply(other)
        self._compat(other)
        return LinearOperatorRep(self.grid, self.frame, self.matrix @ other.matrix, Symmetry.NONE,
                                 f"{self.label}*{other.label}")

    def _combine(self, other, sign, sym_label):
        self._compat(other)
        m = self.matrix + sign * other.matrix
        sym = self.symmetry if self.symmetry == other.symmetry else Symmetry.NONE
        return LinearOperatorRep(self.grid, self.frame, m, sym, sym_label)

    def __add__(self, other):
        return self._combine(other, 1, f"{self.label}+{other.label}")

    def __sub__(self, other):
        return self._combine(other, -1, f"{self.label}-{other.label}")

    def __neg__(self):
        return LinearOperatorRep(self.grid, self.frame, -self.matrix, self.symmetry, f"-{self.label}")

    def scale(self, s: float) -> "LinearOperatorRep":
        """Multiply by a real scalar (keeps the symmetry class)."""
        return LinearOperatorRep(self.grid, self.frame, s * self.matrix, self.symmetry, f"{s:g}*{self.label}")

    def adjoint(self) -> "LinearOperatorRep":
        return LinearOperatorRep(self.grid, self.frame, self.matrix.conj().T.tocsr(), self.symmetry,
                                 f"({self.label})^*")

    def with_frame(self, frame: Frame) -> "LinearOperatorRep":
        return LinearOperatorRep(self.grid, frame, self.matrix, self.symmetry, self.label)

    def with_label(self, label: str) -> "LinearOperatorRep":
        return LinearOperatorRep(self.grid, self.frame, self.matrix, self.symmetry, label)


# ---------------------------------------------------------------------------
# building blocks


def _fourier_identity(grid: GridConfig) -> sp.csr_matrix:
    return sp.identity(grid.n_fourier, dtype=complex, format="csr")


def _fourier_derivative(grid: GridConfig, j: int) -> sp.csr_matrix:
    return sp.diags(1j * grid.freqs[:, j].astype(float), format="csr")


def _fourier_multiplier(grid: GridConfig, coeffs: np.ndarray) -> sp.csr_matrix:
    """Galerkin matrix of multiplication by a torus function, ``T[xi, eta] = c(xi - eta)``."""
    h = grid.half_band
    nb = coeffs.shape[0]
    hb = (nb - 1) // 2
    freqs = grid.freqs
    rows, cols, vals = [], [], []
    for idx in zip(*np.nonzero(coeffs)):
        kappa = np.array(idx) - hb
        if np.any(np.abs(kappa) > 2 * h):
            continue
        eta = freqs - kappa
        ok = np.all(np.abs(eta) <= h, axis=1)
        src = np.nonzero(ok)[0]
        tgt = np.ravel_multi_index(tuple((eta[ok] + h).T), (grid.n_x,) * grid.d_x)
        rows.append(src)
        cols.append(tgt)
        vals.append(np.full(src.size, coeffs[idx]))
    if not rows:
        return sp.csr_matrix((grid.n_fourier, grid.n_fourier), dtype=complex)
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(grid.n_fourier, grid.n_fourier))


def _kron(x: sp.spmatrix, v: sp.spmatrix) -> sp.csr_matrix:
    return sp.kron(x, v, format="csr")


def _v_only(grid: GridConfig, v: sp.spmatrix) -> sp.csr_matrix:
    return _kron(_fourier_identity(grid), v)


# ---------------------------------------------------------------------------
# elementary operators


def identity(grid: GridConfig, frame: Frame = Frame.PERTURBATION) -> LinearOperatorRep:
    return LinearOperatorRep(grid, frame, sp.identity(grid.size, dtype=complex, format="csr"),
                             Symmetry.SELF_ADJOINT, "I")


def derivative_v(grid: GridConfig, j: int, frame: Frame = Frame.PERTURBATION) -> LinearOperatorRep:
    """``d/dv_j`` acting on the Hermite factor."""
    return LinearOperatorRep(grid, frame, _v_only(grid, hermite.deriv_matrix(grid.d_v, grid.n_v, j)),
                             Symmetry.NONE, f"dv{j + 1}")


def multiply_v(grid: GridConfig, j: int, frame: Frame = Frame.PERTURBATION) -> LinearOperatorRep:
    return LinearOperatorRep(grid, frame, _v_only(grid, hermite.mult_matrix(grid.d_v, grid.n_v, j)),
                             Symmetry.SELF_ADJOINT, f"v{j + 1}")


def creation(grid: GridConfig, j: int, frame: Frame = Frame.PERTURBATION) -> LinearOperatorRep:
    """``-d/dv_j + v_j``, the ``L^2(dmu)`` adjoint of ``d/dv_j``."""
    return LinearOperatorRep(grid, frame, _v_only(grid, hermite.creation_matrix(grid.d_v, grid.n_v, j)),
                             Symmetry.NONE, f"a+{j + 1}")


def derivative_x(grid: GridConfig, j: int, frame: Frame = Frame.PERTURBATION) -> LinearOperatorRep:
    eye = sp.identity(grid.n_alpha, format="csr")
    return LinearOperatorRep(grid, frame, _kron(_fourier_derivative(grid, j), eye),
                             Symmetry.SKEW_ADJOINT, f"dx{j + 1}")


def _check_field(grid: GridConfig, B: MagneticField):
    if B.d_v != grid.d_v or B.d_x != grid.d_x:
        raise ValueError("magnetic field dimensions do not match the grid")
    if B.n_x > grid.n_x:
        h = (B.n_x - 1) // 2
        mask = np.ones(B.coeffs.shape[1:], dtype=bool)
        inner = tuple(slice(h - grid.half_band, h + grid.half_band + 1) for _ in range(grid.d_x))
        mask[inner] = False
        if np.any(B.coeffs[:, mask]):
            raise BandError("magnetic field has modes outside the grid band")


def field_wedge_grad(grid: GridConfig, B: MagneticField, i: int,
                     frame: Frame = Frame.PERTURBATION) -> LinearOperatorRep:
    """Component ``i`` of ``(B ^ grad_v)``.

    ``(B ^ grad)_1 = B_2 d_3 - B_3 d_2`` and cyclic; for ``d_v = 2`` the
    field is ``(0, 0, b)`` so ``(B ^ grad)_1 = -b d_2``, ``(B ^ grad)_2 = b d_1``.
    """
    _check_field(grid, B)
    d, n = grid.d_v, grid.n_v
    D = [hermite.deriv_matrix(d, n, j) for j in range(d)]
    if d == 2:
        T = _fourier_multiplier(grid, B.coeffs[0])
        v = -D[1] if i == 0 else D[0]
        m = _kron(T, v)
    else:
        a, b = (i + 1) % 3, (i + 2) % 3
        m = _kron(_fourier_multiplier(grid, B.coeffs[a]), D[b]) - _kron(_fourier_multiplier(grid, B.coeffs[b]), D[a])
    return LinearOperatorRep(grid, frame, m, Symmetry.NONE, f"(B^grad)_{i + 1}")


# ---------------------------------------------------------------------------
# the equation's operators


def assemble_collision(grid: GridConfig, frame: Frame = Frame.PERTURBATION) -> LinearOperatorRep:
    """``L = (-grad_v + v).grad_v``: diagonal with entries ``|alpha|``."""
    return LinearOperatorRep(grid, frame, _v_only(grid, hermite.number_matrix(grid.d_v, grid.n_v)),
                             Symmetry.SELF_ADJOINT, "L")


def assemble_transport(grid: GridConfig, frame: Frame = Frame.PERTURBATION) -> LinearOperatorRep:
    """``v . grad_x`` (skew-adjoint)."""
    m = sp.csr_matrix((grid.size, grid.size), dtype=complex)
    for j in range(grid.d_x):
        m = m + _kron(_fourier_derivative(grid, j), hermite.mult_matrix(grid.d_v, grid.n_v, j))
    return LinearOperatorRep(grid, frame, m, Symmetry.SKEW_ADJOINT, "v.grad_x")


def assemble_magnetic(grid: GridConfig, B: MagneticField, frame: Frame = Frame.PERTURBATION) -> LinearOperatorRep:
    """``(v ^ B) . grad_v = sum_k B_k(x) R_k`` (skew-adjoint, degree preserving)."""
    _check_field(grid, B)
    m = sp.csr_matrix((grid.size, grid.size), dtype=complex)
    comps = [2] if grid.d_v == 2 else [0, 1, 2]
    for c, k in enumerate(comps):
        if not np.any(B.coeffs[c]):
            continue
        m = m + _kron(_fourier_multiplier(grid, B.coeffs[c]), hermite.rotation_matrix(grid.d_v, grid.n_v, k))
    return LinearOperatorRep(grid, frame, m, Symmetry.SKEW_ADJOINT, "(v^B).grad_v")


def assemble_generator(grid: GridConfig, B: MagneticField, frame: Frame = Frame.PERTURBATION) -> LinearOperatorRep:
    """The evolution generator ``-P_1 = -v.grad_x + (v ^ B).grad_v - L``.

    In the Original frame the same coefficient matrix represents ``-P_0``
    acting on ``F = mu sum c phi``; in the Flat frame it represents ``-P_{1/2}``.
    """
    T = assemble_transport(grid, frame)
    G = assemble_magnetic(grid, B, frame)
    L = assemble_collision(grid, frame)
    m = -T.matrix + G.matrix - L.matrix
    name = {Frame.PERTURBATION: "-P1", Frame.ORIGINAL: "-P0", Frame.FLAT: "-P1/2"}[Frame(frame)]
    return LinearOperatorRep(grid, frame, m, Symmetry.NONE, name)


def commutator(P: LinearOperatorRep, Q: LinearOperatorRep) -> LinearOperatorRep:
    """``PQ - QP``."""
    P._compat(Q)
    m = P.matrix @ Q.matrix - Q.matrix @ P.matrix
    return LinearOperatorRep(P.grid, P.frame, m, Symmetry.NONE, f"[{P.label},{Q.label}]")


def commutator_checks(grid: GridConfig, B: MagneticField, states: Sequence[FieldState]) -> dict:
    """Largest defect of the four commutator identities over ``states``.

    1. ``[d_{v_i}, v.grad_x] = d_{x_i}``
    2. ``[d_{v_i}, -d_{v_j} + v_j] = delta_ij``
    3. ``[d_{v_i}, (v ^ B).grad_v] = (B ^ grad_v)_i``
    4. ``[d_{x_j}, (v ^ B).grad_v] = (v ^ d_{x_j} B).grad_v``

    States should vanish in the top two Hermite degrees so that the
    truncation does not enter. Defects are relative to the state norm.
    """
    T = assemble_transport(grid)
    G = assemble_magnetic(grid, B)
    I = identity(grid)
    out = {1: 0.0, 2: 0.0, 3: 0.0, 4: 0.0}
    dv = [derivative_v(grid, i) for i in range(grid.d_v)]
    ap = [creation(grid, j) for j in range(grid.d_v)]
    dx = [derivative_x(grid, j) for j in range(grid.d_x)]
    pairs = []
    for i in range(grid.d_v):
        rhs = dx[i] if i < grid.d_x else None
        pairs.append((1, commutator(dv[i], T), rhs))
        for j in range(grid.d_v):
            pairs.append((2, commutator(dv[i], ap[j]), I if i == j else None))
        pairs.append((3, commutator(dv[i], G), field_wedge_grad(grid, B, i)))
    for j in range(grid.d_x):
        pairs.append((4, commutator(dx[j], G), assemble_magnetic(grid, B.derivative(j))))
    for s in states:
        nrm = max(s.l2(), 1e-300)
        for key, lhs, rhs in pairs:
            a = lhs.matrix @ s.vector
            b = rhs.matrix @ s.vector if rhs is not None else 0.0
            out[key] = max(out[key], float(np.max(np.abs(a - b))) / nrm)
    return out


# ---------------------------------------------------------------------------
# splitting


def cutoff(s: np.ndarray) -> np.ndarray:
    """Radial C^2 cutoff: 1 on [0, 1], 0 on [2, inf), quintic smoothstep between."""
    s = np.asarray(s, dtype=float)
    t = np.clip(s - 1.0, 0.0, 1.0)
    return 1.0 - t**3 * (10 - 15 * t + 6 * t**2)


def _galerkin_order(grid: GridConfig) -> int:
    return grid.n_v + (48 if grid.d_v == 2 else 24)


def galerkin_velocity_multiplier(grid: GridConfig, func, order: int | None = None) -> np.ndarray:
    """Dense Hermite block of ``int func(v) phi_a phi_b dmu`` (symmetric)."""
    order = order or _galerkin_order(grid)
    nodes, logw = hermite.gauss_hermite(grid.d_v, order, 1.0)
    w = np.exp(logw) / (2 * np.pi) ** (grid.d_v / 2) * func(nodes)
    V = hermite.basis_values(grid.alphas, nodes)
    A = (V * w[:, None]).T @ V
    return 0.5 * (A + A.T)


@dataclass(frozen=True, eq=False)
class SplitBundle:
    """Splitting ``L0 = A + B`` with ``A`` the Galerkin multiplier by ``M chi_R``."""

    L0: LinearOperatorRep
    A: LinearOperatorRep
    B: LinearOperatorRep
    M: float
    R: float
    chi: str = "quintic smoothstep, 1 on |v|<=R, 0 on |v|>=2R"
    A_block: np.ndarray = field(default=None, repr=False)

    @property
    def grid(self) -> GridConfig:
        return self.L0.grid

    def split_defect(self) -> float:
        d = self.L0.matrix - self.A.matrix - self.B.matrix
        return float(abs(d).max()) if d.nnz else 0.0

    def a_norm(self) -> float:
        """Operator norm of ``A`` in ``L^2(dx dmu)`` (largest block eigenvalue)."""
        return float(np.max(np.abs(np.linalg.eigvalsh(self.A_block))))

    def outside_support_ratio(self, state: FieldState, order: int | None = None) -> float:
        """``max_{|v| >= 2R} |A F| / max |A F|`` over quadrature nodes (density values)."""
        g = self.grid
        order = order or g.quad_order
        nodes, _ = hermite.gauss_hermite(g.d_v, order, 1.0)
        mu = np.exp(-0.5 * (nodes**2).sum(axis=1)) / (2 * np.pi) ** (g.d_v / 2)
        AF = self.A.apply(state)
        phys = to_physical(AF.coeffs, g.d_x, 2 * g.n_x).reshape(-1, g.n_alpha)
        vals = np.abs((phys @ hermite.basis_values(g.alphas, nodes).T).real) * mu[None, :]
        far = np.sqrt((nodes**2).sum(axis=1)) >= 2 * self.R
        top = vals.max()
        if top == 0 or not np.any(far):
            return 0.0
        return float(vals[:, far].max() / top)

    def to_dict(self) -> dict:
        return {"M": self.M, "R": self.R, "chi": self.chi, "A_norm": self.a_norm(),
                "split_defect": self.split_defect()}


def assemble_splitting(grid: GridConfig, B: MagneticField, w: Weight | None = None, p: float = 2.0,
                       M: float | None = None, R: float | None = None, a: float | None = None,
                       frame: Frame = Frame.PERTURBATION) -> SplitBundle:
    """Split the generator into ``A = Galerkin(M chi_R)`` and ``B = L0 - A``.

    When ``M`` or ``R`` is omitted they are chosen by :func:`search_splitting`
    for the target rate ``a`` (default: halfway between ``a_{m,p}`` and 0).
    """
    if M is None or R is None:
        if w is None:
            raise ValueError("automatic M, R selection needs a weight")
        lim = a_mp_limit(w, p, grid.d_v)
        if a is None:
            if not np.isfinite(lim) or lim >= 0:
                raise ValueError(f"no admissible rate: a_mp = {lim}")
            a = 0.5 * lim
        res = search_splitting(w, p, a, grid)
        if not res.success:
            raise ValueError(f"splitting search failed: {res.reason}")
        M, R = res.M, res.R
    if M <= 0 or R <= 1:
        raise ValueError("splitting requires M > 0 and R > 1")
    L0 = assemble_generator(grid, B, frame)
    Av = M * galerkin_velocity_multiplier(grid, lambda v: cutoff(np.sqrt((v**2).sum(axis=1)) / R))
    A = LinearOperatorRep(grid, frame, _v_only(grid, sp.csr_matrix(Av)), Symmetry.SELF_ADJOINT, "A")
    Bop = LinearOperatorRep(grid, frame, L0.matrix - A.matrix, Symmetry.NONE, "B")
    return SplitBundle(L0, A, Bop, float(M), float(R), A_block=Av)


# ---------------------------------------------------------------------------
# Lyapunov function Psi_{m,p}


def psi_values(w: Weight, p: float, v: np.ndarray, printed_sign: bool = False) -> np.ndarray:
    """``Psi_{m,p}(v) = (p-1)|grad m|^2/m^2 + Delta m/m + (1-1/p) div K - K.grad m/m``.

    The velocity part of the equation is ``Delta F + div(K F)`` with
    ``K = v - v ^ B``, so ``div K = d`` and ``K . grad m = v . grad m`` for
    radial ``m``; the magnetic part drops out. ``printed_sign=True``
    flips the sign of the drift term for comparison.
    """
    v = np.atleast_2d(v)
    d = v.shape[1]
    gl = w.grad_log(v)
    drift = (v * gl).sum(axis=1)
    s = -1.0 if printed_sign else 1.0
    return (p - 1) * (gl**2).sum(axis=1) + w.laplacian_ratio(v) + (1 - 1 / p) * d - s * drift


def a_mp_limit(w: Weight, p: float, d_v: int) -> float:
    """``limsup_{|v| -> inf} Psi_{m,p}`` in closed form."""
    k, th = w.k, w.theta
    if th == 0:
        return d_v * (1 - 1 / p) - k
    lead = th * (p * th - 1)
    if lead < 0:
        return -math.inf
    if lead > 0:
        return math.inf
    return th * d_v + (1 - 1 / p) * d_v + k


@dataclass(frozen=True)
class ALedger:
    """The six rate values of the weighted Sobolev analysis and their gates."""

    a_m1: tuple
    a_m2: tuple
    hyp5: bool
    hyp6: bool
    hyp2: bool | None
    gates: dict

    @property
    def values(self) -> tuple:
        return self.a_m1 + self.a_m2

    @property
    def worst(self) -> float:
        return max(self.values)

    def violated(self) -> list:
        out = []
        if not self.hyp5:
            out.append(f"k > 7/2 + |B|_inf (needs k > {self.gates['hyp5']:.6g})")
        if not self.hyp6:
            out.append(f"k > 5 + max(|B|_inf, |grad B|_inf / 2) (needs k > {self.gates['hyp6']:.6g})")
        if self.hyp2 is False:
            out.append(f"k > 3(1-1/p) + 7/2 + max(|B|_inf, |grad B|_inf / 2) (needs k > {self.gates['hyp2']:.6g})")
        return out

    def to_dict(self) -> dict:
        return {"a_m1": list(self.a_m1), "a_m2": list(self.a_m2), "hyp5": self.hyp5,
                "hyp6": self.hyp6, "hyp2": self.hyp2, "gates": self.gates}


def a_ledger(w: Weight, B: MagneticField, p: float | None = None) -> ALedger:
    """Rate ledger for polynomial weights, with the three-dimensional constants as stated.

    ``a_m1 = (-k-1, -k+7/2+|B|, -k+1/2)`` and
    ``a_m2 = (3/2-k-1+|grad B|/2, 3/2-k+7/2+|B|, 3/2-k+1)``.
    """
    if w.kind != "polynomial":
        raise ValueError("the rate ledger is defined for polynomial weights only")
    k = w.k
    b, gb = B.sup_norm, B.grad_sup_norm
    a1 = (-k - 1, -k + 3.5 + b, -k + 0.5)
    a2 = (1.5 - k - 1 + 0.5 * gb, 1.5 - k + 3.5 + b, 1.5 - k + 1)
    gates = {"hyp5": 3.5 + b, "hyp6": 5 + max(b, 0.5 * gb)}
    hyp2 = None
    if p is not None:
        gates["hyp2"] = 3 * (1 - 1 / p) + 3.5 + max(b, 0.5 * gb)
        hyp2 = bool(k > gates["hyp2"])
    return ALedger(a1, a2, bool(k > gates["hyp5"]), bool(k > gates["hyp6"]), hyp2, gates)


@dataclass(frozen=True)
class LyapunovReport:
    weight: Weight
    p: float
    psi_sup_outside: float
    a_mp_limit: float
    a_ledger: ALedger | None
    admissible: bool
    M: float = 0.0
    R: float = 0.0
    sign_convention: str = "drift term -K.grad m/m (corrected sign)"

    def to_dict(self) -> dict:
        return {"weight": self.weight.to_dict(), "p": self.p, "psi_sup_outside": self.psi_sup_outside,
                "a_mp_limit": self.a_mp_limit, "admissible": self.admissible, "M": self.M, "R": self.R,
                "a_ledger": self.a_ledger.to_dict() if self.a_ledger else None,
                "sign_convention": self.sign_convention}


def _psi_probe_points(grid: GridConfig, R: float) -> np.ndarray:
    nodes, _ = hermite.gauss_hermite(grid.d_v, grid.quad_order, 1.0)
    rmax = max(8.0 * R, float(np.sqrt((nodes**2).sum(axis=1)).max()), 50.0)
    radial = np.zeros((4001, grid.d_v))
    radial[:, 0] = np.linspace(0.0, rmax, 4001)
    return np.vstack([nodes, radial])


def psi_lyapunov(w: Weight, p: float, grid: GridConfig, M: float = 0.0, R: float = 2.0,
                 B: MagneticField | None = None, printed_sign: bool = False) -> LyapunovReport:
    """Evaluate ``Psi_{m,p} - M chi_R`` on quadrature nodes plus a dense radial grid.

    ``admissible`` is True when ``a_{m,p} < 0`` (the large-velocity sign
    condition), which for ``<v>^k`` means ``k > d_v (1 - 1/p)``.
    """
    pts = _psi_probe_points(grid, R)
    r = np.sqrt((pts**2).sum(axis=1))
    vals = psi_values(w, p, pts, printed_sign) - M * cutoff(r / R)
    lim = a_mp_limit(w, p, grid.d_v)
    if printed_sign and w.theta == 0:
        lim = grid.d_v * (1 - 1 / p) + w.k
    ledger = a_ledger(w, B, p) if (B is not None and w.kind == "polynomial") else None
    return LyapunovReport(w, p, float(vals.max()), float(lim), ledger, bool(lim < 0), M, R,
                          "drift term +K.grad m/m (as printed)" if printed_sign else
                          "drift term -K.grad m/m (corrected sign)")


@dataclass(frozen=True)
class SplittingSearch:
    M: float
    R: float
    sup: float
    success: bool
    history: tuple
    reason: str = ""


def search_splitting(w: Weight, p: float, a: float, grid: GridConfig, M0: float = 1.0, R0: float = 2.0,
                     max_iter: int = 40) -> SplittingSearch:
    """Doubling search for ``M, R`` with ``sup (Psi_{m,p} - M chi_R) <= a``.

    At each step the location of the worst violation decides what to double:
    ``M`` when the cutoff is at least 1/2 there, ``R`` otherwise.
    """
    lim = a_mp_limit(w, p, grid.d_v)
    if not a > lim:
        return SplittingSearch(M0, R0, math.inf, False, (), f"target a={a} does not exceed a_mp={lim}")
    M, R = float(M0), float(R0)
    hist = []
    for _ in range(max_iter):
        pts = _psi_probe_points(grid, R)
        r = np.sqrt((pts**2).sum(axis=1))
        chi = cutoff(r / R)
        vals = psi_values(w, p, pts) - M * chi
        i = int(np.argmax(vals))
        sup = float(vals[i])
        hist.append((M, R, sup))
        if sup <= a:
            return SplittingSearch(M, R, sup, True, tuple(hist))
        if chi[i] >= 0.5:
            M *= 2
        else:
            R *= 2
    return SplittingSearch(M, R, hist[-1][2], False, tuple(hist), "iteration limit reached")


# ---------------------------------------------------------------------------
# weighted Gram matrices and the diffusion non-positivity integral


def weighted_gram(grid: GridConfig, w: Weight, order: int | None = None) -> np.ndarray:
    """Hermite block of ``<F, G>_{L^2(m)} = int F G m^2 dv`` for densities ``F = mu P``."""
    s = 2.0 * (1.0 - w.theta)
    if s <= 0:
        raise ValueError("weight too strong for an L^2(m) Gram matrix")
    order = order or (grid.n_v + int(math.ceil(w.k)) + 4)
    nodes, logw = hermite.gauss_hermite(grid.d_v, order, s)
    d = grid.d_v
    lw = logw - d * (1 - w.theta) * np.log(2 * np.pi) + w.k * np.log1p((nodes**2).sum(axis=1))
    V = hermite.basis_values(grid.alphas, nodes)
    G = (V * np.exp(lw)[:, None]).T @ V
    return 0.5 * (G + G.T)


def nonpositivity_check(g: FieldState, p: float, order: int | None = None, n_pts: int | None = None) -> float:
    """Quadrature value of ``int int (Delta_v g) |g|^{p-2} g dx dv``.

    ``g`` is the density represented by the state (``F`` for Original/Flat,
    ``F - mu`` for Perturbation). With ``g = mu P``,
    ``Delta_v g = mu (Delta P - 2 v.grad P + (|v|^2 - d) P)``.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    grid = g.grid
    order = order or (grid.quad_order + 24)
    n_pts = n_pts or 4 * grid.n_x
    d = grid.d_v
    nodes, logw = hermite.gauss_hermite(d, order, p)
    # mu^p = exp(-p|v|^2/2) (2 pi)^{-dp/2}
    wts = np.exp(logw - 0.5 * d * p * np.log(2 * np.pi))
    c = density_coeffs(g).reshape(grid.shape)
    phys = to_physical(c, grid.d_x, n_pts).reshape(-1, grid.n_alpha)
    V = hermite.basis_values(grid.alphas, nodes)
    Gr = hermite.basis_gradient(grid.alphas, nodes)
    Lap = hermite.basis_hessian_trace(grid.alphas, nodes)
    r2 = (nodes**2).sum(axis=1)
    vgrad = sum(nodes[:, j][:, None] * Gr[j] for j in range(d))
    lap_op = Lap - 2 * vgrad + (r2 - d)[:, None] * V
    P = (phys @ V.T).real
    LP = (phys @ lap_op.T).real
    integrand = LP * np.abs(P) ** (p - 1) * np.sign(P)
    return float((integrand * wts[None, :]).sum() / P.shape[0])
