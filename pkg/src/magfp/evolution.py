"""Time propagation, spectral projection, Duhamel factorization and semigroup convolutions."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .field import FieldState, Frame, GridConfig, Weight, convert_frame, norm_lp_m
from .operators import LinearOperatorRep, SplitBundle

__all__ = [
    "Scheme",
    "IntegratorConfig",
    "TrajectoryRecord",
    "StabilityError",
    "DimensionError",
    "evolve",
    "semigroup",
    "spectral_projection_pi0",
    "ConvolutionResult",
    "convolve",
    "convolution_power",
    "t_n_inductive",
    "t_n_direct",
    "duhamel_residual",
    "SmoothingProbe",
    "smoothing_probe",
    "convergence_order",
]

EXACT_MAX_DIM = 4000
STABILITY_LIMIT = 1.5


class StabilityError(ValueError):
    """The time step violates the explicit-stage stability guard."""


class DimensionError(ValueError):
    """The dense exponential would exceed the allowed dimension."""


class Scheme(enum.Enum):
    EXACT_SMALL = "exact_small"
    STRANG_IMEX = "strang_imex"


@dataclass(frozen=True)
class IntegratorConfig:
    """Time stepping parameters.

    Parameters
    ----------
    scheme : Scheme
        ``EXACT_SMALL`` uses a dense matrix exponential; ``STRANG_IMEX``
        takes exact half steps of the Hermitian (collision) part around an
        RK4 step of the skew part.
    dt, t_end : float
    record_every : int
        Sampling stride in steps.
    keep_states : bool
        Store the sampled states in the trajectory.
    """

    scheme: Scheme = Scheme.EXACT_SMALL
    dt: float = 0.1
    t_end: float = 1.0
    record_every: int = 1
    keep_states: bool = True

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.t_end < 0:
            raise ValueError("t_end must be nonnegative")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def to_dict(self) -> dict:
        return {"scheme": self.scheme.value, "dt": self.dt, "t_end": self.t_end,
                "record_every": self.record_every}


@dataclass
class TrajectoryRecord:
    """Sampled trajectory: times, optional states, named scalar traces and mass."""

    times: np.ndarray
    mass: np.ndarray
    norms: dict = field(default_factory=dict)
    states: list | None = None
    dt: float = 0.0
    scheme: str = ""

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    def mass_drift(self) -> float:
        """``max |<f(t)> - <f_0>|`` relative to ``max(1, |<f_0>|)``."""
        m0 = self.mass[0]
        return float(np.max(np.abs(self.mass - m0)) / max(1.0, abs(m0)))

    def add_trace(self, name: str, func: Callable[[FieldState], float]):
        if self.states is None:
            raise ValueError("trajectory has no stored states")
        self.norms[name] = np.array([func(s) for s in self.states])

    def columns(self) -> list:
        return ["t", "mass"] + list(self.norms)

    def rows(self):
        for i, t in enumerate(self.times):
            yield [t, self.mass[i]] + [self.norms[k][i] for k in self.norms]


# ---------------------------------------------------------------------------
# integrators


def _hermitian_block(op: LinearOperatorRep) -> np.ndarray:
    """Hermite block ``H_v`` with Hermitian part ``= I (x) H_v``; raises otherwise."""
    g = op.grid
    H = 0.5 * (op.matrix + op.matrix.conj().T)
    Hv = H[: g.n_alpha, : g.n_alpha].toarray()
    rest = H - sp.kron(sp.identity(g.n_fourier), sp.csr_matrix(Hv))
    if rest.nnz and abs(rest).max() > 1e-12:
        raise ValueError("StrangIMEX needs a Hermitian part acting on velocity only")
    return Hv


def _spectral_radius_skew(S: sp.csr_matrix) -> float:
    n = S.shape[0]
    iS = (1j * S).tocsr()
    if n <= 600:
        return float(np.max(np.abs(np.linalg.eigvalsh(iS.toarray()))))
    vals = spla.eigsh(iS, k=1, which="LM", return_eigenvectors=False, tol=1e-6)
    return float(np.abs(vals).max()) * (1 + 1e-6)


class _Stepper:
    def __init__(self, op: LinearOperatorRep, dt: float, scheme: Scheme):
        self.op = op
        self.dt = dt
        self.scheme = scheme
        g = op.grid
        if scheme is Scheme.EXACT_SMALL:
            if op.fourier_diagonal:
                if g.n_alpha > EXACT_MAX_DIM:
                    raise DimensionError(f"block dimension {g.n_alpha} exceeds {EXACT_MAX_DIM}")
                na = g.n_alpha
                mats = []
                for f in range(g.n_fourier):
                    mats.append(sla.expm(dt * op.block(f)))
                self.blocks = np.stack(mats)
                self.dense = None
            else:
                if g.size > EXACT_MAX_DIM:
                    raise DimensionError(f"dimension {g.size} exceeds {EXACT_MAX_DIM}; use StrangIMEX")
                self.dense = sla.expm(dt * op.to_dense())
                self.blocks = None
        else:
            Hv = _hermitian_block(op)
            lam, U = np.linalg.eigh(Hv)
            self.half = (U * np.exp(0.5 * dt * lam)) @ U.conj().T
            self.S = (0.5 * (op.matrix - op.matrix.conj().T)).tocsr()
            rho = _spectral_radius_skew(self.S)
            if dt * rho > STABILITY_LIMIT:
                raise StabilityError(f"dt * rho(skew) = {dt * rho:.3g} exceeds {STABILITY_LIMIT}")
            self.rho = rho

    def __call__(self, vec: np.ndarray) -> np.ndarray:
        g = self.op.grid
        if self.scheme is Scheme.EXACT_SMALL:
            if self.blocks is not None:
                b = vec.reshape(g.n_fourier, g.n_alpha)
                return np.einsum("fij,fj->fi", self.blocks, b).reshape(-1)
            return self.dense @ vec
        hT = self.half.T
        y = (vec.reshape(g.n_fourier, g.n_alpha) @ hT).reshape(-1)
        S, h = self.S, self.dt
        k1 = S @ y
        k2 = S @ (y + 0.5 * h * k1)
        k3 = S @ (y + 0.5 * h * k2)
        k4 = S @ (y + h * k3)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        return (y.reshape(g.n_fourier, g.n_alpha) @ hT).reshape(-1)


def evolve(op: LinearOperatorRep, f0: FieldState, cfg: IntegratorConfig,
           traces: Mapping[str, Callable[[FieldState], float]] | None = None) -> TrajectoryRecord:
    """Propagate ``d_t f = op f`` from ``f0`` and sample the trajectory.

    Parameters
    ----------
    traces : mapping name -> callable(FieldState) -> float, optional
        Scalar quantities recorded at every sample.

    Raises
    ------
    StabilityError, DimensionError
    """
    if op.grid != f0.grid or op.frame != f0.frame:
        raise ValueError("operator and initial state must share grid and frame")
    stepper = _Stepper(op, cfg.dt, cfg.scheme)
    traces = dict(traces or {})
    n = cfg.n_steps
    times, mass, states = [], [], []
    values = {k: [] for k in traces}
    vec = np.array(f0.vector)

    def record(step, vec):
        s = FieldState.from_vector(f0.grid, f0.frame, vec)
        times.append(step * cfg.dt)
        mass.append(float(s.mean().real))
        if cfg.keep_states:
            states.append(s)
        for k, fn in traces.items():
            values[k].append(float(fn(s)))

    record(0, vec)
    for step in range(1, n + 1):
        vec = stepper(vec)
        if step % cfg.record_every == 0 or step == n:
            record(step, vec)
    return TrajectoryRecord(np.array(times), np.array(mass), {k: np.array(v) for k, v in values.items()},
                            states if cfg.keep_states else None, cfg.dt, cfg.scheme.value)


def convergence_order(op: LinearOperatorRep, f0: FieldState, t_end: float, dts: Sequence[float]) -> tuple:
    """Observed order of StrangIMEX against the dense exponential on a refinement sequence.

    Returns
    -------
    orders : ndarray
        ``log2`` ratios of successive errors (for halving steps).
    errors : ndarray
    """
    exact = semigroup(op)(t_end, f0.vector)
    errs = []
    for dt in dts:
        cfg = IntegratorConfig(Scheme.STRANG_IMEX, dt, t_end, keep_states=False, record_every=10**9)
        stepper = _Stepper(op, dt, Scheme.STRANG_IMEX)
        vec = np.array(f0.vector)
        for _ in range(cfg.n_steps):
            vec = stepper(vec)
        errs.append(np.linalg.norm(vec - exact))
    errs = np.array(errs)
    ratios = np.array(dts[:-1]) / np.array(dts[1:])
    return np.log(errs[:-1] / errs[1:]) / np.log(ratios), errs


def semigroup(op: LinearOperatorRep | sp.spmatrix | np.ndarray) -> Callable[[float, np.ndarray], np.ndarray]:
    """Return ``(t, x) -> exp(t op) x`` evaluated with ``expm_multiply``."""
    M = op.matrix if isinstance(op, LinearOperatorRep) else op
    if sp.issparse(M):
        M = sp.csc_matrix(M)

    def apply(t: float, x: np.ndarray) -> np.ndarray:
        if t == 0:
            return np.array(x, dtype=complex)
        if not sp.issparse(M) and M.shape[0] <= 64:
            return sla.expm(t * M) @ x
        return spla.expm_multiply(t * M, np.asarray(x, dtype=complex))

    return apply


def spectral_projection_pi0(F: FieldState) -> FieldState:
    """``Pi_0 F = mu <F>``, returned in the frame of ``F``."""
    Fo = convert_frame(F, Frame.ORIGINAL)
    g = F.grid
    c = np.zeros((g.n_fourier, g.n_alpha), dtype=complex)
    c[g.zero_mode, 0] = Fo.blocks[g.zero_mode, 0]
    return convert_frame(FieldState(g, Frame.ORIGINAL, c), F.frame)


# ---------------------------------------------------------------------------
# convolutions


@dataclass(frozen=True)
class ConvolutionResult:
    value: np.ndarray
    n_points: int
    error_estimate: float
    converged: bool


def _gl_rule(n: int, t: float):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * t * (x + 1), 0.5 * t * w


def convolve(S2: Callable, S1: Callable, t: float, x: np.ndarray, quad_points: int = 8,
             tol: float = 1e-6, max_points: int = 512) -> ConvolutionResult:
    """``(S2 * S1)(t) x = int_0^t S2(s) S1(t - s) x ds`` by Gauss-Legendre with doubling.

    ``S1``, ``S2`` are callables ``(s, vector) -> vector``. The point count
    doubles from ``quad_points`` until two successive rules agree to ``tol``
    relative; ``converged`` is False if ``max_points`` is reached first.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    x = np.asarray(x)

    def rule(n):
        s, w = _gl_rule(n, t)
        acc = None
        for si, wi in zip(s, w):
            term = wi * np.asarray(S2(si, S1(t - si, x)))
            acc = term if acc is None else acc + term
        return acc

    n = quad_points
    prev = rule(n)
    while True:
        n2 = 2 * n
        cur = rule(n2)
        scale = max(np.linalg.norm(cur), 1e-300)
        err = float(np.linalg.norm(cur - prev) / scale)
        if err <= tol:
            return ConvolutionResult(cur, n2, err, True)
        if n2 >= max_points:
            return ConvolutionResult(cur, n2, err, False)
        n, prev = n2, cur


def convolution_power(S: Callable, n: int, t: float, x: np.ndarray, quad_points: int = 16) -> np.ndarray:
    """``S^{(*n)}(t) x`` by nested fixed-order Gauss-Legendre quadrature."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if n == 1:
        return np.asarray(S(t, x))
    if t == 0:
        return np.zeros_like(np.asarray(S(0.0, x)))
    s, w = _gl_rule(quad_points, t)
    acc = None
    for si, wi in zip(s, w):
        term = wi * np.asarray(S(si, convolution_power(S, n - 1, t - si, x, quad_points)))
        acc = term if acc is None else acc + term
    return acc


def t_n_inductive(bundle: SplitBundle, n: int, t: float, x: np.ndarray, quad_points: int = 16) -> np.ndarray:
    """``T_n(t) x`` with ``T_1 = A S_B`` and ``T_n = T_1 * T_{n-1}``, by nested quadrature."""
    SB = semigroup(bundle.B)
    A = bundle.A.matrix

    def T1(s, y):
        return A @ SB(s, y)

    return convolution_power(T1, n, t, x, quad_points)


def t_n_direct(bundle: SplitBundle, n: int, t: float, x: np.ndarray) -> np.ndarray:
    """``T_n(t) x`` from one exponential of the block bidiagonal chain.

    With ``y_1' = B y_1``, ``y_k' = B y_k + A y_{k-1}``, ``y_1(0) = x`` and
    ``y_k(0) = 0``, one has ``T_n(t) x = A y_n(t)``.
    """
    A, B = bundle.A.matrix, bundle.B.matrix
    N = A.shape[0]
    rows = []
    for i in range(n):
        row = [None] * n
        row[i] = B
        if i > 0:
            row[i - 1] = A
        rows.append(row)
    Z = sp.bmat(rows, format="csc")
    y0 = np.zeros(n * N, dtype=complex)
    y0[:N] = x
    y = spla.expm_multiply(t * Z, y0)
    return A @ y[(n - 1) * N:]


def duhamel_residual(bundle: SplitBundle, t: float, f0: FieldState, tol: float = 1e-6) -> float:
    """``||S_L0(t) f0 - S_B(t) f0 - (S_L0 * (A S_B))(t) f0|| / ||f0||``."""
    SL = semigroup(bundle.L0)
    SB = semigroup(bundle.B)
    A = bundle.A.matrix
    x = f0.vector
    conv = convolve(SL, lambda s, y: A @ SB(s, y), t, x, tol=tol * 1e-2)
    res = SL(t, x) - SB(t, x) - conv.value
    return float(np.linalg.norm(res) / max(np.linalg.norm(x), 1e-300))


# ---------------------------------------------------------------------------
# smoothing


@dataclass(frozen=True)
class SmoothingProbe:
    times: np.ndarray
    ratios: np.ndarray
    slope: float
    fit_range: tuple


def _loglog_slope(t: np.ndarray, r: np.ndarray) -> float:
    return float(np.polyfit(np.log(t), np.log(r), 1)[0])


def smoothing_probe(bundle: SplitBundle, f0: FieldState, p: float, q: float, t_list: Sequence[float],
                    weight: Weight | None = None, fit_range: tuple | None = None,
                    operator: str = "S") -> SmoothingProbe:
    """Ratios ``||S_B(t) f0||_{L^q(m0)} / ||f0||_{L^p(m0)}`` and their log-log slope.

    Parameters
    ----------
    operator : {"S", "AS", "SA"}
        Probe ``S_B(t)``, ``A S_B(t)`` or ``S_B(t) A``.
    fit_range : (t_lo, t_hi), optional
        Window of the slope fit; defaults to the smallest decade of ``t_list``.
    """
    if not 1 <= p <= q <= 2:
        raise ValueError("need 1 <= p <= q <= 2")
    t_arr = np.asarray(sorted(t_list), dtype=float)
    if t_arr[0] <= 0 or t_arr[-1] > 1:
        raise ValueError("times must lie in (0, 1]")
    w = weight or Weight.exponential(0.5)
    g = f0.grid
    SB = semigroup(bundle.B)
    A = bundle.A.matrix
    x0 = f0.vector
    if operator == "SA":
        x0 = A @ x0
    denom = norm_lp_m(f0, w, p)
    ratios = []
    prev_t, y = 0.0, np.array(x0, dtype=complex)
    for t in t_arr:
        y = SB(t - prev_t, y)
        prev_t = t
        out = A @ y if operator == "AS" else y
        ratios.append(norm_lp_m(FieldState.from_vector(g, f0.frame, out), w, q) / denom)
    ratios = np.array(ratios)
    lo, hi = fit_range or (t_arr[0], 10 * t_arr[0])
    sel = (t_arr >= lo * (1 - 1e-12)) & (t_arr <= hi * (1 + 1e-12))
    slope = _loglog_slope(t_arr[sel], ratios[sel]) if sel.sum() >= 2 else math.nan
    return SmoothingProbe(t_arr, ratios, slope, (float(lo), float(hi)))
