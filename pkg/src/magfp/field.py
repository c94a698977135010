"""Discretization substrate: Fourier modes on the torus times Hermite modes in velocity.

A state stores complex coefficients ``c[xi_1, ..., xi_dx, alpha]`` where the
Fourier axes are centered (frequency ``-(n_x-1)/2`` at index 0) and ``alpha``
runs over the degree-graded Hermite multi-indices of :mod:`magfp.hermite`.
The torus measure has total mass one, so the coefficient l2 norm is the
``L^2(dx dmu)`` norm of the represented function.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from . import hermite

__all__ = [
    "GridConfig",
    "Frame",
    "FieldState",
    "MagneticField",
    "Weight",
    "Moments",
    "QuadratureError",
    "BandError",
    "FrameError",
    "convert_frame",
    "density_coeffs",
    "moments",
    "norm_lp_m",
    "norm_w1p_m",
    "inner_l2_mu",
    "random_state",
    "maxwellian",
    "shifted_maxwellian",
    "single_mode",
    "project_function",
    "to_physical",
    "from_physical",
    "torus_points",
]


class QuadratureError(ValueError):
    """Raised when the quadrature cannot integrate the requested quantity."""


class BandError(ValueError):
    """Raised when data carries modes outside the grid band."""


class FrameError(ValueError):
    """Raised when an operation receives a state in the wrong frame."""


class Frame(enum.Enum):
    """Representation of the distribution ``F``.

    ``ORIGINAL``: ``F = mu * sum c phi``. ``PERTURBATION``: ``F = mu (1 + f)``.
    ``FLAT``: ``u = F / sqrt(mu)`` expanded in Hermite functions
    ``sqrt(mu) phi``, so its coefficients coincide with the Original ones.
    """

    ORIGINAL = "original"
    PERTURBATION = "perturbation"
    FLAT = "flat"


@dataclass(frozen=True)
class GridConfig:
    """Truncation parameters of the spectral discretization.

    Parameters
    ----------
    d_x : int
        Spatial dimension, 1 to 3.
    d_v : int
        Velocity dimension, 2 or 3. Must be at least ``d_x``.
    n_x : int
        Odd number of Fourier modes per axis.
    n_v : int
        Maximal total Hermite degree.
    quad_order : int, optional
        Gauss-Hermite order per velocity axis for nonquadratic norms.
        Defaults to ``n_v + 12``.
    """

    d_x: int
    d_v: int
    n_x: int
    n_v: int
    quad_order: int = 0

    def __post_init__(self):
        if self.d_x not in (1, 2, 3):
            raise ValueError("d_x must be 1, 2 or 3")
        if self.d_v not in (2, 3):
            raise ValueError("d_v must be 2 or 3")
        if self.d_x > self.d_v:
            raise ValueError("d_x may not exceed d_v (transport needs v_j for every x_j)")
        if self.n_x < 3 or self.n_x % 2 == 0:
            raise ValueError("n_x must be odd and >= 3")
        if self.n_v < 2:
            raise ValueError("n_v must be >= 2")
        if self.quad_order == 0:
            object.__setattr__(self, "quad_order", self.n_v + 12)
        if self.quad_order < self.n_v + 2:
            raise ValueError("quad_order must be >= n_v + 2")

    @property
    def half_band(self) -> int:
        return (self.n_x - 1) // 2

    @cached_property
    def alphas(self) -> np.ndarray:
        return hermite.multi_indices(self.d_v, self.n_v)

    @cached_property
    def degrees(self) -> np.ndarray:
        return self.alphas.sum(axis=1)

    @property
    def n_alpha(self) -> int:
        return self.alphas.shape[0]

    @property
    def n_fourier(self) -> int:
        return self.n_x**self.d_x

    @property
    def shape(self) -> tuple:
        return (self.n_x,) * self.d_x + (self.n_alpha,)

    @property
    def size(self) -> int:
        return self.n_fourier * self.n_alpha

    @cached_property
    def freqs(self) -> np.ndarray:
        """Frequency vectors of the flattened Fourier index, shape (n_fourier, d_x)."""
        k = np.arange(self.n_x) - self.half_band
        grids = np.meshgrid(*([k] * self.d_x), indexing="ij")
        out = np.stack([g.ravel() for g in grids], axis=-1)
        out.flags.writeable = False
        return out

    @cached_property
    def zero_mode(self) -> int:
        """Flattened index of frequency zero."""
        return int(np.ravel_multi_index((self.half_band,) * self.d_x, (self.n_x,) * self.d_x))

    def alpha_index(self, alpha: Sequence[int]) -> int:
        """Position of a multi-index; ``KeyError`` if outside the band."""
        return hermite.index_map(self.d_v, self.n_v)[tuple(int(a) for a in alpha)]

    def fourier_index(self, xi: Sequence[int]) -> int:
        xi = tuple(int(a) for a in xi)
        if len(xi) != self.d_x or any(abs(a) > self.half_band for a in xi):
            raise BandError(f"frequency {xi} outside band of n_x={self.n_x}")
        return int(np.ravel_multi_index(tuple(a + self.half_band for a in xi), (self.n_x,) * self.d_x))

    def to_dict(self) -> dict:
        return {"d_x": self.d_x, "d_v": self.d_v, "n_x": self.n_x, "n_v": self.n_v,
                "quad_order": self.quad_order}


@dataclass(frozen=True, eq=False)
class FieldState:
    """Immutable spectral state.

    Attributes
    ----------
    grid : GridConfig
    frame : Frame
    coeffs : ndarray of complex, shape ``grid.shape``
    """

    grid: GridConfig
    frame: Frame
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=complex)
        if c.shape != self.grid.shape:
            if c.size == self.grid.size:
                c = c.reshape(self.grid.shape)
            else:
                raise ValueError(f"coefficient shape {c.shape} does not match grid {self.grid.shape}")
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "frame", Frame(self.frame))

    @classmethod
    def zeros(cls, grid: GridConfig, frame: Frame = Frame.PERTURBATION) -> "FieldState":
        return cls(grid, frame, np.zeros(grid.shape, dtype=complex))

    @classmethod
    def from_vector(cls, grid: GridConfig, frame: Frame, vec: np.ndarray) -> "FieldState":
        return cls(grid, frame, np.asarray(vec).reshape(grid.shape))

    @property
    def vector(self) -> np.ndarray:
        """Flattened coefficient vector (Fourier-major)."""
        return self.coeffs.reshape(-1)

    @property
    def blocks(self) -> np.ndarray:
        """Coefficients as an (n_fourier, n_alpha) array."""
        return self.coeffs.reshape(self.grid.n_fourier, self.grid.n_alpha)

    def l2(self) -> float:
        """Coefficient l2 norm, equal to the L^2(dx dmu) norm by Parseval."""
        return float(np.linalg.norm(self.vector))

    def hermitian_defect(self) -> float:
        """Largest violation of ``c(-xi) = conj(c(xi))``."""
        flipped = self.coeffs[(slice(None, None, -1),) * self.grid.d_x]
        return float(np.max(np.abs(self.coeffs - flipped.conj()), initial=0.0))

    def mean(self) -> complex:
        """Coefficient of the constant mode: ``<f>`` for Perturbation, ``<F>`` otherwise."""
        return complex(self.blocks[self.grid.zero_mode, 0])

    def _check(self, other: "FieldState"):
        if other.grid != self.grid:
            raise ValueError("grid mismatch")
        if other.frame != self.frame:
            raise FrameError("frame mismatch")

    def __add__(self, other: "FieldState") -> "FieldState":
        self._check(other)
        return FieldState(self.grid, self.frame, self.coeffs + other.coeffs)

    def __sub__(self, other: "FieldState") -> "FieldState":
        self._check(other)
        return FieldState(self.grid, self.frame, self.coeffs - other.coeffs)

    def __mul__(self, scalar) -> "FieldState":
        return FieldState(self.grid, self.frame, self.coeffs * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "FieldState":
        return FieldState(self.grid, self.frame, -self.coeffs)

    def with_coeffs(self, coeffs: np.ndarray) -> "FieldState":
        return FieldState(self.grid, self.frame, coeffs)


# ---------------------------------------------------------------------------
# torus transforms


def _embed_positions(n_x: int, n_pts: int) -> np.ndarray:
    h = (n_x - 1) // 2
    return (np.arange(n_x) - h) % n_pts


def torus_points(n_pts: int, d_x: int) -> np.ndarray:
    """Uniform torus grid, shape (n_pts**d_x, d_x), ``ij`` ordering."""
    x = 2 * np.pi * np.arange(n_pts) / n_pts
    grids = np.meshgrid(*([x] * d_x), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=-1)


def to_physical(coeffs: np.ndarray, d_x: int, n_pts: int) -> np.ndarray:
    """Evaluate centered Fourier coefficients on a uniform grid.

    ``coeffs`` has ``d_x`` leading Fourier axes of odd length and arbitrary
    trailing axes. Returns values with leading axes of length ``n_pts``.
    """
    n_x = coeffs.shape[0]
    if n_pts < n_x:
        raise ValueError("n_pts must be at least the number of modes")
    pos = _embed_positions(n_x, n_pts)
    padded = np.zeros((n_pts,) * d_x + coeffs.shape[d_x:], dtype=complex)
    padded[np.ix_(*([pos] * d_x))] = coeffs
    axes = tuple(range(d_x))
    return np.fft.ifftn(padded, axes=axes) * n_pts**d_x


def from_physical(values: np.ndarray, d_x: int, n_x: int) -> np.ndarray:
    """Centered Fourier coefficients (band ``n_x``) of grid values."""
    n_pts = values.shape[0]
    axes = tuple(range(d_x))
    full = np.fft.fftn(values, axes=axes) / n_pts**d_x
    pos = _embed_positions(n_x, n_pts)
    return full[np.ix_(*([pos] * d_x))]


# ---------------------------------------------------------------------------
# magnetic field


@dataclass(frozen=True, eq=False)
class MagneticField:
    """Real external magnetic field stored by centered Fourier coefficients.

    Parameters
    ----------
    d_x, d_v : int
    n_x : int
        Band of the stored coefficients (odd).
    coeffs : ndarray, shape ``(n_comp,) + (n_x,)*d_x``
        ``n_comp = 3`` for ``d_v = 3``; ``n_comp = 1`` (scalar ``b``) for
        ``d_v = 2``, with the convention ``v ^ b = b (v_2, -v_1)``.
    """

    d_x: int
    d_v: int
    n_x: int
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=complex)
        n_comp = 3 if self.d_v == 3 else 1
        if c.shape != (n_comp,) + (self.n_x,) * self.d_x:
            raise ValueError(f"expected coefficient shape {(n_comp,) + (self.n_x,) * self.d_x}, got {c.shape}")
        flipped = c[(slice(None),) + (slice(None, None, -1),) * self.d_x]
        if np.max(np.abs(c - flipped.conj()), initial=0.0) > 1e-12 * max(1.0, np.abs(c).max(initial=0.0)):
            raise ValueError("magnetic field components must be real (Hermitian coefficients)")
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)

    @property
    def n_comp(self) -> int:
        return self.coeffs.shape[0]

    @classmethod
    def zero(cls, grid: GridConfig) -> "MagneticField":
        n_comp = 3 if grid.d_v == 3 else 1
        return cls(grid.d_x, grid.d_v, grid.n_x, np.zeros((n_comp,) + (grid.n_x,) * grid.d_x))

    @classmethod
    def constant(cls, grid: GridConfig, value) -> "MagneticField":
        """Spatially constant field; ``value`` is a 3-vector (d_v=3) or a scalar (d_v=2)."""
        value = np.atleast_1d(np.asarray(value, dtype=float))
        n_comp = 3 if grid.d_v == 3 else 1
        if value.size != n_comp:
            raise ValueError(f"constant field needs {n_comp} component(s) for d_v={grid.d_v}")
        c = np.zeros((n_comp,) + (grid.n_x,) * grid.d_x, dtype=complex)
        c[(slice(None),) + (grid.half_band,) * grid.d_x] = value
        return cls(grid.d_x, grid.d_v, grid.n_x, c)

    @classmethod
    def from_modes(cls, grid: GridConfig, modes, offset=None) -> "MagneticField":
        """Build ``B_k(x) = offset_k + sum a cos(xi.x) + b sin(xi.x)``.

        Parameters
        ----------
        modes : iterable of (component, xi, cos_amp, sin_amp)
        offset : constant part, optional

        Raises
        ------
        BandError
            If a frequency lies outside the grid band.
        """
        base = cls.constant(grid, offset) if offset is not None else cls.zero(grid)
        c = np.array(base.coeffs)
        h = grid.half_band
        for comp, xi, a, b in modes:
            xi = tuple(int(t) for t in np.atleast_1d(xi))
            if len(xi) != grid.d_x:
                raise ValueError("frequency dimension mismatch")
            if any(abs(t) > h for t in xi):
                raise BandError(f"magnetic mode {xi} outside band of n_x={grid.n_x}")
            if comp >= c.shape[0]:
                raise ValueError("component index out of range")
            if all(t == 0 for t in xi):
                c[(comp,) + (h,) * grid.d_x] += a
                continue
            plus = (comp,) + tuple(t + h for t in xi)
            minus = (comp,) + tuple(-t + h for t in xi)
            # a cos + b sin = (a - i b)/2 e^{i xi x} + (a + i b)/2 e^{-i xi x}
            c[plus] += (a - 1j * b) / 2
            c[minus] += (a + 1j * b) / 2
        return cls(grid.d_x, grid.d_v, grid.n_x, c)

    @property
    def is_zero(self) -> bool:
        return not np.any(self.coeffs)

    @property
    def is_constant(self) -> bool:
        mask = np.ones(self.coeffs.shape[1:], dtype=bool)
        mask[((self.n_x - 1) // 2,) * self.d_x] = False
        return not np.any(self.coeffs[:, mask])

    def values(self, n_pts: int) -> np.ndarray:
        """Components on a uniform grid, shape (n_comp,) + (n_pts,)*d_x."""
        c = np.moveaxis(self.coeffs, 0, -1)
        return np.moveaxis(to_physical(c, self.d_x, n_pts).real, -1, 0)

    def gradient_coeffs(self) -> np.ndarray:
        """Fourier coefficients of ``d B_k / d x_j``, shape (d_x, n_comp) + band."""
        h = (self.n_x - 1) // 2
        k = np.arange(self.n_x) - h
        out = []
        for j in range(self.d_x):
            shape = [1] * self.d_x
            shape[j] = self.n_x
            out.append(self.coeffs * (1j * k).reshape(shape))
        return np.stack(out)

    def derivative(self, j: int) -> "MagneticField":
        """The field ``d B / d x_j``."""
        return MagneticField(self.d_x, self.d_v, self.n_x, self.gradient_coeffs()[j])

    @property
    def refinement_points(self) -> int:
        """Points per axis of the sup-norm grid: 16, 8 or 4 times the band for d_x = 1, 2, 3."""
        return {1: 16, 2: 8, 3: 4}[self.d_x] * self.n_x

    @cached_property
    def sup_norm(self) -> float:
        """``sup_x |B(x)|`` (Euclidean) sampled on the refinement grid.

        The sampled value is a lower bound; for a band-limited field with
        highest frequency ``N`` sampled with spacing ``h`` the exact supremum
        exceeds it by at most a factor ``1 / (1 - sqrt(d_x) N h / 2)``.
        """
        vals = self.values(self.refinement_points)
        return float(np.sqrt((vals**2).sum(axis=0)).max())

    @cached_property
    def grad_sup_norm(self) -> float:
        """``sup_x |grad B(x)|`` with the Frobenius norm of the Jacobian, on the same grid."""
        n_pts = self.refinement_points
        g = self.gradient_coeffs()
        tot = np.zeros((n_pts,) * self.d_x)
        for j in range(self.d_x):
            c = np.moveaxis(g[j], 0, -1)
            vals = to_physical(c, self.d_x, n_pts).real
            tot += (vals**2).sum(axis=-1)
        return float(np.sqrt(tot).max())

    def to_dict(self) -> dict:
        return {"d_x": self.d_x, "d_v": self.d_v, "n_x": self.n_x,
                "sup_norm": self.sup_norm, "grad_sup_norm": self.grad_sup_norm}


# ---------------------------------------------------------------------------
# weights


@dataclass(frozen=True)
class Weight:
    """Radial velocity weight ``m(v) = <v>^k mu(v)^{-theta}``.

    ``Weight.polynomial(k)`` gives ``<v>^k`` and ``Weight.exponential(theta)``
    gives ``mu^{-theta}``; ``m0 = mu^{-1/2}`` is ``Weight.exponential(0.5)``.
    Products such as ``m <v>`` are represented by combining both exponents.
    """

    k: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        if self.k < 0:
            raise ValueError("polynomial exponent must be nonnegative")
        if not 0 <= self.theta <= 1:
            raise ValueError("exponential exponent must lie in [0, 1]")

    @classmethod
    def polynomial(cls, k: float) -> "Weight":
        if k <= 0:
            raise ValueError("Polynomial(k) requires k > 0")
        return cls(k=float(k))

    @classmethod
    def exponential(cls, theta: float) -> "Weight":
        if not 0 < theta <= 1:
            raise ValueError("ExponentialTheta requires theta in (0, 1]")
        return cls(theta=float(theta))

    @classmethod
    def unit(cls) -> "Weight":
        return cls()

    @property
    def kind(self) -> str:
        if self.theta == 0 and self.k > 0:
            return "polynomial"
        if self.k == 0 and self.theta > 0:
            return "exponential"
        if self.k == 0 and self.theta == 0:
            return "unit"
        return "mixed"

    def times_bracket(self, power: float = 1.0) -> "Weight":
        """The weight ``m <v>^power``."""
        return Weight(self.k + power, self.theta)

    def log_m(self, v: np.ndarray) -> np.ndarray:
        """``log m`` at points of shape (n, d)."""
        v = np.atleast_2d(v)
        r2 = (v**2).sum(axis=1)
        d = v.shape[1]
        return 0.5 * self.k * np.log1p(r2) + self.theta * (0.5 * d * np.log(2 * np.pi) + 0.5 * r2)

    def __call__(self, v: np.ndarray) -> np.ndarray:
        return np.exp(self.log_m(v))

    def grad_log(self, v: np.ndarray) -> np.ndarray:
        """``grad m / m``, shape (n, d)."""
        v = np.atleast_2d(v)
        r2 = (v**2).sum(axis=1, keepdims=True)
        return v * (self.k / (1 + r2) + self.theta)

    def gradient(self, v: np.ndarray) -> np.ndarray:
        return self.grad_log(v) * self(v)[:, None]

    def laplacian_ratio(self, v: np.ndarray) -> np.ndarray:
        """``Delta m / m``."""
        v = np.atleast_2d(v)
        d = v.shape[1]
        r2 = (v**2).sum(axis=1)
        b2 = 1 + r2
        k, th = self.k, self.theta
        poly = k * d / b2 + k * (k - 2) * r2 / b2**2
        expo = th * d + th**2 * r2
        cross = 2 * k * th * r2 / b2
        return poly + expo + cross

    def laplacian(self, v: np.ndarray) -> np.ndarray:
        return self.laplacian_ratio(v) * self(v)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "k": self.k, "theta": self.theta}


# ---------------------------------------------------------------------------
# frames and moments


def convert_frame(state: FieldState, target: Frame) -> FieldState:
    """Represent the same distribution ``F`` in another frame.

    Original and Flat share coefficients; Perturbation differs by the
    constant mode: ``c_P = c_O - delta_{xi=0, alpha=0}``.
    """
    target = Frame(target)
    if state.frame == target:
        return state
    blocks = np.array(state.blocks)
    z = state.grid.zero_mode
    if state.frame == Frame.PERTURBATION:
        blocks[z, 0] += 1.0
    if target == Frame.PERTURBATION:
        blocks[z, 0] -= 1.0
    return FieldState(state.grid, target, blocks)


def density_coeffs(state: FieldState) -> np.ndarray:
    """Coefficients ``c`` of the density represented by a state, ``density = mu sum c phi``.

    Original and Flat states represent ``F``; Perturbation states represent
    the deviation ``mu f = F - mu``. Shape (n_fourier, n_alpha).
    """
    return state.blocks


@dataclass(frozen=True)
class Moments:
    """Fourier coefficients of the velocity moments.

    ``r`` has shape (n_fourier,), ``m`` (n_fourier, d_v), ``M2`` (n_fourier, d_v, d_v).
    """

    r: np.ndarray
    m: np.ndarray
    M2: np.ndarray


def moments(state: FieldState, include_density: bool = True) -> Moments:
    """Velocity moments ``int f dmu``, ``int v f dmu``, ``int v (x) v f dmu``.

    With ``include_density=False`` the second moment of the fluctuation
    ``h = f - r`` is returned instead (the diagonal loses ``r``).
    """
    if state.frame != Frame.PERTURBATION:
        raise FrameError("moments require a Perturbation-frame state")
    g = state.grid
    c = state.blocks
    d = g.d_v
    r = c[:, 0].copy()
    m = np.stack([c[:, g.alpha_index(np.eye(d, dtype=int)[j])] for j in range(d)], axis=-1)
    M2 = np.zeros((g.n_fourier, d, d), dtype=complex)
    for i in range(d):
        for j in range(d):
            a = np.zeros(d, dtype=int)
            a[i] += 1
            a[j] += 1
            if i == j:
                M2[:, i, i] = np.sqrt(2.0) * c[:, g.alpha_index(a)] + (r if include_density else 0)
            else:
                M2[:, i, j] = c[:, g.alpha_index(a)]
    return Moments(r, m, M2)


def inner_l2_mu(a: FieldState, b: FieldState) -> float:
    """``<a, b>`` in ``L^2(dx dmu)`` for real fields (Parseval)."""
    if a.grid != b.grid:
        raise ValueError("grid mismatch")
    if a.frame != Frame.PERTURBATION or b.frame != Frame.PERTURBATION:
        raise FrameError("inner_l2_mu expects Perturbation-frame states")
    return float(np.real(np.vdot(b.vector, a.vector)))


# ---------------------------------------------------------------------------
# quadrature-based norms


def _x_points(grid: GridConfig, p: float) -> int:
    n = grid.n_x
    return 2 * n if p == 2 else 4 * n


def _check_order(grid: GridConfig, w: Weight, order: int):
    need = grid.n_v + int(math.ceil(w.k)) + 2
    if order < need:
        raise QuadratureError(f"quad_order {order} below required {need} for weight exponent k={w.k}")


def _velocity_rule(grid: GridConfig, w: Weight, p: float, order: int):
    """Nodes and log-weights for ``int g (mu m)^p dv`` with Gaussian part absorbed."""
    s = p * (1.0 - w.theta)
    if s <= 0:
        return None
    nodes, logw = hermite.gauss_hermite(grid.d_v, order, s)
    d = grid.d_v
    # (mu m)^p = exp(-s|v|^2/2) * (2 pi)^{-d p (1-theta)/2} * <v>^{k p}
    log_extra = -0.5 * d * p * (1 - w.theta) * np.log(2 * np.pi) + 0.5 * w.k * p * np.log1p((nodes**2).sum(axis=1))
    return nodes, logw + log_extra


def _pointwise(state: FieldState, nodes: np.ndarray, n_pts: int, derivative=None):
    """Density polynomial ``P`` (or a derivative) at torus grid x velocity nodes.

    Returns array of shape (n_pts**d_x, n_nodes), real.
    """
    g = state.grid
    c = density_coeffs(state)
    if derivative is not None and derivative[0] == "x":
        j = derivative[1]
        c = c * (1j * g.freqs[:, j])[:, None]
    phys = to_physical(c.reshape(g.shape), g.d_x, n_pts).reshape(-1, g.n_alpha)
    if derivative is None or derivative[0] == "x":
        basis = hermite.basis_values(g.alphas, nodes)
    else:
        basis = hermite.basis_gradient(g.alphas, nodes)[derivative[1]]
    return (phys @ basis.T).real


def norm_lp_m(state: FieldState, w: Weight, p: float, quad_order: int | None = None) -> float:
    """``(int int |F|^p m^p dv dx)^{1/p}`` of the density represented by ``state``.

    Original and Flat states are measured through ``F``; Perturbation states
    through the deviation ``mu f = F - mu``.

    Raises
    ------
    QuadratureError
        If ``quad_order < n_v + ceil(k) + 2``.
    """
    if not 1 <= p <= 2:
        raise ValueError("p must lie in [1, 2]")
    g = state.grid
    order = quad_order or g.quad_order
    _check_order(g, w, order)
    rule = _velocity_rule(g, w, p, order)
    if rule is None:
        return 0.0 if not np.any(state.coeffs) else math.inf
    nodes, logw = rule
    n_pts = _x_points(g, p)
    vals = _pointwise(state, nodes, n_pts)
    total = (np.abs(vals) ** p * np.exp(logw)[None, :]).sum() / vals.shape[0]
    return float(total ** (1.0 / p))


def norm_w1p_m(state: FieldState, w: Weight, p: float, quad_order: int | None = None) -> float:
    """Weighted Sobolev norm ``||F||_{L^p(m<v>)} + ||grad_v F||_{L^p(m)} + ||grad_x F||_{L^p(m)}``.

    The velocity gradient ``grad_v F = mu (grad P - v P)`` and the spatial
    gradient are formed from exact recurrences before quadrature; the
    gradient magnitudes are Euclidean.
    """
    if not 1 <= p <= 2:
        raise ValueError("p must lie in [1, 2]")
    g = state.grid
    order = quad_order or g.quad_order
    wv = w.times_bracket(1.0)
    _check_order(g, wv, order)
    base = norm_lp_m(state, wv, p, order)
    rule = _velocity_rule(g, w, p, order)
    if rule is None:
        return math.inf if np.any(state.coeffs) else 0.0
    nodes, logw = rule
    n_pts = _x_points(g, p)
    weights = np.exp(logw)[None, :]
    P = _pointwise(state, nodes, n_pts)
    gv2 = np.zeros_like(P)
    for j in range(g.d_v):
        dj = _pointwise(state, nodes, n_pts, ("v", j)) - nodes[:, j][None, :] * P
        gv2 += dj**2
    gx2 = np.zeros_like(P)
    for j in range(g.d_x):
        gx2 += _pointwise(state, nodes, n_pts, ("x", j)) ** 2
    n = P.shape[0]
    nv = ((gv2 ** (p / 2)) * weights).sum() / n
    nx = ((gx2 ** (p / 2)) * weights).sum() / n
    return float(base + nv ** (1 / p) + nx ** (1 / p))


# ---------------------------------------------------------------------------
# constructors


def _symmetrize(c: np.ndarray, d_x: int) -> np.ndarray:
    flipped = c[(slice(None, None, -1),) * d_x]
    return 0.5 * (c + flipped.conj())


def random_state(grid: GridConfig, rng: np.random.Generator, frame: Frame = Frame.PERTURBATION,
                 decay: float = 0.0, margin: int = 0, x_margin: int = 0, mean_zero: bool = False,
                 scale: float = 1.0) -> FieldState:
    """Random real state.

    Parameters
    ----------
    decay : float
        Coefficients are damped by ``exp(-decay (|alpha| + |xi|^2))``.
    margin : int
        Hermite degrees above ``n_v - margin`` are zeroed.
    x_margin : int
        Fourier frequencies with ``|xi_j| > half_band - x_margin`` are zeroed.
    mean_zero : bool
        Zero the constant mode.
    """
    shape = grid.shape
    c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    c = _symmetrize(c, grid.d_x)
    blocks = c.reshape(grid.n_fourier, grid.n_alpha)
    deg = grid.degrees
    xi2 = (grid.freqs**2).sum(axis=1)
    if decay:
        blocks *= np.exp(-decay * (deg[None, :] + xi2[:, None]))
    if margin:
        blocks[:, deg > grid.n_v - margin] = 0
    if x_margin:
        bad = np.abs(grid.freqs).max(axis=1) > grid.half_band - x_margin
        blocks[bad] = 0
    if mean_zero:
        blocks[grid.zero_mode, 0] = 0
    return FieldState(grid, frame, scale * blocks)


def maxwellian(grid: GridConfig, frame: Frame = Frame.ORIGINAL, mass: float = 1.0) -> FieldState:
    """The equilibrium ``mass * mu`` in the requested frame."""
    c = np.zeros((grid.n_fourier, grid.n_alpha), dtype=complex)
    c[grid.zero_mode, 0] = mass
    return convert_frame(FieldState(grid, Frame.ORIGINAL, c), frame)


def shifted_maxwellian(grid: GridConfig, offset, frame: Frame = Frame.ORIGINAL) -> FieldState:
    """``F = mu(v - u)`` via ``mu(v-u)/mu(v) = prod_j sum_n u_j^n phi_n(v_j)/sqrt(n!)``, truncated at the band."""
    u = np.asarray(offset, dtype=float)
    if u.shape != (grid.d_v,):
        raise ValueError("offset must have d_v components")
    al = grid.alphas
    fact = np.array([math.lgamma(a + 1) for a in range(grid.n_v + 1)])
    coef = np.ones(grid.n_alpha)
    for j in range(grid.d_v):
        coef *= u[j] ** al[:, j] / np.exp(0.5 * fact[al[:, j]])
    c = np.zeros((grid.n_fourier, grid.n_alpha), dtype=complex)
    c[grid.zero_mode] = coef
    return convert_frame(FieldState(grid, Frame.ORIGINAL, c), frame)


def single_mode(grid: GridConfig, xi, alpha, amplitude: complex = 1.0,
                frame: Frame = Frame.PERTURBATION) -> FieldState:
    """Real state ``amplitude e^{i xi x} phi_alpha + c.c.`` (a single real mode)."""
    c = np.zeros((grid.n_fourier, grid.n_alpha), dtype=complex)
    a = grid.alpha_index(alpha)
    i = grid.fourier_index(xi)
    j = grid.fourier_index(tuple(-t for t in np.atleast_1d(xi)))
    c[i, a] += amplitude
    c[j, a] += np.conj(amplitude)
    if i == j:
        c[i, a] = np.real(amplitude)
    return FieldState(grid, frame, c)


def project_function(grid: GridConfig, func: Callable, frame: Frame = Frame.PERTURBATION,
                     order: int | None = None, n_pts: int | None = None) -> FieldState:
    """Galerkin projection of ``func(x, v)`` onto the basis.

    ``func`` takes ``x`` of shape (n_x_pts, 1, d_x) and ``v`` of shape
    (1, n_v_pts, d_v) and returns the Perturbation-frame (or polynomial
    factor) values ``P(x, v)`` whose coefficients are
    ``int int P e^{-i xi x} phi_alpha dmu dx``.
    """
    order = order or grid.quad_order
    n_pts = n_pts or 2 * grid.n_x
    nodes, logw = hermite.gauss_hermite(grid.d_v, order, 1.0)
    wts = np.exp(logw) / (2 * np.pi) ** (grid.d_v / 2)
    xs = torus_points(n_pts, grid.d_x)
    vals = func(xs[:, None, :], nodes[None, :, :])
    basis = hermite.basis_values(grid.alphas, nodes)
    proj = (vals * wts[None, :]) @ basis
    proj = proj.reshape((n_pts,) * grid.d_x + (grid.n_alpha,))
    return FieldState(grid, frame, from_physical(proj, grid.d_x, grid.n_x))
