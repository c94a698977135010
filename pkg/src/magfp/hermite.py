"""Orthonormal probabilists' Hermite basis in L^2(dmu) on R^d.

The basis functions are ``phi_alpha(v) = prod_j He_{alpha_j}(v_j) / sqrt(alpha_j!)``
where ``mu`` is the standard Gaussian density. Multi-indices are truncated by
total degree ``|alpha| <= n`` and ordered by total degree, then
lexicographically (descending in the first component).

All ladder matrices below act on coefficient vectors. Products of the
truncated matrices stay exact whenever the intermediate degrees stay inside
the band.
"""

from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from numpy.polynomial.hermite_e import hermegauss

__all__ = [
    "multi_indices",
    "index_map",
    "hermite_1d",
    "basis_values",
    "basis_gradient",
    "basis_hessian_trace",
    "gauss_hermite",
    "number_matrix",
    "mult_matrix",
    "deriv_matrix",
    "creation_matrix",
    "rotation_matrix",
]


@lru_cache(maxsize=32)
def _multi_indices(d: int, n: int) -> np.ndarray:
    out = []
    for deg in range(n + 1):
        level = [a for a in itertools.product(range(deg + 1), repeat=d) if sum(a) == deg]
        level.sort(reverse=True)
        out.extend(level)
    arr = np.array(out, dtype=np.int64).reshape(-1, d)
    arr.flags.writeable = False
    return arr


def multi_indices(d: int, n: int) -> np.ndarray:
    """Multi-indices of total degree ``<= n`` in ``d`` variables.

    Returns
    -------
    ndarray of shape (n_alpha, d)
        Read-only integer array, degree-graded.
    """
    return _multi_indices(int(d), int(n))


@lru_cache(maxsize=32)
def index_map(d: int, n: int) -> dict:
    """Dictionary from multi-index tuple to its position."""
    return {tuple(int(a) for a in row): i for i, row in enumerate(multi_indices(d, n))}


def hermite_1d(n: int, x: np.ndarray) -> np.ndarray:
    """Normalized Hermite polynomials ``He_k(x)/sqrt(k!)`` for ``k <= n``.

    Uses the stable three-term recurrence
    ``sqrt(k+1) h_{k+1} = x h_k - sqrt(k) h_{k-1}``.

    Returns
    -------
    ndarray of shape (n + 1,) + x.shape
    """
    x = np.asarray(x, dtype=float)
    h = np.empty((n + 1,) + x.shape)
    h[0] = 1.0
    if n >= 1:
        h[1] = x
    for k in range(1, n):
        h[k + 1] = (x * h[k] - np.sqrt(k) * h[k - 1]) / np.sqrt(k + 1)
    return h


def basis_values(alphas: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Evaluate every basis function at points ``v`` of shape (n_pts, d).

    Returns
    -------
    ndarray of shape (n_pts, n_alpha)
    """
    v = np.atleast_2d(v)
    n = int(alphas.max()) if alphas.size else 0
    out = np.ones((v.shape[0], alphas.shape[0]))
    for j in range(alphas.shape[1]):
        h = hermite_1d(n, v[:, j])
        out *= h[alphas[:, j]].T
    return out


def basis_gradient(alphas: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Velocity gradient of every basis function.

    Uses ``d/dx h_k = sqrt(k) h_{k-1}``.

    Returns
    -------
    ndarray of shape (d, n_pts, n_alpha)
    """
    v = np.atleast_2d(v)
    d = alphas.shape[1]
    n = int(alphas.max()) if alphas.size else 0
    hs = [hermite_1d(n, v[:, j]) for j in range(d)]
    dhs = []
    for h in hs:
        dh = np.zeros_like(h)
        dh[1:] = np.sqrt(np.arange(1, n + 1))[:, None] * h[:-1]
        dhs.append(dh)
    out = np.ones((d, v.shape[0], alphas.shape[0]))
    for i in range(d):
        for j in range(d):
            src = dhs[j] if i == j else hs[j]
            out[i] *= src[alphas[:, j]].T
    return out


def basis_hessian_trace(alphas: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Velocity Laplacian of every basis function, shape (n_pts, n_alpha)."""
    v = np.atleast_2d(v)
    d = alphas.shape[1]
    n = int(alphas.max()) if alphas.size else 0
    hs = [hermite_1d(n, v[:, j]) for j in range(d)]
    d2hs = []
    for h in hs:
        d2h = np.zeros_like(h)
        k = np.arange(2, n + 1)
        d2h[2:] = np.sqrt(k * (k - 1))[:, None] * h[:-2]
        d2hs.append(d2h)
    out = np.zeros((v.shape[0], alphas.shape[0]))
    for i in range(d):
        term = np.ones_like(out)
        for j in range(d):
            src = d2hs[j] if i == j else hs[j]
            term *= src[alphas[:, j]].T
        out += term
    return out


@lru_cache(maxsize=64)
def _gauss_hermite(d: int, order: int, scale: float):
    x, w = hermegauss(order)
    # hermegauss integrates against exp(-x^2/2); rescale to exp(-scale x^2/2)
    x = x / np.sqrt(scale)
    w = w / np.sqrt(scale)
    nodes = np.stack(np.meshgrid(*([x] * d), indexing="ij"), axis=-1).reshape(-1, d)
    logw = np.zeros(nodes.shape[0])
    for j in range(d):
        idx = np.unravel_index(np.arange(nodes.shape[0]), (order,) * d)[j]
        logw += np.log(w[idx])
    nodes.flags.writeable = False
    logw.flags.writeable = False
    return nodes, logw


def gauss_hermite(d: int, order: int, scale: float = 1.0):
    """Tensor Gauss-Hermite rule for ``int g(v) exp(-scale |v|^2 / 2) dv``.

    Returns
    -------
    nodes : ndarray of shape (order**d, d)
    log_weights : ndarray of shape (order**d,)
        Logarithms of the quadrature weights, so that the integral is
        ``sum(exp(log_weights) * g(nodes))``.
    """
    if scale <= 0:
        raise ValueError("scale must be positive")
    return _gauss_hermite(int(d), int(order), float(scale))


def _positions(alphas: np.ndarray, d: int, n: int):
    imap = index_map(d, n)
    return imap


@lru_cache(maxsize=32)
def number_matrix(d: int, n: int) -> sp.csr_matrix:
    """Diagonal matrix of total degrees ``|alpha|``."""
    al = multi_indices(d, n)
    return sp.diags(al.sum(axis=1).astype(float), format="csr")


def _shift_matrix(d: int, n: int, j: int, step: int, coef) -> sp.csr_matrix:
    # entry [beta, alpha] = coef(alpha_j) where beta = alpha + step e_j
    al = multi_indices(d, n)
    imap = index_map(d, n)
    rows, cols, vals = [], [], []
    for col, a in enumerate(al):
        b = list(int(t) for t in a)
        b[j] += step
        if b[j] < 0:
            continue
        row = imap.get(tuple(b))
        if row is None:
            continue
        rows.append(row)
        cols.append(col)
        vals.append(coef(int(a[j])))
    m = len(al)
    return sp.csr_matrix((np.array(vals, dtype=float), (rows, cols)), shape=(m, m))


@lru_cache(maxsize=64)
def mult_matrix(d: int, n: int, j: int) -> sp.csr_matrix:
    """Multiplication by ``v_j``: ``v phi_k = sqrt(k+1) phi_{k+1} + sqrt(k) phi_{k-1}``."""
    up = _shift_matrix(d, n, j, +1, lambda k: np.sqrt(k + 1))
    down = _shift_matrix(d, n, j, -1, lambda k: np.sqrt(k))
    return (up + down).tocsr()


@lru_cache(maxsize=64)
def deriv_matrix(d: int, n: int, j: int) -> sp.csr_matrix:
    """Differentiation ``d/dv_j``: ``phi_k' = sqrt(k) phi_{k-1}``."""
    return _shift_matrix(d, n, j, -1, lambda k: np.sqrt(k))


@lru_cache(maxsize=64)
def creation_matrix(d: int, n: int, j: int) -> sp.csr_matrix:
    """The adjoint of ``d/dv_j`` in L^2(dmu), i.e. ``-d/dv_j + v_j``."""
    return _shift_matrix(d, n, j, +1, lambda k: np.sqrt(k + 1))


@lru_cache(maxsize=64)
def rotation_matrix(d: int, n: int, k: int) -> sp.csr_matrix:
    """Rotation generator ``R_k`` with ``(v ^ B) . grad = sum_k B_k R_k``.

    For ``d = 3``: ``R_1 = v3 d2 - v2 d3``, ``R_2 = v1 d3 - v3 d1``,
    ``R_3 = v2 d1 - v1 d2``. For ``d = 2`` only ``R_3 = v2 d1 - v1 d2`` exists
    (``k = 2``). Rotations preserve total degree, so the truncated products
    are exact.
    """
    pairs = {0: (2, 1), 1: (0, 2), 2: (1, 0)}
    if d == 2:
        if k != 2:
            raise ValueError("only the out-of-plane rotation exists for d = 2")
        a, b = 1, 0
    else:
        a, b = pairs[k]
    # R = v_a d_b - v_b d_a
    m = mult_matrix(d, n, a) @ deriv_matrix(d, n, b) - mult_matrix(d, n, b) @ deriv_matrix(d, n, a)
    m = m.tocsr()
    m.eliminate_zeros()
    return m
