"""Dense matrix helpers: Kronecker algebra, block access, Cholesky utilities, norms.

Matrices are plain ``numpy.ndarray`` objects. Block indices are zero-based.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import AsymmetricMatrix, DimensionMismatch, NotPositiveDefinite

ASYMMETRY_TOL = 1e-8


def symmetrize(m, tol: float = ASYMMETRY_TOL) -> np.ndarray:
    """Return ``(m + m.T) / 2`` after checking the relative asymmetry.

    Raises AsymmetricMatrix if ``max|m - m.T| > tol * max(1, max|m|)``.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {m.shape}")
    asym = np.max(np.abs(m - m.T)) if m.size else 0.0
    scale = max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0
    if asym > tol * scale:
        raise AsymmetricMatrix(f"max asymmetry {asym:.3g} exceeds {tol:g} relative")
    return 0.5 * (m + m.T)


def cholesky(m) -> np.ndarray:
    """Lower Cholesky factor, raising NotPositiveDefinite on failure."""
    try:
        return np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None


def is_spd(m) -> bool:
    try:
        cholesky(m)
    except NotPositiveDefinite:
        return False
    return True


def check_spd(m, name: str = "matrix") -> np.ndarray:
    """Symmetrize ``m`` and verify positive definiteness via Cholesky."""
    m = symmetrize(m)
    try:
        cholesky(m)
    except NotPositiveDefinite:
        raise NotPositiveDefinite(f"{name} is not positive definite") from None
    return m


def chol_inv_logdet(m) -> tuple[np.ndarray, float]:
    """Inverse and log-determinant of a symmetric positive definite matrix."""
    m = symmetrize(m)
    lower = cholesky(m)
    logdet = 2.0 * float(np.sum(np.log(np.diag(lower))))
    inv = scipy.linalg.cho_solve((lower, True), np.eye(m.shape[0]))
    return 0.5 * (inv + inv.T), logdet


def logdet(m) -> float:
    lower = cholesky(m)
    return 2.0 * float(np.sum(np.log(np.diag(lower))))


def kron(a, b) -> np.ndarray:
    return np.kron(np.asarray(a, dtype=float), np.asarray(b, dtype=float))


def _kron_index_map(p: int, f: int) -> np.ndarray:
    # Row k*p + i of the permuted matrix is row i*f + k of the original.
    i = np.arange(p)
    k = np.arange(f)
    return (i[None, :] * f + k[:, None]).ravel()


def permute_kron(m, p: int, f: int) -> np.ndarray:
    """Compute ``K_{p,f}^T m K_{p,f}`` by index permutation.

    For ``m = kron(a, b)`` with ``a`` p x p and ``b`` f x f this returns
    ``kron(b, a)``. The commutation matrix is never formed.
    """
    m = np.asarray(m)
    if m.shape != (p * f, p * f):
        raise DimensionMismatch(f"expected {(p * f, p * f)}, got {m.shape}")
    idx = _kron_index_map(p, f)
    return m[np.ix_(idx, idx)]


class BlockView:
    """Block access to a pf x pf matrix.

    ``block(i, j)`` is the f x f block in block-row i, block-column j;
    ``pblock(k, l)`` is the p x p block of the permuted matrix
    ``K_{p,f}^T M K_{p,f}``.
    """

    def __init__(self, parent, p: int, f: int):
        parent = np.asarray(parent)
        if parent.shape != (p * f, p * f):
            raise DimensionMismatch(f"expected {(p * f, p * f)}, got {parent.shape}")
        self.parent = parent
        self.p = p
        self.f = f

    def block(self, i: int, j: int) -> np.ndarray:
        if not (0 <= i < self.p and 0 <= j < self.p):
            raise IndexError(f"block index ({i}, {j}) out of range for p={self.p}")
        f = self.f
        return self.parent[i * f:(i + 1) * f, j * f:(j + 1) * f]

    def pblock(self, k: int, l: int) -> np.ndarray:
        if not (0 <= k < self.f and 0 <= l < self.f):
            raise IndexError(f"pblock index ({k}, {l}) out of range for f={self.f}")
        rows = np.arange(self.p) * self.f + k
        cols = np.arange(self.p) * self.f + l
        return self.parent[np.ix_(rows, cols)]

    def as_4d(self) -> np.ndarray:
        """View with axes (i, k, j, l): ``M[i*f + k, j*f + l]``."""
        p, f = self.p, self.f
        return self.parent.reshape(p, f, p, f)


def spectral_norm(m, tol: float = 1e-8, max_iter: int = 10_000) -> float:
    """Largest singular value by power iteration on ``m.T @ m``."""
    m = np.asarray(m, dtype=float)
    if not m.size or not np.any(m):
        return 0.0
    gram = m.T @ m
    v = np.random.default_rng(0).standard_normal(gram.shape[0])
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(max_iter):
        w = gram @ v
        new = float(v @ w)
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            return 0.0
        v = w / nrm
        if abs(new - est) <= tol * abs(new):
            est = new
            break
        est = new
    return float(np.sqrt(max(est, 0.0)))


def norms(m) -> tuple[float, float, float]:
    """(Frobenius, max-abs entry, spectral) norms."""
    m = np.asarray(m, dtype=float)
    if not m.size:
        return 0.0, 0.0, 0.0
    return (float(np.linalg.norm(m, "fro")), float(np.max(np.abs(m))),
            spectral_norm(m))


def sparsity(m) -> int:
    """Number of exactly-nonzero off-diagonal entries (both triangles)."""
    m = np.asarray(m)
    off = m != 0
    np.fill_diagonal(off, False)
    return int(np.count_nonzero(off))


def lambda_min(m) -> float:
    return float(np.linalg.eigvalsh(m)[0])


def lambda_max(m) -> float:
    return float(np.linalg.eigvalsh(m)[-1])


def condition_number(m) -> float:
    ev = np.linalg.eigvalsh(m)
    return float(ev[-1] / ev[0])


def kron_frob_dist2(x1, y1, x2, y2) -> float:
    """``||kron(x1, y1) - kron(x2, y2)||_F^2`` without forming either product."""
    val = (np.sum(x1 * x1) * np.sum(y1 * y1) + np.sum(x2 * x2) * np.sum(y2 * y2)
           - 2.0 * np.sum(x1 * x2) * np.sum(y1 * y2))
    return float(max(val, 0.0))


def kron_frob_norm2(x, y) -> float:
    return float(np.sum(x * x) * np.sum(y * y))
