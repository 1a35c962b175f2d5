"""Ground-truth Kronecker models, matrix-normal sampling and sample covariances."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DimensionMismatch
from .matkit import BlockView, check_spd, chol_inv_logdet, cholesky, kron, lambda_min


def derive_rng(master_seed: int, *keys: int) -> np.random.Generator:
    """Independent Philox stream for ``(master_seed, *keys)``.

    Philox is counter based, so each (seed, key) pair gives the same stream
    no matter which worker draws it or in what order.
    """
    ss = np.random.SeedSequence([int(master_seed), *(int(k) for k in keys)])
    return np.random.Generator(np.random.Philox(ss))


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return derive_rng(seed)


@dataclass(frozen=True)
class KroneckerModel:
    """Covariance ``a0 (x) b0`` with precision factors ``x0 = a0^-1``, ``y0 = b0^-1``."""

    a0: np.ndarray
    b0: np.ndarray
    x0: np.ndarray = field(repr=False)
    y0: np.ndarray = field(repr=False)

    @classmethod
    def from_covariances(cls, a0, b0) -> "KroneckerModel":
        a0 = check_spd(a0, "a0")
        b0 = check_spd(b0, "b0")
        return cls(a0, b0, chol_inv_logdet(a0)[0], chol_inv_logdet(b0)[0])

    @classmethod
    def from_precisions(cls, x0, y0) -> "KroneckerModel":
        x0 = check_spd(x0, "x0")
        y0 = check_spd(y0, "y0")
        return cls(chol_inv_logdet(x0)[0], chol_inv_logdet(y0)[0], x0, y0)

    @property
    def p(self) -> int:
        return self.a0.shape[0]

    @property
    def f(self) -> int:
        return self.b0.shape[0]

    @cached_property
    def sigma0(self) -> np.ndarray:
        return kron(self.a0, self.b0)

    @cached_property
    def theta0(self) -> np.ndarray:
        return kron(self.x0, self.y0)


@dataclass
class SampleCov:
    """Sample covariance of n zero-mean draws of dimension p*f.

    Holds either the raw data (n x pf) or a dense pf x pf matrix; the dense
    matrix is built on first access when only data is stored.
    """

    n: int
    p: int
    f: int
    data: np.ndarray | None = None
    _s: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.data is None and self._s is None:
            raise ValueError("SampleCov needs data or a dense matrix")
        d = self.p * self.f
        if self.data is not None and self.data.shape[1] != d:
            raise DimensionMismatch(f"data has {self.data.shape[1]} columns, expected {d}")
        if self._s is not None and self._s.shape != (d, d):
            raise DimensionMismatch(f"s has shape {self._s.shape}, expected {(d, d)}")

    @classmethod
    def from_dense(cls, s, n: int, p: int, f: int) -> "SampleCov":
        s = np.asarray(s, dtype=float)
        return cls(n=n, p=p, f=f, _s=0.5 * (s + s.T))

    @property
    def dim(self) -> int:
        return self.p * self.f

    @property
    def s(self) -> np.ndarray:
        if self._s is None:
            z = self.data
            s = (z.T @ z) / self.n
            self._s = 0.5 * (s + s.T)
        return self._s

    @property
    def blocks(self) -> BlockView:
        return BlockView(self.s, self.p, self.f)

    def tensor(self) -> np.ndarray:
        """Data reshaped to (n, p, f): ``Z[t, i, k] = z_t[i*f + k]``."""
        return self.data.reshape(self.n, self.p, self.f)


def sample_cov(data, p: int, f: int) -> SampleCov:
    """``(1/n) sum_t z_t z_t^T`` with no mean subtraction."""
    data = np.atleast_2d(np.asarray(data, dtype=float))
    if data.shape[0] < 1:
        raise ValueError("need at least one sample")
    return SampleCov(n=data.shape[0], p=p, f=f, data=data)


def sample_matrix_normal(model: KroneckerModel, n: int, seed) -> np.ndarray:
    """n i.i.d. rows ``z ~ N(0, a0 (x) b0)``.

    Each draw is ``L_A G L_B^T`` reshaped row-major, with G a p x f standard
    normal matrix; the pf x pf Cholesky factor is never formed.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = _rng(seed)
    la = cholesky(model.a0)
    lb = cholesky(model.b0)
    g = rng.standard_normal((n, model.p, model.f))
    z = np.matmul(np.matmul(la, g), lb.T)
    return z.reshape(n, model.p * model.f)


def gen_er_precision(dim: int, edge_prob: float, rho_floor: float, seed) -> np.ndarray:
    """Erdos-Renyi sparse precision ``C~ + rho I`` with ``lambda_min = rho_floor``.

    Every entry of C (diagonal included) is 1 with probability ``edge_prob``;
    ``C~ = (C + C^T) / 2``.
    """
    if not 0.0 <= edge_prob <= 1.0:
        raise ValueError("edge_prob must lie in [0, 1]")
    if dim < 1:
        raise ValueError("dim must be >= 1")
    rng = _rng(seed)
    c = (rng.random((dim, dim)) < edge_prob).astype(float)
    ct = 0.5 * (c + c.T)
    rho = rho_floor - lambda_min(ct)
    return ct + rho * np.eye(dim)


def gen_ex4_precision(dim: int, seed, rho_floor: float = 0.5) -> np.ndarray:
    """Sparse precision with ~3*dim nonzeros, shifted to ``lambda_min = rho_floor``.

    Diagonal values and off-diagonal values are uniform on [-1, 1]; each upper
    off-diagonal position is filled with probability 2/(dim-1) (capped at 1)
    and mirrored, giving about 2*dim off-diagonal nonzeros.
    """
    if dim < 2:
        raise ValueError("dim must be >= 2")
    rng = _rng(seed)
    c = np.diag(rng.uniform(-1.0, 1.0, dim))
    iu = np.triu_indices(dim, 1)
    mask = rng.random(iu[0].size) < min(1.0, 2.0 / (dim - 1))
    vals = rng.uniform(-1.0, 1.0, iu[0].size) * mask
    c[iu] = vals
    c[(iu[1], iu[0])] = vals
    rho = rho_floor - lambda_min(c)
    return c + rho * np.eye(dim)


def gen_dense_precision(dim: int, seed) -> np.ndarray:
    """Dense SPD precision ``W W^T / dim + 0.1 I``."""
    rng = _rng(seed)
    w = rng.standard_normal((dim, dim))
    y = w @ w.T / dim + 0.1 * np.eye(dim)
    return 0.5 * (y + y.T)


# Examples 1-4 ground truth. Each returns a KroneckerModel for (p, f).
EXAMPLE_DEFAULTS = {
    1: {"p": 20, "f": 10, "generator": "er", "edge_prob": 0.1, "rho_floor": 0.05},
    2: {"p": 20, "f": 10, "generator": "dense", "edge_prob": None, "rho_floor": None},
    3: {"p": 100, "f": 100, "generator": "er", "edge_prob": 0.05, "rho_floor": 0.05},
    4: {"p": 100, "f": 100, "generator": "ex4", "edge_prob": None, "rho_floor": 0.5},
}


def make_model(generator: str, p: int, f: int, seed: int,
               edge_prob: float | None = 0.1, rho_floor: float | None = 0.05) -> KroneckerModel:
    """Draw a ground-truth model; the two factors use sub-streams 0 and 1 of ``seed``."""
    rx, ry = derive_rng(seed, 0), derive_rng(seed, 1)
    if generator == "er":
        x0 = gen_er_precision(p, edge_prob, rho_floor, rx)
        y0 = gen_er_precision(f, edge_prob, rho_floor, ry)
    elif generator == "ex4":
        x0 = gen_ex4_precision(p, rx, rho_floor if rho_floor is not None else 0.5)
        y0 = gen_ex4_precision(f, ry, rho_floor if rho_floor is not None else 0.5)
    elif generator == "dense":
        x0 = np.eye(p)
        y0 = gen_dense_precision(f, ry)
    elif generator == "identity":
        x0, y0 = np.eye(p), np.eye(f)
    else:
        raise ValueError(f"unknown generator {generator!r}")
    return KroneckerModel.from_precisions(x0, y0)
