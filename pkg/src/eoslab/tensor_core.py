"""Dense symmetric eigensolves, third-order tensor contractions, and seeded sampling.

Everything here is a pure function over plain numpy arrays.  Q-like tensors are
dense (d_out, d_param, d_param) arrays whose per-slice symmetry (last two
indices) is an invariant the rest of the library relies on.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_U64_MAX = 2**64 - 1


@dataclass(frozen=True)
class RngSpec:
    """A reproducible random stream: (seed, stream_id) keys a Philox generator.

    The same pair yields the same sample sequence everywhere (counter-based
    generator with explicit 2x64-bit key; normals via numpy's ziggurat).
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or not (0 <= int(v) <= _U64_MAX):
                raise ValueError(f"{name} must be an unsigned 64-bit integer, got {v!r}")

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(key=[int(self.seed), int(self.stream_id)]))


def _check_square_symmetric(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    scale = np.max(np.abs(m)) if m.size else 0.0
    if scale and np.max(np.abs(m - m.T)) > 1e-8 * scale:
        raise ValueError("matrix is not symmetric")
    return m


def sym_eigen(m) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix, eigenvalues sorted descending.

    Returns (w, v) with m @ v[:, i] == w[i] * v[:, i] and orthonormal columns.
    """
    m = _check_square_symmetric(m)
    w, v = np.linalg.eigh(m)
    return w[::-1].copy(), v[:, ::-1].copy()


def check_q_tensor(q) -> np.ndarray:
    """Validate a (d_out, d_param, d_param) tensor symmetric in its last two indices."""
    q = np.asarray(q, dtype=float)
    if q.ndim != 3 or q.shape[1] != q.shape[2]:
        raise ValueError(f"expected shape (d_out, d_param, d_param), got {q.shape}")
    if not np.array_equal(q, q.transpose(0, 2, 1)):
        raise ValueError("tensor slices are not symmetric in the last two indices")
    return q


def contract_full(q, u, v) -> np.ndarray:
    """out[a] = sum_ij q[a,i,j] u[i] v[j]  (a bilinear form per output slice)."""
    q = np.asarray(q, dtype=float)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if q.ndim != 3 or u.shape != (q.shape[1],) or v.shape != (q.shape[2],):
        raise ValueError(f"dimension mismatch: q {q.shape}, u {u.shape}, v {v.shape}")
    return (q @ v) @ u


def contract_partial(q, u) -> np.ndarray:
    """out[a, j] = sum_i q[a,i,j] u[i]  (contract the middle index)."""
    q = np.asarray(q, dtype=float)
    u = np.asarray(u, dtype=float)
    if q.ndim != 3 or u.shape != (q.shape[1],):
        raise ValueError(f"dimension mismatch: q {q.shape}, u {u.shape}")
    return np.tensordot(q, u, axes=([1], [0]))


def gaussian_tensor(shape, sigma: float, rng: RngSpec, *, symmetrize_slices: bool = False):
    """i.i.d. normal(0, sigma^2) array of the given shape, deterministic in rng.

    With symmetrize_slices=True (requires ndim == 3 with equal trailing dims) each
    output slice is replaced by its symmetric part (A + A^T)/2, so slices are
    exactly symmetric; symmetrized off-diagonal entries then have variance
    sigma^2/2 while diagonals keep sigma^2, and bilinear forms of the result are
    distributed identically to those of the raw i.i.d. draw.
    """
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    shape = tuple(int(s) for s in shape)
    if any(s < 0 for s in shape):
        raise ValueError(f"invalid shape {shape}")
    a = rng.generator().standard_normal(shape) * sigma
    if symmetrize_slices:
        if len(shape) != 3 or shape[1] != shape[2]:
            raise ValueError("slice symmetrization needs shape (d_out, d, d)")
        a = (a + a.transpose(0, 2, 1)) / 2.0
    return a


def mp_lambda_max_mean(d: int, p: int, sigma_j: float) -> float:
    """Large-size mean of the top eigenvalue of J J^T for J with i.i.d. N(0, sigma_j^2) entries.

    This is the upper edge of the Marchenko-Pastur law: sigma_j^2 * p * (1 + sqrt(d/p))^2.
    """
    if d < 1 or p < 1:
        raise ValueError("d and p must be positive")
    if sigma_j < 0:
        raise ValueError("sigma_j must be nonnegative")
    return sigma_j**2 * p * (1.0 + (d / p) ** 0.5) ** 2
