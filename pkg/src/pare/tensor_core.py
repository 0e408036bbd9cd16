"""Dense complex linear-algebra kernels and third-order unfoldings.

Matrices are plain ``numpy.ndarray`` objects of dtype ``complex128``.
Vectorization follows the column-stacking convention (Fortran order), which
is the one under which ``vec(A @ B @ C) == kron(C.T, A) @ vec(B)`` holds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "DimensionError",
    "NumericalError",
    "SignalTensor",
    "kron",
    "khatri_rao",
    "vec",
    "unvec",
    "diag_from_vec",
    "diag_row",
    "pinv",
    "numerical_rank",
    "dft_matrix",
    "unfold1",
    "unfold2",
    "unfold3",
]

# Guard against accidentally materializing absurdly large Kronecker products.
_MAX_ENTRIES = 2**31


class DimensionError(ValueError):
    """Raised when operand shapes are not conformable."""


class NumericalError(ArithmeticError):
    """Raised when a decomposition fails to converge."""


def _as_matrix(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise DimensionError(f"expected a matrix, got array with shape {a.shape}")
    return a


@dataclass(frozen=True)
class SignalTensor:
    """Third-order tensor of ``K`` frontal slices, each ``M_R x T``.

    ``data`` has shape ``(K, M_R, T)``; ``data[k]`` is the k-th slice.
    The array is stored read-only so a tensor may be shared between workers.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.complex128, copy=True)
        if arr.ndim != 3:
            raise DimensionError(f"tensor must be 3-D (K, M_R, T), got shape {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_slices(cls, slices) -> "SignalTensor":
        slices = [_as_matrix(s) for s in slices]
        if not slices:
            raise DimensionError("tensor needs at least one slice")
        shape = slices[0].shape
        if any(s.shape != shape for s in slices):
            raise DimensionError("all slices must share the same M_R x T shape")
        return cls(np.stack(slices))

    @property
    def K(self) -> int:
        return self.data.shape[0]

    @property
    def M_R(self) -> int:
        return self.data.shape[1]

    @property
    def T(self) -> int:
        return self.data.shape[2]

    @property
    def slices(self) -> list[np.ndarray]:
        return list(self.data)

    def __getitem__(self, k: int) -> np.ndarray:
        return self.data[k]


def kron(a, b) -> np.ndarray:
    """Kronecker product; block ``(i, j)`` of the result is ``a[i, j] * b``."""
    a, b = _as_matrix(a), _as_matrix(b)
    size = a.size * b.size
    if size > _MAX_ENTRIES:
        raise DimensionError(f"Kronecker product would hold {size} entries")
    return np.kron(a, b)


def khatri_rao(a, b) -> np.ndarray:
    """Column-wise Kronecker product of two matrices with equal column counts.

    Column ``r`` of the result is ``kron(a[:, r], b[:, r])``.
    """
    a, b = _as_matrix(a), _as_matrix(b)
    if a.shape[1] != b.shape[1]:
        raise DimensionError(
            f"khatri_rao needs equal column counts, got {a.shape[1]} and {b.shape[1]}"
        )
    rows = a.shape[0] * b.shape[0]
    return (a[:, None, :] * b[None, :, :]).reshape(rows, a.shape[1])


def vec(a) -> np.ndarray:
    """Stack the columns of ``a`` into a single column vector."""
    a = _as_matrix(a)
    return a.reshape(-1, 1, order="F")


def unvec(v, rows: int, cols: int) -> np.ndarray:
    """Inverse of :func:`vec`."""
    v = np.asarray(v, dtype=np.complex128)
    if v.size != rows * cols:
        raise DimensionError(f"cannot unvec {v.size} entries into {rows}x{cols}")
    return v.reshape(rows, cols, order="F")


def diag_from_vec(v) -> np.ndarray:
    return np.diag(np.asarray(v, dtype=np.complex128).ravel())


def diag_row(m, k: int) -> np.ndarray:
    """Diagonal matrix holding row ``k`` of ``m`` (1-based, as ``D_k(.)``)."""
    m = _as_matrix(m)
    if not 1 <= k <= m.shape[0]:
        raise IndexError(f"row index {k} out of range 1..{m.shape[0]}")
    return np.diag(m[k - 1])


def pinv(a, return_rank: bool = False):
    """Moore-Penrose pseudo-inverse via the SVD.

    Singular values below ``max(rows, cols) * eps * sigma_max`` are treated as
    zero. With ``return_rank`` the numerical rank is returned as well.
    """
    a = _as_matrix(a)
    rows, cols = a.shape
    if a.size == 0:
        out = np.zeros((cols, rows), dtype=np.complex128)
        return (out, 0) if return_rank else out
    try:
        u, s, vh = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge for a {rows}x{cols} matrix") from exc
    tol = max(rows, cols) * np.finfo(np.float64).eps * (s[0] if s.size else 0.0)
    keep = s > tol
    s_inv = np.zeros_like(s)
    s_inv[keep] = 1.0 / s[keep]
    out = (vh.conj().T * s_inv) @ u.conj().T
    return (out, int(keep.sum())) if return_rank else out


def numerical_rank(a) -> int:
    return pinv(a, return_rank=True)[1]


def dft_matrix(n: int) -> np.ndarray:
    """Unitary ``n``-point DFT matrix, entry ``(j, k) = exp(-2i pi jk/n) / sqrt(n)``."""
    if n < 1:
        raise DimensionError(f"DFT size must be positive, got {n}")
    idx = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(idx, idx) / n) / np.sqrt(n)


def unfold1(y: SignalTensor) -> np.ndarray:
    """``[Y_1, ..., Y_K]``, shape ``M_R x TK``."""
    return np.concatenate(y.data, axis=1)


def unfold2(y: SignalTensor) -> np.ndarray:
    """``[Y_1^T, ..., Y_K^T]``, shape ``T x M_R K``."""
    return np.concatenate(y.data.transpose(0, 2, 1), axis=1)


def unfold3(y: SignalTensor) -> np.ndarray:
    """``[vec(Y_1), ..., vec(Y_K)]``, shape ``M_R T x K``."""
    # data[k] is M_R x T; column-major flattening of each slice.
    return y.data.transpose(2, 1, 0).reshape(y.M_R * y.T, y.K)
