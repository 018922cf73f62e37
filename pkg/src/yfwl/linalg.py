"""Dense least-squares and projection primitives.

Everything here goes through a column-pivoted QR factorization. Explicit
inverses of cross-product matrices are never formed for solves; the hat
matrix ``P_X`` and residual maker ``M_X`` are applied as operators and only
materialized on request for small ``N``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from . import _kernels
from .errors import NotPositiveDefinite, RankDeficient

#: Relative threshold on |R_jj| / |R_00| below which a column is dependent.
RANK_RTOL = 1e-10

#: Largest N for which N x N operators may be materialized.
DENSE_CAP = 2000

__all__ = [
    "RANK_RTOL",
    "DENSE_CAP",
    "QRFactor",
    "Projector",
    "PartitionedInverse",
    "as_matrix",
    "check_full_rank",
    "check_relevance",
    "matrix_rank",
    "solve_ls",
    "residualize",
    "project",
    "least_squares_operator",
    "hat_diagonal",
    "partitioned_inverse",
    "block_leverages",
    "smallest_gen_eigenvalue",
]


def as_matrix(a, name: str | None = None) -> np.ndarray:
    """Coerce to a 2-D float array, turning vectors into single columns."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValueError(f"{name or 'input'} must be 1-D or 2-D, got shape {arr.shape}")
    if arr.size and not np.all(np.isfinite(arr)):
        raise ValueError(f"{name or 'input'} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class QRFactor:
    """Economic column-pivoted QR of an N x p matrix, ``X[:, perm] = Q R``."""

    Q: np.ndarray
    R: np.ndarray
    perm: np.ndarray

    @classmethod
    def of(cls, X: np.ndarray, block: str | None = None, rtol: float = RANK_RTOL) -> "QRFactor":
        X = as_matrix(X, block)
        n, p = X.shape
        if p == 0:
            return cls(np.zeros((n, 0)), np.zeros((0, 0)), np.zeros(0, dtype=np.intp))
        if n < p:
            raise RankDeficient(block, p - 1, f"{n} rows for {p} columns")
        Q, R, perm = sla.qr(X, mode="economic", pivoting=True)
        diag = np.abs(np.diag(R))
        if diag[0] == 0.0:
            raise RankDeficient(block, int(perm[0]), "zero matrix")
        bad = np.flatnonzero(diag <= rtol * diag[0])
        if bad.size:
            raise RankDeficient(block, int(perm[bad[0]]))
        return cls(Q, R, perm)

    @property
    def ncols(self) -> int:
        return self.R.shape[1]

    def solve(self, y: np.ndarray) -> np.ndarray:
        """Least-squares coefficients for each column of ``y``."""
        y2 = as_matrix(y)
        out = np.empty((self.ncols, y2.shape[1]))
        if self.ncols:
            out[self.perm] = sla.solve_triangular(self.R, self.Q.T @ y2)
        return out

    def project(self, V: np.ndarray) -> np.ndarray:
        return self.Q @ (self.Q.T @ V)

    def residualize(self, V: np.ndarray) -> np.ndarray:
        return V - self.Q @ (self.Q.T @ V)

    def inverse_gram(self) -> np.ndarray:
        """``(X'X)^{-1}`` from the triangular factor."""
        p = self.ncols
        if p == 0:
            return np.zeros((0, 0))
        Rinv = sla.solve_triangular(self.R, np.eye(p))
        G = Rinv @ Rinv.T
        out = np.empty_like(G)
        out[np.ix_(self.perm, self.perm)] = G
        return out

    def ls_operator(self) -> np.ndarray:
        """The p x N matrix ``(X'X)^{-1} X'``."""
        p = self.ncols
        out = np.empty((p, self.Q.shape[0]))
        if p:
            out[self.perm] = sla.solve_triangular(self.R, self.Q.T)
        return out


def solve_ls(X, y) -> np.ndarray:
    """Column-wise least squares ``argmin ||y - X b||``.

    Returns a ``p`` vector when ``y`` is 1-D and a ``p x m`` matrix
    otherwise. Raises :class:`RankDeficient` if ``X`` lacks full column rank.
    """
    b = QRFactor.of(X, "X").solve(y)
    return b[:, 0] if np.ndim(y) == 1 else b


def residualize(X, V) -> np.ndarray:
    """``M_X V``: residuals of ``V`` after least squares on ``X``."""
    Xm = as_matrix(X, "X")
    Vm = np.asarray(V, dtype=np.float64)
    if Xm.shape[1] == 0:
        return Vm.copy()
    return QRFactor.of(Xm, "X").residualize(Vm)


def project(X, V) -> np.ndarray:
    """``P_X V``: fitted values of ``V`` from least squares on ``X``."""
    Xm = as_matrix(X, "X")
    Vm = np.asarray(V, dtype=np.float64)
    if Xm.shape[1] == 0:
        return np.zeros_like(Vm)
    return QRFactor.of(Xm, "X").project(Vm)


def least_squares_operator(X) -> np.ndarray:
    """``(X'X)^{-1} X'`` as a dense p x N matrix."""
    return QRFactor.of(X, "X").ls_operator()


def hat_diagonal(X) -> np.ndarray:
    """Leverages ``h_ii = x_i'(X'X)^{-1}x_i`` (squared row norms of ``Q``)."""
    fac = QRFactor.of(X, "X")
    return np.einsum("ij,ij->i", fac.Q, fac.Q)


def matrix_rank(A, rtol: float = RANK_RTOL) -> int:
    """Numerical rank by singular values relative to the largest one."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    if A.size == 0:
        return 0
    s = np.linalg.svd(A, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def check_full_rank(X, block: str) -> None:
    QRFactor.of(X, block)


def check_relevance(Z, W, block: str = "P_Z W", rtol: float = RANK_RTOL) -> np.ndarray:
    """Return ``P_Z W`` after checking it keeps the column rank of ``W``.

    The smallest singular value of ``P_Z W`` is compared with the scale of
    ``W`` itself, so instruments that are numerically orthogonal to a
    regressor are rejected even when the projection is not exactly zero.
    """
    W = as_matrix(W, "W")
    X = QRFactor.of(Z, "Z").project(W)
    s = np.linalg.svd(X, compute_uv=False)
    scale = np.linalg.norm(W, 2)
    if s.size and s.min() <= rtol * scale:
        raise RankDeficient(block, int(np.argmin(np.linalg.norm(X, axis=0))),
                            "instruments carry no information on some regressor")
    return X


class Projector:
    """Hat matrix and residual maker of a full-column-rank basis.

    The operators are applied through a QR factor and never formed as N x N
    arrays unless :meth:`dense` is called with ``N <= cap``.
    """

    def __init__(self, basis, name: str = "X", cap: int = DENSE_CAP):
        self.basis = as_matrix(basis, name)
        self.name = name
        self.cap = cap
        self._qr = QRFactor.of(self.basis, name)

    @property
    def n(self) -> int:
        return self.basis.shape[0]

    @property
    def rank(self) -> int:
        return self.basis.shape[1]

    def P(self, V) -> np.ndarray:
        V = np.asarray(V, dtype=np.float64)
        if self.rank == 0:
            return np.zeros_like(V)
        return self._qr.project(V)

    def M(self, V) -> np.ndarray:
        V = np.asarray(V, dtype=np.float64)
        if self.rank == 0:
            return V.copy()
        return self._qr.residualize(V)

    def coef(self, V) -> np.ndarray:
        return self._qr.solve(V)

    def leverages(self) -> np.ndarray:
        return np.einsum("ij,ij->i", self._qr.Q, self._qr.Q)

    def dense(self, residual: bool = False) -> np.ndarray:
        if self.n > self.cap:
            raise MemoryError(f"refusing to materialize a {self.n} x {self.n} operator (cap {self.cap})")
        Pm = self._qr.Q @ self._qr.Q.T
        return np.eye(self.n) - Pm if residual else Pm


@dataclass(frozen=True)
class PartitionedInverse:
    """Blocks of ``(W'W)^{-1}`` for ``W = [W1 : W2]``."""

    W11: np.ndarray
    W12: np.ndarray
    W22: np.ndarray

    @property
    def W21(self) -> np.ndarray:
        return self.W12.T

    def assemble(self) -> np.ndarray:
        return np.block([[self.W11, self.W12], [self.W21, self.W22]])


def partitioned_inverse(W1, W2) -> PartitionedInverse:
    """Inverse of ``W'W`` assembled from k1 x k1 and k2 x k2 pieces only.

    With ``B = (W1'W1)^{-1} W1'W2`` and ``W2~ = M_{W1} W2``::

        W22 = (W2~' W2~)^{-1}
        W12 = -B W22
        W11 = (W1'W1)^{-1} + B W22 B'
    """
    W1 = as_matrix(W1, "W1")
    W2 = as_matrix(W2, "W2")
    k1 = W1.shape[1]
    if k1 == 0:
        W22 = QRFactor.of(W2, "W2").inverse_gram()
        return PartitionedInverse(np.zeros((0, 0)), np.zeros((0, W2.shape[1])), W22)
    f1 = QRFactor.of(W1, "W1")
    B = f1.solve(W2)
    W2t = W2 - W1 @ B
    W22 = QRFactor.of(W2t, "M_W1 W2").inverse_gram()
    W12 = -B @ W22
    W11 = f1.inverse_gram() + B @ W22 @ B.T
    return PartitionedInverse(0.5 * (W11 + W11.T), W12, 0.5 * (W22 + W22.T))


def block_leverages(X1, X2, inv: PartitionedInverse) -> np.ndarray:
    """Row-wise ``x_i' (X'X)^{-1} x_i`` from the partitioned-inverse blocks."""
    return _kernels.leverage_blocks(as_matrix(X1), as_matrix(X2), inv.W11, inv.W12, inv.W22)


def smallest_gen_eigenvalue(A, B) -> float:
    """Smallest root of ``det(A - lambda B) = 0`` for symmetric A and SPD B."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.shape != B.shape or A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"A and B must be square and conformable, got {A.shape} and {B.shape}")
    Bs = 0.5 * (B + B.T)
    try:
        L = sla.cholesky(Bs, lower=True)
    except sla.LinAlgError as exc:
        raise NotPositiveDefinite("B is not positive definite") from exc
    # C = L^{-1} A L^{-T} shares its spectrum with the pencil (A, B).
    tmp = sla.solve_triangular(L, 0.5 * (A + A.T), lower=True)
    C = sla.solve_triangular(L, tmp.T, lower=True)
    C = 0.5 * (C + C.T)
    return float(np.linalg.eigvalsh(C)[0])
