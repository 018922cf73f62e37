"""Inner loops of the covariance code.

Every kernel exists twice: a numba ``@njit`` version and a plain numpy
version. The module-level names dispatch to numba unless it is missing or
the environment variable ``YFWL_DISABLE_NUMBA`` is set to a true value
(``1``, ``true``, ``yes``) before import. Both paths are always importable
as ``<name>_numba`` / ``<name>_numpy`` so tests and the benchmark can pit
them against each other.
"""

from __future__ import annotations

import os

import numpy as np

__all__ = [
    "BACKEND",
    "rowwise_quadform",
    "leverage_blocks",
    "hac_cross",
    "cluster_cross",
]


def _env_disabled() -> bool:
    return os.environ.get("YFWL_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}


try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False


# --------------------------------------------------------------------------
# numpy reference path
# --------------------------------------------------------------------------


def rowwise_quadform_numpy(X: np.ndarray, M: np.ndarray) -> np.ndarray:
    """Return ``x_i' M x_i`` for every row ``x_i`` of ``X``."""
    return np.einsum("ij,jk,ik->i", X, M, X)


def leverage_blocks_numpy(X1, X2, W11, W12, W22) -> np.ndarray:
    h = rowwise_quadform_numpy(X2, W22)
    if X1.shape[1]:
        h = h + rowwise_quadform_numpy(X1, W11) + 2.0 * np.einsum("ij,jk,ik->i", X1, W12, X2)
    return h


def hac_cross_numpy(Ga: np.ndarray, Gb: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Kernel-weighted lagged cross products of two score matrices.

    Computes ``sum_{i,j} w_{|i-j|} Ga_i Gb_j'`` for ``|i - j| < len(weights)``.
    """
    n = Ga.shape[0]
    out = Ga.T @ Gb * weights[0]
    for lag in range(1, min(len(weights), n)):
        w = weights[lag]
        if w == 0.0:
            continue
        out += w * (Ga[lag:].T @ Gb[:-lag] + Ga[:-lag].T @ Gb[lag:])
    return out


def cluster_cross_numpy(Ga: np.ndarray, Gb: np.ndarray, codes: np.ndarray, n_groups: int) -> np.ndarray:
    """``sum_g (sum_{i in g} Ga_i)(sum_{i in g} Gb_i)'`` for integer group codes."""
    Sa = np.zeros((n_groups, Ga.shape[1]))
    Sb = np.zeros((n_groups, Gb.shape[1]))
    np.add.at(Sa, codes, Ga)
    np.add.at(Sb, codes, Gb)
    return Sa.T @ Sb


# --------------------------------------------------------------------------
# numba path
# --------------------------------------------------------------------------

if HAVE_NUMBA:
    _jit = numba.njit(cache=True, nogil=True)

    @_jit
    def rowwise_quadform_numba(X, M):
        n, p = X.shape
        out = np.empty(n)
        for i in range(n):
            acc = 0.0
            for a in range(p):
                xa = X[i, a]
                if xa == 0.0:
                    continue
                s = 0.0
                for b in range(p):
                    s += M[a, b] * X[i, b]
                acc += xa * s
            out[i] = acc
        return out

    @_jit
    def leverage_blocks_numba(X1, X2, W11, W12, W22):
        n = X2.shape[0]
        p1 = X1.shape[1]
        p2 = X2.shape[1]
        out = np.empty(n)
        for i in range(n):
            acc = 0.0
            for a in range(p2):
                s = 0.0
                for b in range(p2):
                    s += W22[a, b] * X2[i, b]
                acc += X2[i, a] * s
            for a in range(p1):
                s = 0.0
                for b in range(p1):
                    s += W11[a, b] * X1[i, b]
                c = 0.0
                for b in range(p2):
                    c += W12[a, b] * X2[i, b]
                acc += X1[i, a] * (s + 2.0 * c)
            out[i] = acc
        return out

    @_jit
    def hac_cross_numba(Ga, Gb, weights):
        n, p = Ga.shape
        q = Gb.shape[1]
        out = np.zeros((p, q))
        nlag = min(weights.shape[0], n)
        for lag in range(nlag):
            w = weights[lag]
            if w == 0.0:
                continue
            for i in range(lag, n):
                j = i - lag
                for a in range(p):
                    ga_i = Ga[i, a]
                    ga_j = Ga[j, a]
                    for b in range(q):
                        if lag == 0:
                            out[a, b] += w * ga_i * Gb[i, b]
                        else:
                            out[a, b] += w * (ga_i * Gb[j, b] + ga_j * Gb[i, b])
        return out

    @_jit
    def cluster_cross_numba(Ga, Gb, codes, n_groups):
        n, p = Ga.shape
        q = Gb.shape[1]
        Sa = np.zeros((n_groups, p))
        Sb = np.zeros((n_groups, q))
        for i in range(n):
            g = codes[i]
            for a in range(p):
                Sa[g, a] += Ga[i, a]
            for b in range(q):
                Sb[g, b] += Gb[i, b]
        out = np.zeros((p, q))
        for g in range(n_groups):
            for a in range(p):
                sa = Sa[g, a]
                for b in range(q):
                    out[a, b] += sa * Sb[g, b]
        return out

else:  # pragma: no cover
    rowwise_quadform_numba = rowwise_quadform_numpy
    leverage_blocks_numba = leverage_blocks_numpy
    hac_cross_numba = hac_cross_numpy
    cluster_cross_numba = cluster_cross_numpy


def _c(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.float64)


if HAVE_NUMBA and not _env_disabled():
    BACKEND = "numba"

    def rowwise_quadform(X, M):
        return rowwise_quadform_numba(_c(X), _c(M))

    def leverage_blocks(X1, X2, W11, W12, W22):
        return leverage_blocks_numba(_c(X1), _c(X2), _c(W11), _c(W12), _c(W22))

    def hac_cross(Ga, Gb, weights):
        return hac_cross_numba(_c(Ga), _c(Gb), _c(weights))

    def cluster_cross(Ga, Gb, codes, n_groups):
        return cluster_cross_numba(_c(Ga), _c(Gb), np.ascontiguousarray(codes, dtype=np.int64), int(n_groups))

else:
    BACKEND = "numpy"
    rowwise_quadform = rowwise_quadform_numpy
    leverage_blocks = leverage_blocks_numpy
    hac_cross = hac_cross_numpy
    cluster_cross = cluster_cross_numpy
