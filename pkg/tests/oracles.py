"""Brute-force dense reference implementations used only by the tests.

Everything is written with explicit inverses and N x N matrices, as far from
the package's QR-based code paths as possible.
"""

import numpy as np
from scipy.optimize import brentq

inv = np.linalg.inv


def P(X):
    return X @ inv(X.T @ X) @ X.T


def M(X):
    return np.eye(X.shape[0]) - P(X)


def tsls(Y, W, Z):
    PZ = P(Z)
    return inv(W.T @ PZ @ W) @ W.T @ PZ @ Y


def kclass(Y, W, Z, K):
    A = np.eye(len(Y)) - K * M(Z)
    return inv(W.T @ A @ W) @ W.T @ A @ Y


def gmm(Y, W, Z, Wn):
    return inv(W.T @ Z @ Wn @ Z.T @ W) @ W.T @ Z @ Wn @ Z.T @ Y


def liml_kappa_eig(Y, W1, W2, Z):
    U = np.column_stack([Y, W2])
    A = U.T @ M(W1) @ U if W1.shape[1] else U.T @ U
    B = U.T @ M(Z) @ U
    return float(np.min(np.linalg.eigvals(inv(B) @ A).real))


def liml_kappa_root(Y, W1, W2, Z):
    """Smallest root of det(A - lambda B) located by a scan and bisection."""
    U = np.column_stack([Y, W2])
    A = U.T @ M(W1) @ U if W1.shape[1] else U.T @ U
    B = U.T @ M(Z) @ U
    f = lambda lam: np.linalg.det(A - lam * B)
    hi = float(np.max(np.linalg.eigvals(inv(B) @ A).real)) * 1.01 + 1.0
    grid = np.linspace(0.0, hi, 2001)
    vals = np.array([f(g) for g in grid])
    idx = np.flatnonzero(np.sign(vals[:-1]) != np.sign(vals[1:]))[0]
    return brentq(f, grid[idx], grid[idx + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps)


def dense_omega(u, kind, k_used, h=None, lags=None, weights=None, clusters=None):
    N = len(u)
    if kind == "homo":
        return (u @ u) / (N - k_used) * np.eye(N)
    if kind == "hc0":
        return np.diag(u**2)
    if kind == "hc1":
        return N / (N - k_used) * np.diag(u**2)
    if kind == "hc2":
        return np.diag(u**2 / (1 - h))
    if kind == "hc3":
        return np.diag(u**2 / (1 - h) ** 2)
    if kind == "hc4":
        return np.diag(u**2 / (1 - h) ** np.minimum(4, N * h / k_used))
    if kind == "hc5":
        a = np.minimum(N * h / k_used, max(4, 0.7 * N * h.max() / k_used))
        return np.diag(u**2 / np.sqrt((1 - h) ** a))
    if kind == "hac":
        if weights is None:
            weights = [1 - j / (lags + 1) for j in range(lags + 1)]
        O = np.zeros((N, N))
        for i in range(N):
            for j in range(N):
                d = abs(i - j)
                if d < len(weights):
                    O[i, j] = weights[d] * u[i] * u[j]
        return O
    if kind == "cluster-cv1":
        G = len(np.unique(clusters))
        O = np.zeros((N, N))
        for g in np.unique(clusters):
            idx = np.flatnonzero(clusters == g)
            O[np.ix_(idx, idx)] = np.outer(u[idx], u[idx])
        return G * (N - 1) / ((G - 1) * (N - k_used)) * O
    raise ValueError(kind)


def sandwich(X, Omega):
    H = inv(X.T @ X) @ X.T
    return H @ Omega @ H.T


def rel(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    s = max(np.abs(a).max(), np.abs(b).max())
    return 0.0 if s == 0 else float(np.abs(a - b).max() / s)
