"""Synthetic designs for property tests, demonstrations and sweeps.

Random designs draw their stacked exogenous columns ``[W1 : Z2 : V]`` from a
matrix whose singular values, after scaling by ``1/sqrt(N)``, lie in
``[0.1, 10]``, which keeps relative tolerances meaningful.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ValidatedDesign, make_design

__all__ = [
    "conditioned_matrix",
    "random_design",
    "sweep_design",
    "EndogenousConditioning",
    "endogenous_conditioning_design",
]

SV_RANGE = (0.1, 10.0)


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def conditioned_matrix(rng, n: int, p: int, sv_range=SV_RANGE) -> np.ndarray:
    """``n x p`` matrix whose singular values divided by ``sqrt(n)`` lie in ``sv_range``."""
    rng = _rng(rng)
    U, _ = np.linalg.qr(rng.standard_normal((n, p)))
    V, _ = np.linalg.qr(rng.standard_normal((p, p)))
    s = rng.uniform(*sv_range, size=p)
    return np.sqrt(n) * (U * s) @ V.T


def random_design(
    seed,
    N: int,
    k1: int = 2,
    k2: int = 1,
    k3: int = 2,
    *,
    intercept: bool = False,
    heteroskedastic: bool = False,
    endogeneity: float = 0.5,
    n_clusters: int = 0,
    instrument_loading: float = 0.0,
) -> ValidatedDesign:
    """Random linear model with ``k1`` conditioning columns and ``k2`` regressors of interest.

    ``k3 = 0`` gives a least-squares design. Otherwise the regressors of
    interest load on the instruments, the conditioning block and a shock
    ``V`` that is correlated with the structural error (``endogeneity``).
    With ``heteroskedastic`` the error scale depends on the instruments.
    ``instrument_loading`` adds ``W1 @ L`` to the instruments, with ``L``
    normal of that scale, so that partialling changes them.
    """
    rng = _rng(seed)
    n_exo = k1 + k3
    G = conditioned_matrix(rng, N, n_exo + k2)
    W1 = G[:, :k1].copy()
    if intercept and k1:
        W1[:, 0] = 1.0
    V = G[:, n_exo:] / np.sqrt(N) * 3.0
    if k3:
        Z2 = G[:, k1:n_exo]
        if instrument_loading and k1:
            Z2 = Z2 + W1 @ rng.normal(scale=instrument_loading, size=(k1, k3))
        Pi = rng.uniform(0.5, 1.5, size=(k3, k2)) * rng.choice([-1.0, 1.0], size=(k3, k2))
        Gamma = rng.normal(scale=0.5, size=(k1, k2))
        W2 = Z2 @ Pi + W1 @ Gamma + V
    else:
        Z2 = np.zeros((N, 0))
        W2 = G[:, k1:k1 + k2]
    e = rng.standard_normal(N)
    if heteroskedastic:
        drive = Z2[:, 0] if k3 else W2[:, 0]
        e = e * np.exp(0.5 * drive / (np.std(drive) + 1e-300))
    u = e + (endogeneity * V[:, 0] if k3 else 0.0)
    beta = rng.uniform(-2, 2, size=k1 + k2)
    Y = np.column_stack([W1, W2]) @ beta + u
    codes = rng.integers(0, n_clusters, size=N) if n_clusters else None
    if codes is not None:
        codes[:n_clusters] = np.arange(n_clusters)
    return make_design(
        Y, W1, W2, Z2,
        names_W1=("const", *[f"w1_{j}" for j in range(1, k1)]) if intercept and k1 else None,
        has_intercept=bool(intercept and k1),
        cluster_codes=codes,
    )


def sweep_design(seed, N: int, *, rho: float = 0.5, n_controls: int = 2, strength: float = 0.5) -> ValidatedDesign:
    """One endogenous regressor, two instruments, Gaussian errors.

    Conditioning block: intercept plus ``n_controls`` standard normal
    covariates. ``(u, v)`` are jointly normal with correlation ``rho``.
    """
    rng = _rng(seed)
    C = rng.standard_normal((N, n_controls))
    W1 = np.column_stack([np.ones(N), C])
    Z2 = rng.standard_normal((N, 2))
    u, v = rng.multivariate_normal([0.0, 0.0], [[1.0, rho], [rho, 1.0]], size=N).T
    x = 1.0 + C @ np.full(n_controls, 0.3) + strength * Z2.sum(axis=1) + v
    y = 0.5 + C @ np.full(n_controls, -0.2) + 1.0 * x + u
    return make_design(
        y, W1, x[:, None], Z2,
        names_W1=("const", *[f"c{j}" for j in range(n_controls)]),
        names_W2=("x",), names_Z2=("z0", "z1"), outcome_name="y",
        has_intercept=True,
    )


@dataclass(frozen=True, eq=False)
class EndogenousConditioning:
    """Model whose conditioning block ``W1`` is endogenous with instruments ``Z1``
    while the block of interest ``W2`` is exogenous."""

    Y: np.ndarray
    W1: np.ndarray
    W2: np.ndarray
    Z1: np.ndarray

    @property
    def dims(self) -> tuple[int, int, int, int]:
        return (self.Y.shape[0], self.W1.shape[1], self.W2.shape[1], self.Z1.shape[1])


def endogenous_conditioning_design(
    seed, N: int = 500, k1: int = 1, k2: int = 1, k3: int = 1, *, degenerate: bool = False
) -> EndogenousConditioning:
    """Generate a design for the swapped-roles limitation.

    ``degenerate=True`` builds the orthogonal-blocks case ``W1'W2 = 0`` with
    ``M_W1 Z1 = W2`` (requires ``k1 == k2 == k3``), where all three
    estimates coincide.
    """
    rng = _rng(seed)
    if k3 < k1:
        raise ValueError("need at least as many instruments as endogenous conditioning columns")
    if degenerate:
        if not k1 == k2 == k3:
            raise ValueError("the degenerate case needs k1 == k2 == k3")
        W1 = rng.standard_normal((N, k1))
        Q1, _ = np.linalg.qr(W1)
        W2 = rng.standard_normal((N, k2))
        W2 -= Q1 @ (Q1.T @ W2)
        C = np.eye(k1) + 0.3 * rng.standard_normal((k1, k1))
        Z1 = W2 + W1 @ C
        Y = W1 @ rng.uniform(-1, 1, k1) + W2 @ rng.uniform(-1, 1, k2) + rng.standard_normal(N)
        return EndogenousConditioning(Y, W1, W2, Z1)
    Z1 = rng.standard_normal((N, k3))
    W2 = rng.standard_normal((N, k2)) + 0.5 * Z1[:, :1]
    v = rng.standard_normal((N, k1))
    u = 0.8 * v[:, 0] + 0.6 * rng.standard_normal(N)
    W1 = Z1 @ rng.uniform(0.5, 1.5, size=(k3, k1)) + 0.7 * W2[:, :1] + v
    Y = W1 @ rng.uniform(-1, 1, k1) + W2 @ rng.uniform(-1, 1, k2) + u
    return EndogenousConditioning(Y, W1, W2, Z1)
