"""Sandwich covariance estimators for full and partialled IV fits.

The error covariance estimate is represented by :class:`OmegaHat`, which only
evaluates quadratic forms ``A' Omega B``; a dense N x N matrix is produced
on request for small samples.

For a fit with effective regressors ``X = P_Z W`` (``X = W`` for least
squares) the covariance of the coefficients is::

    (X'X)^{-1} X' Omega X (X'X)^{-1}

Leverages of IV fits are the diagonal of the hat matrix of ``X``; for least
squares this is the usual ``h_ii = w_i'(W'W)^{-1} w_i``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from .errors import LeverageAtOne, MissingLeverages, SingleCluster, ValidationError
from .estimators import FitResult
from .linalg import DENSE_CAP, QRFactor, block_leverages, partitioned_inverse
from .model import ValidatedDesign

__all__ = [
    "KINDS",
    "LEVERAGE_KINDS",
    "CovSpec",
    "OmegaHat",
    "VcovResult",
    "bartlett_weights",
    "omega_hat",
    "effective_regressors",
    "sandwich",
    "sandwich_full",
    "sandwich_partial",
    "leverages_via_partition",
    "partial_leverages",
    "partial_inference_hc2_family",
    "df_ratio",
]

KINDS = ("homo", "hc0", "hc1", "hc2", "hc3", "hc4", "hc5", "hac", "cluster-cv1")
LEVERAGE_KINDS = ("hc2", "hc3", "hc4", "hc5")

_ALIASES = {
    "homoskedastic": "homo",
    "clustercv1": "cluster-cv1",
    "cv1": "cluster-cv1",
    "cluster": "cluster-cv1",
}

#: Maximum-leverage constant in the HC5 exponent.
HC5_K = 0.7

LEVERAGE_ONE_TOL = 1e-12


def bartlett_weights(lags: int) -> np.ndarray:
    """``w_j = 1 - j / (lags + 1)`` for ``j = 0..lags``."""
    return 1.0 - np.arange(lags + 1) / (lags + 1.0)


def _kernel(name: str) -> Callable[[int], np.ndarray]:
    if name == "bartlett":
        return bartlett_weights
    if name in ("uniform", "truncated"):
        return lambda lags: np.ones(lags + 1)
    if name == "parzen":
        def parzen(lags):
            z = np.arange(lags + 1) / (lags + 1.0)
            return np.where(z <= 0.5, 1 - 6 * z**2 + 6 * z**3, 2 * (1 - z) ** 3)
        return parzen
    raise ValidationError(f"unknown HAC kernel {name!r}")


@dataclass(frozen=True)
class CovSpec:
    """Choice of error covariance estimator.

    ``hac_kernel`` is either a kernel name (``bartlett``, ``parzen``,
    ``uniform``) or a callable mapping the lag count to the weight vector
    ``w_0..w_lags``.
    """

    kind: str
    hac_lags: int | None = None
    hac_kernel: str | Callable[[int], np.ndarray] = "bartlett"
    clusters: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        kind = _ALIASES.get(self.kind.lower(), self.kind.lower())
        if kind not in KINDS:
            raise ValidationError(f"unknown covariance kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if kind == "hac":
            if self.hac_lags is None or self.hac_lags < 0:
                raise ValidationError("HAC needs a non-negative lag count")
            w = self.hac_weights()
            if w[0] != 1.0 or np.any(np.abs(w) > 1.0):
                raise ValidationError("HAC weights need w_0 = 1 and |w_j| <= 1")
        elif self.hac_lags is not None:
            raise ValidationError("hac_lags is only valid with kind='hac'")

    def hac_weights(self) -> np.ndarray:
        fn = _kernel(self.hac_kernel) if isinstance(self.hac_kernel, str) else self.hac_kernel
        w = np.asarray(fn(self.hac_lags), dtype=np.float64)
        if w.shape != (self.hac_lags + 1,):
            raise ValidationError("HAC kernel must return hac_lags + 1 weights")
        return w

    @property
    def needs_leverages(self) -> bool:
        return self.kind in LEVERAGE_KINDS


class OmegaHat:
    """Error covariance estimate evaluated through quadratic forms.

    ``quad(A, B)`` returns ``A' Omega B`` for N x p and N x q matrices.
    """

    def __init__(self, residuals, spec: CovSpec, dims: tuple[int, int], leverages=None, clusters=None):
        u = np.asarray(residuals, dtype=np.float64).reshape(-1)
        N, k_used = dims
        if u.shape[0] != N:
            raise ValueError(f"residual length {u.shape[0]} does not match N = {N}")
        self.u = u
        self.spec = spec
        self.N = N
        self.k_used = k_used
        self.kind = spec.kind
        self.diag: np.ndarray | None = None
        self.scale = 1.0
        if spec.needs_leverages:
            if leverages is None:
                raise MissingLeverages(f"{spec.kind} needs leverages")
            h = np.asarray(leverages, dtype=np.float64).reshape(-1)
            if h.shape[0] != N:
                raise ValueError("leverage vector has wrong length")
            bad = np.flatnonzero(h >= 1.0 - LEVERAGE_ONE_TOL)
            if bad.size:
                raise LeverageAtOne(int(bad[0]), float(h[bad[0]]))
            self.h = h
        u2 = u * u
        kind = spec.kind
        if kind == "homo":
            self.scale = float(u @ u) / (N - k_used)
            self.diag = np.full(N, self.scale)
        elif kind == "hc0":
            self.diag = u2
        elif kind == "hc1":
            self.scale = N / (N - k_used)
            self.diag = self.scale * u2
        elif kind == "hc2":
            self.diag = u2 / (1.0 - self.h)
        elif kind == "hc3":
            self.diag = u2 / (1.0 - self.h) ** 2
        elif kind == "hc4":
            delta = np.minimum(4.0, N * self.h / k_used)
            self.diag = u2 / (1.0 - self.h) ** delta
        elif kind == "hc5":
            alpha = np.minimum(N * self.h / k_used, max(4.0, N * HC5_K * self.h.max() / k_used))
            self.diag = u2 / np.sqrt((1.0 - self.h) ** alpha)
        elif kind == "hac":
            self.weights = spec.hac_weights()
        elif kind == "cluster-cv1":
            labels = clusters if clusters is not None else spec.clusters
            if labels is None:
                raise ValidationError("cluster-cv1 needs cluster labels")
            labels = np.asarray(labels)
            if labels.shape[0] != N:
                raise ValueError("cluster label vector has wrong length")
            if np.issubdtype(labels.dtype, np.integer) and labels.min() >= 0:
                codes = labels.astype(np.int64)
                _, codes = np.unique(codes, return_inverse=True)
            else:
                _, codes = np.unique(labels.astype(str), return_inverse=True)
            self.codes = codes.astype(np.int64)
            self.G = int(self.codes.max()) + 1
            if self.G < 2:
                raise SingleCluster("cluster-robust covariance needs at least two clusters")
            self.scale = self.G * (N - 1) / ((self.G - 1) * (N - k_used))

    def quad(self, A, B=None) -> np.ndarray:
        A = np.asarray(A, dtype=np.float64)
        A2 = A[:, None] if A.ndim == 1 else A
        B2 = A2 if B is None else (np.asarray(B, dtype=np.float64)[:, None] if np.ndim(B) == 1 else np.asarray(B, dtype=np.float64))
        if self.diag is not None:
            out = (A2 * self.diag[:, None]).T @ B2
        elif self.kind == "hac":
            out = _kernels.hac_cross(A2 * self.u[:, None], B2 * self.u[:, None], self.weights)
        else:
            out = self.scale * _kernels.cluster_cross(A2 * self.u[:, None], B2 * self.u[:, None], self.codes, self.G)
        return out

    def dense(self, cap: int = DENSE_CAP) -> np.ndarray:
        if self.N > cap:
            raise MemoryError(f"refusing to materialize a {self.N} x {self.N} matrix (cap {cap})")
        if self.diag is not None:
            return np.diag(self.diag)
        if self.kind == "hac":
            lag = np.abs(np.subtract.outer(np.arange(self.N), np.arange(self.N)))
            w = np.zeros(self.N)
            m = min(len(self.weights), self.N)
            w[:m] = self.weights[:m]
            return w[lag] * np.outer(self.u, self.u)
        same = self.codes[:, None] == self.codes[None, :]
        return self.scale * same * np.outer(self.u, self.u)


def omega_hat(residuals, spec: CovSpec, dims: tuple[int, int], leverages=None, clusters=None) -> OmegaHat:
    return OmegaHat(residuals, spec, dims, leverages, clusters)


@dataclass(frozen=True, eq=False)
class VcovResult:
    matrix: np.ndarray
    names: tuple[str, ...]
    kind: str
    model_form: str
    df_factor_applied: float = 1.0
    k1: int = 0
    leverage_source: str | None = None

    @property
    def interest_block(self) -> np.ndarray:
        """The block belonging to the regressors of interest."""
        return self.matrix[self.k1:, self.k1:]

    @property
    def std_errors(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.matrix), 0.0, None))


def effective_regressors(design: ValidatedDesign) -> np.ndarray:
    """``P_Z W``, equal to ``W`` for least-squares designs."""
    return design.W if design.is_ols else design.Xhat


def sandwich(X: np.ndarray, omega: OmegaHat) -> np.ndarray:
    """``(X'X)^{-1} X' Omega X (X'X)^{-1}``."""
    H = QRFactor.of(X, "X").ls_operator()
    V = omega.quad(H.T)
    return 0.5 * (V + V.T)


def _clusters_for(design: ValidatedDesign, spec: CovSpec):
    if spec.kind != "cluster-cv1":
        return None
    if spec.clusters is not None:
        return spec.clusters
    if design.cluster_codes is None:
        raise ValidationError("cluster-cv1 needs cluster labels on the design or the CovSpec")
    return design.cluster_codes


def _check_fit(design: ValidatedDesign, fit: FitResult) -> None:
    if fit.estimator not in ("ols", "iv", "2sls"):
        raise ValidationError(f"sandwich covariance is defined for ols/iv/2sls fits, not {fit.estimator!r}")
    if fit.residuals.shape[0] != design.N:
        raise ValueError("fit and design disagree on N")


def sandwich_full(design: ValidatedDesign, fit: FitResult, spec: CovSpec, leverages=None) -> VcovResult:
    """Covariance of the full coefficient vector; ``k_used = k1 + k2``."""
    _check_fit(design, fit)
    X = effective_regressors(design)
    if spec.needs_leverages and leverages is None:
        leverages = leverages_via_partition(design)
    om = omega_hat(fit.residuals, spec, (design.N, design.k), leverages, _clusters_for(design, spec))
    return VcovResult(sandwich(X, om), design.names, spec.kind, design.form, om.scale, design.k1,
                      "full" if spec.needs_leverages else None)


def partial_leverages(design: ValidatedDesign) -> np.ndarray:
    """Leverages of the partial model's own regressors ``P_{Z2~} W2~``."""
    pd = design.partialled()
    X = effective_regressors(pd)
    fac = QRFactor.of(X, "X~")
    return np.einsum("ij,ij->i", fac.Q, fac.Q)


def sandwich_partial(design: ValidatedDesign, fit: FitResult, spec: CovSpec, leverages=None) -> VcovResult:
    """Covariance of the partial-model coefficients; ``k_used = k2``.

    Leverage-based kinds default to the partial design's own leverages,
    which do not reproduce the full-model result; see
    :func:`partial_inference_hc2_family` for the variant that does.
    """
    _check_fit(design, fit)
    pd = design.partialled()
    X = effective_regressors(pd)
    source = None
    if spec.needs_leverages:
        source = "supplied" if leverages is not None else "partial"
        if leverages is None:
            leverages = partial_leverages(design)
    om = omega_hat(fit.residuals, spec, (design.N, design.k2), leverages, _clusters_for(design, spec))
    return VcovResult(sandwich(X, om), pd.names, spec.kind, "partial", om.scale, 0, source)


def leverages_via_partition(design: ValidatedDesign) -> np.ndarray:
    """Full-design leverages from the partitioned inverse of ``X'X``.

    ``X = [W1 : X2]`` with ``X2 = P_Z W2`` (``W2`` for least squares), which
    equals ``P_Z W`` because ``P_Z W1 = W1``. Only k1 x k1 and k2 x k2
    systems are factored.
    """
    full = design
    X2 = full.W2 if full.is_ols else full.projector_Z.P(full.W2)
    inv = partitioned_inverse(full.W1, X2)
    h = block_leverages(full.W1, X2, inv)
    return np.clip(h, 0.0, 1.0)


def partial_inference_hc2_family(design: ValidatedDesign, spec: CovSpec, fit: FitResult | None = None) -> VcovResult:
    """Full-model HC2..HC5 covariance of ``b2`` from the partial regression.

    1. residualize ``Y``, ``W2`` and ``Z2`` on ``W1``;
    2. fit the partial model;
    3. compute the full-design leverages from the partitioned inverse;
    4. evaluate the sandwich on the partial regressors and residuals with
       those leverages.
    """
    if not spec.needs_leverages:
        raise ValidationError(f"partial_inference_hc2_family handles {LEVERAGE_KINDS}, not {spec.kind!r}")
    from .estimators import tsls

    pd = design.partialled()
    if fit is None:
        fit = tsls(pd)
        fit = FitResult(fit.coefficients, fit.names, fit.residuals, "ols" if design.is_ols else "2sls",
                        fit.params, fit.form, fit.dims)
    h = leverages_via_partition(design)
    X = effective_regressors(pd)
    om = omega_hat(fit.residuals, spec, (design.N, design.k), h)
    return VcovResult(sandwich(X, om), pd.names, spec.kind, "partial", 1.0, 0, "full")


def df_ratio(kind: str, N: int, k: int, k2: int) -> float:
    """Factor ``f`` with ``Var_partial = f * Var_full`` on the interest block."""
    kind = _ALIASES.get(kind, kind)
    if kind in ("homo", "hc1", "cluster-cv1"):
        return (N - k) / (N - k2)
    return 1.0
