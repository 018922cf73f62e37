"""Linear instrumental-variables estimators.

Every estimator takes a :class:`~yfwl.model.ValidatedDesign` and works the
same way on full and partialled designs, so the partial-model variant of any
estimator is ``estimator(design.partialled())``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
import scipy.linalg as sla

from .errors import (
    NotPositiveDefinite,
    OrderConditionViolated,
    RankDeficient,
    SingularSystem,
    ValidationError,
    ZeroResidual,
)
from .linalg import QRFactor, as_matrix, smallest_gen_eigenvalue
from .model import ValidatedDesign

__all__ = [
    "FitResult",
    "WeightingMatrix",
    "ols",
    "tsls",
    "tsls_full",
    "tsls_partial",
    "iv",
    "kclass",
    "liml_kappa",
    "liml",
    "fuller",
    "gmm",
    "igmm",
    "two_step_gmm",
    "two_step_gmm_projection_form",
    "ESTIMATORS",
    "fit",
]


@dataclass(frozen=True, eq=False)
class FitResult:
    coefficients: np.ndarray
    names: tuple[str, ...]
    residuals: np.ndarray
    estimator: str
    params: dict[str, Any] = field(default_factory=dict)
    form: str = "full"
    dims: tuple[int, int, int, int] = (0, 0, 0, 0)
    metadata: dict[str, Any] = field(default_factory=dict)

    @property
    def k1(self) -> int:
        return self.dims[1] if self.form == "full" else 0

    @property
    def b2(self) -> np.ndarray:
        """Coefficients on the block of interest."""
        return self.coefficients[self.k1:]

    @property
    def names_b2(self) -> tuple[str, ...]:
        return self.names[self.k1:]

    def coef(self, name: str) -> float:
        return float(self.coefficients[self.names.index(name)])

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.names, map(float, self.coefficients)))


@dataclass(frozen=True)
class WeightingMatrix:
    """Symmetric positive definite weight on the instrument moment conditions."""

    kind: str
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("weighting matrix must be square")
        if not np.allclose(m, m.T, rtol=1e-10, atol=1e-12 * max(1.0, np.abs(m).max())):
            raise NotPositiveDefinite("weighting matrix is not symmetric")
        object.__setattr__(self, "matrix", 0.5 * (m + m.T))

    @classmethod
    def identity(cls, n: int) -> "WeightingMatrix":
        return cls("Identity", np.eye(n))

    @classmethod
    def custom(cls, matrix) -> "WeightingMatrix":
        return cls("Custom", matrix)

    def cholesky(self) -> np.ndarray:
        """Lower factor ``C`` with ``matrix = C C'``."""
        try:
            return sla.cholesky(self.matrix, lower=True)
        except sla.LinAlgError as exc:
            raise NotPositiveDefinite("weighting matrix is not positive definite") from exc


def _result(design: ValidatedDesign, b: np.ndarray, estimator: str, **params) -> FitResult:
    metadata = params.pop("metadata", {})
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    u = design.Y - design.W @ b
    return FitResult(b, design.names, u, estimator, params, design.form, design.dims, metadata)


def _require_instruments(design: ValidatedDesign, what: str) -> None:
    if design.is_ols:
        raise OrderConditionViolated(0, design.k2)


def _solve_sym(A: np.ndarray, c: np.ndarray, what: str) -> np.ndarray:
    """Solve a symmetric system after equilibrating its diagonal."""
    d = np.sqrt(np.abs(np.diag(A)))
    if np.any(d == 0.0):
        raise SingularSystem(f"{what}: zero diagonal entry")
    As = A / np.outer(d, d)
    if not np.all(np.isfinite(As)):
        raise SingularSystem(f"{what}: non-finite entries")
    cond = np.linalg.cond(As)
    if not cond <= 1e14:
        raise SingularSystem(f"{what}: condition number {cond:.3g}")
    return sla.solve(As, c / d, assume_a="sym") / d


# ---------------------------------------------------------------------------
# least squares and 2SLS
# ---------------------------------------------------------------------------


def ols(Y, W, names=None) -> FitResult:
    """Least squares of ``Y`` on ``W``."""
    W = as_matrix(W, "W")
    Y = np.asarray(Y, dtype=np.float64).reshape(-1)
    b = QRFactor.of(W, "W").solve(Y)[:, 0]
    names = tuple(names) if names is not None else tuple(f"x{j}" for j in range(W.shape[1]))
    N, k = W.shape
    return FitResult(b, names, Y - W @ b, "ols", {}, "full", (N, 0, k, 0))


def _ols_design(design: ValidatedDesign) -> FitResult:
    b = QRFactor.of(design.W, "W").solve(design.Y)[:, 0]
    return _result(design, b, "ols")


def tsls(design: ValidatedDesign) -> FitResult:
    """2SLS, ``b = [(P_Z W)'W]^{-1} (P_Z W)'Y``.

    Because ``(P_Z W)'W = (P_Z W)'(P_Z W)`` this is least squares of ``Y`` on
    ``P_Z W``. On a least-squares design it reduces to OLS.
    """
    b = QRFactor.of(design.Xhat, "P_Z W").solve(design.Y)[:, 0]
    return _result(design, b, "2sls")


def tsls_full(design: ValidatedDesign) -> FitResult:
    if design.form != "full":
        raise ValidationError("tsls_full expects a full design")
    return tsls(design)


def tsls_partial(design: ValidatedDesign) -> FitResult:
    """2SLS of ``M_W1 Y`` on ``M_W1 W2`` instrumented by ``M_W1 Z2``."""
    return tsls(design.partialled())


def iv(design: ValidatedDesign) -> FitResult:
    """Exactly identified IV; same algebra as 2SLS with ``k3 == k2``."""
    _require_instruments(design, "iv")
    if design.k3 != design.k2:
        raise ValidationError(f"iv needs exactly as many instruments as endogenous regressors ({design.k3} != {design.k2})")
    fit = tsls(design)
    return FitResult(fit.coefficients, fit.names, fit.residuals, "iv", {}, fit.form, fit.dims)


# ---------------------------------------------------------------------------
# K-class
# ---------------------------------------------------------------------------


def kclass(design: ValidatedDesign, K: float, _tag: str = "kclass", **extra) -> FitResult:
    """``b = [W'(I - K M_Z)W]^{-1} W'(I - K M_Z)Y``.

    Written as ``[X'X - (K-1) E'E] b = X'Y - (K-1) E'e`` with ``X = P_Z W``,
    ``E = M_Z W`` and ``e = M_Z Y`` so that ``K = 1`` is exactly 2SLS and no
    N x N operator is formed.
    """
    K = float(K)
    X = design.Xhat
    E = design.W - X
    e = design.projector_Z.M(design.Y)
    c = K - 1.0
    if c == 0.0:
        fit = tsls(design)
        b = fit.coefficients
    elif K == 0.0:
        b = _ols_design(design).coefficients
    else:
        A = X.T @ X - c * (E.T @ E)
        rhs = X.T @ design.Y - c * (E.T @ e)
        b = _solve_sym(0.5 * (A + A.T), rhs, "W'(I - K M_Z)W")
    return _result(design, b, _tag, K=K, **extra)


def liml_kappa(design: ValidatedDesign) -> float:
    """Smallest generalized eigenvalue of ``(U'M_W1 U, U'M_Z U)``, ``U = [Y : W2]``."""
    _require_instruments(design, "liml")
    if design.N <= design.n_instruments:
        raise ValidationError("LIML needs more observations than instruments")
    U = np.column_stack([design.Y, design.W2])
    Ut = design.projector_W1.M(U)
    Ue = design.projector_Z.M(U)
    A = Ut.T @ Ut
    B = Ue.T @ Ue
    # Equilibrate: the eigenvalues of the pencil are scale invariant.
    s = np.sqrt(np.diag(B))
    if np.any(s == 0.0):
        raise NotPositiveDefinite("U'M_Z U is singular")
    return smallest_gen_eigenvalue(A / np.outer(s, s), B / np.outer(s, s))


def liml(design: ValidatedDesign) -> FitResult:
    kappa = liml_kappa(design)
    return kclass(design, kappa, "liml", kappa=kappa)


def fuller(design: ValidatedDesign, alpha: float = 1.0) -> FitResult:
    """K-class with ``K = kappa - alpha / (N - L)``.

    ``L`` is ``design.df_instruments``: all instruments of the full system,
    or the excluded instruments plus the retained constant of a partialled
    system.
    """
    kappa = liml_kappa(design)
    L = design.df_instruments
    if design.N <= L:
        raise ValidationError("Fuller needs more observations than instruments")
    K = kappa - alpha / (design.N - L)
    return kclass(design, K, "fuller", kappa=kappa, alpha=float(alpha), L=L)


# ---------------------------------------------------------------------------
# linear GMM
# ---------------------------------------------------------------------------


def _gmm_from_factor(design: ValidatedDesign, Ct: np.ndarray, tag: str, **params) -> FitResult:
    """Minimize ``||Ct Z'(Y - W b)||`` by QR on ``Ct Z'W``."""
    Z = design.Z
    A = Ct @ (Z.T @ design.W)
    r = Ct @ (Z.T @ design.Y)
    try:
        b = QRFactor.of(A, "C'Z'W").solve(r)[:, 0]
    except RankDeficient as exc:
        raise SingularSystem("W'Z Wn Z'W is singular") from exc
    return _result(design, b, tag, **params)


def gmm(design: ValidatedDesign, Wn: WeightingMatrix) -> FitResult:
    """``b = [W'Z Wn Z'W]^{-1} W'Z Wn Z'Y`` with ``Z = [W1 : Z2]``."""
    _require_instruments(design, "gmm")
    L = design.n_instruments
    if Wn.matrix.shape != (L, L):
        raise ValidationError(f"weighting matrix must be {L} x {L}, got {Wn.matrix.shape}")
    C = Wn.cholesky()
    return _gmm_from_factor(design, C.T, "gmm", weighting=Wn.kind)


def igmm(design: ValidatedDesign) -> FitResult:
    """Linear GMM with the identity weighting matrix."""
    fit = gmm(design, WeightingMatrix.identity(design.n_instruments))
    return FitResult(fit.coefficients, fit.names, fit.residuals, "igmm", fit.params, fit.form, fit.dims)


def two_step_gmm(design: ValidatedDesign) -> FitResult:
    """Two-step GMM with ``Wn = (Z'DZ)^{-1}``, ``D = diag(u_i^2)`` from 2SLS."""
    _require_instruments(design, "2sgmm")
    first = tsls(design)
    u = first.residuals
    G = design.Z * u[:, None]
    try:
        fac = QRFactor.of(G, "D^{1/2} Z")
    except RankDeficient as exc:
        raise NotPositiveDefinite("Z'DZ is singular (too many zero first-step residuals)") from exc
    # Z'DZ = R'R on the pivoted columns, so (Z'DZ)^{-1} = C C' with C = P R^{-1}.
    L = design.n_instruments
    Rinv = sla.solve_triangular(fac.R, np.eye(L))
    Ct = np.empty((L, L))
    Ct[:, fac.perm] = Rinv.T
    return _gmm_from_factor(
        design, Ct, "2sgmm", weighting="TwoStepOptimal",
        metadata={"first_step_residuals": u, "D": u**2},
    )


def two_step_gmm_projection_form(design: ValidatedDesign, zero_rtol: float = 1e-12) -> FitResult:
    """Two-step GMM computed as 2SLS on reweighted data.

    With ``s = u`` the first-step residuals, ``Y^ = Y / s``, ``W^ = W / s`` and
    instruments ``Z^ = s Z`` (row-wise scaling), ``P_{Z^}`` is an orthogonal
    projector and ``b = [(P W^)'W^]^{-1}(P W^)'Y^`` equals :func:`two_step_gmm`.
    """
    _require_instruments(design, "2sgmm")
    u = tsls(design).residuals
    scale = max(np.abs(u).max(), np.abs(design.Y).max())
    zero = np.flatnonzero(np.abs(u) <= zero_rtol * scale) if scale > 0 else np.arange(design.N)
    if zero.size:
        raise ZeroResidual(int(zero[0]))
    Yh = design.Y / u
    Wh = design.W / u[:, None]
    Zh = design.Z * u[:, None]
    fz = QRFactor.of(Zh, "Z^")
    Xh = fz.project(Wh)
    b = QRFactor.of(Xh, "P W^").solve(Yh)[:, 0]
    return _result(design, b, "2sgmm", weighting="TwoStepOptimal", form_used="projection")


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

ESTIMATORS: dict[str, Callable[..., FitResult]] = {
    "ols": _ols_design,
    "iv": iv,
    "2sls": tsls,
    "kclass": kclass,
    "liml": liml,
    "fuller": fuller,
    "igmm": igmm,
    "2sgmm": two_step_gmm,
}

#: Estimators for which full and partial coefficients agree exactly.
EXACT_EQUALITY = frozenset({"ols", "iv", "2sls", "2sgmm"})


def fit(design: ValidatedDesign, estimator: str, **params) -> FitResult:
    """Run a named estimator. ``kclass`` needs ``K``; ``fuller`` accepts ``alpha``."""
    try:
        fn = ESTIMATORS[estimator]
    except KeyError:
        raise ValidationError(f"unknown estimator {estimator!r}") from None
    if estimator == "kclass":
        if "K" not in params:
            raise ValidationError("kclass needs a value for K")
        return fn(design, params["K"])
    if estimator == "fuller":
        return fn(design, params.get("alpha", 1.0))
    if params:
        raise ValidationError(f"estimator {estimator!r} takes no parameters, got {sorted(params)}")
    return fn(design)
