import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles as O
from yfwl import estimators as E
from yfwl.covariance import (
    CovSpec, OmegaHat, bartlett_weights, df_ratio, leverages_via_partition, omega_hat,
    partial_inference_hc2_family, partial_leverages, sandwich_full, sandwich_partial,
)
from yfwl.errors import LeverageAtOne, MissingLeverages, SingleCluster, ValidationError
from yfwl.simulate import random_design

KINDS = ["homo", "hc0", "hc1", "hc2", "hc3", "hc4", "hc5", "hac", "cluster-cv1"]
seeds = st.integers(0, 2**32 - 1)


def spec_for(kind, lags=3):
    return CovSpec(kind, hac_lags=lags if kind == "hac" else None)


def _design(seed, ols=False, N=45):
    return random_design(seed, N, 3, 2, 0 if ols else 3, intercept=True, heteroskedastic=True, n_clusters=5)


# ---------------------------------------------------------------------------
# error covariance evaluator
# ---------------------------------------------------------------------------


def test_hc0_toy():
    om = omega_hat([1.0, -1.0], CovSpec("hc0"), (2, 1))
    np.testing.assert_array_equal(om.dense(), np.eye(2))


def test_hc1_scale(rng):
    u = rng.standard_normal(10)
    hc0 = omega_hat(u, CovSpec("hc0"), (10, 2)).dense()
    hc1 = omega_hat(u, CovSpec("hc1"), (10, 2)).dense()
    np.testing.assert_allclose(hc1, hc0 * 10 / 8)


def test_hac_zero_lags_is_hc0(rng):
    u = rng.standard_normal(12)
    A = rng.standard_normal((12, 3))
    a = omega_hat(u, CovSpec("hac", hac_lags=0), (12, 2)).quad(A)
    b = omega_hat(u, CovSpec("hc0"), (12, 2)).quad(A)
    np.testing.assert_allclose(a, b, rtol=1e-14)


def test_hac_full_band_is_outer_product(rng):
    N = 15
    u = rng.standard_normal(N)
    A = rng.standard_normal((N, 2))
    om = omega_hat(u, CovSpec("hac", hac_lags=N - 1, hac_kernel="uniform"), (N, 2))
    np.testing.assert_allclose(om.quad(A), np.outer(A.T @ u, A.T @ u), rtol=1e-12)


def test_zero_leverage_hc2_is_hc0(rng):
    u = rng.standard_normal(8)
    a = omega_hat(u, CovSpec("hc2"), (8, 2), leverages=np.zeros(8)).dense()
    np.testing.assert_array_equal(a, np.diag(u**2))


@pytest.mark.parametrize("kind", KINDS)
def test_quad_matches_dense_oracle(kind, rng):
    N, k = 30, 3
    u = rng.standard_normal(N)
    h = rng.uniform(0.01, 0.4, N)
    cl = rng.integers(0, 4, N)
    om = omega_hat(u, spec_for(kind), (N, k), leverages=h, clusters=cl)
    dense = O.dense_omega(u, kind, k, h=h, lags=3, clusters=cl)
    A, B = rng.standard_normal((N, 2)), rng.standard_normal((N, 3))
    np.testing.assert_allclose(om.dense(), dense, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(om.quad(A, B), A.T @ dense @ B, rtol=1e-11, atol=1e-12)


def test_cluster_labels_any_order_and_type(rng):
    N = 20
    u = rng.standard_normal(N)
    labels = np.array(["b", "a", "c", "a"] * 5, dtype=object)
    codes = np.array([1, 0, 2, 0] * 5)
    a = omega_hat(u, CovSpec("cluster-cv1"), (N, 2), clusters=labels).dense()
    b = omega_hat(u, CovSpec("cluster-cv1"), (N, 2), clusters=codes).dense()
    np.testing.assert_array_equal(a, b)


def test_errors(rng):
    u = rng.standard_normal(5)
    with pytest.raises(MissingLeverages):
        omega_hat(u, CovSpec("hc3"), (5, 1))
    h = np.full(5, 0.2)
    h[2] = 1.0 - 1e-13
    with pytest.raises(LeverageAtOne) as ei:
        omega_hat(u, CovSpec("hc2"), (5, 1), leverages=h)
    assert ei.value.index == 2
    with pytest.raises(SingleCluster):
        omega_hat(u, CovSpec("cluster-cv1"), (5, 1), clusters=np.zeros(5))
    with pytest.raises(ValidationError):
        omega_hat(u, CovSpec("cluster-cv1"), (5, 1))


def test_covspec_validation():
    with pytest.raises(ValidationError):
        CovSpec("hc9")
    with pytest.raises(ValidationError):
        CovSpec("hc0", hac_lags=2)
    with pytest.raises(ValidationError):
        CovSpec("hac")
    with pytest.raises(ValidationError):
        CovSpec("hac", hac_lags=2, hac_kernel=lambda L: np.full(L + 1, 2.0))
    with pytest.raises(ValidationError):
        CovSpec("hac", hac_lags=2, hac_kernel="gaussian")
    assert CovSpec("HC1").kind == "hc1"
    assert CovSpec("ClusterCV1").kind == "cluster-cv1"


def test_bartlett():
    np.testing.assert_allclose(bartlett_weights(3), [1, 0.75, 0.5, 0.25])


def test_dense_cap():
    om = OmegaHat(np.ones(2001), CovSpec("hc0"), (2001, 1))
    with pytest.raises(MemoryError):
        om.dense()


# ---------------------------------------------------------------------------
# sandwiches
# ---------------------------------------------------------------------------


def test_homoskedastic_orthonormal_ols(rng):
    from yfwl.model import make_design

    Q, _ = np.linalg.qr(rng.standard_normal((30, 3)))
    d = make_design(rng.standard_normal(30), Q[:, :1], Q[:, 1:])
    f = E.fit(d, "ols")
    v = sandwich_full(d, f, CovSpec("homo")).matrix
    s2 = f.residuals @ f.residuals / (30 - 3)
    np.testing.assert_allclose(v, s2 * np.eye(3), atol=1e-14)


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("ols", [True, False])
def test_sandwich_full_dense_oracle(kind, ols):
    d = _design(11, ols)
    f = E.fit(d, "ols" if ols else "2sls")
    X = d.W if ols else O.P(d.Z) @ d.W
    h = np.diag(X @ O.inv(X.T @ X) @ X.T)
    Om = O.dense_omega(f.residuals, kind, d.k, h=h, lags=3, clusters=d.cluster_codes)
    v = sandwich_full(d, f, spec_for(kind))
    np.testing.assert_allclose(v.matrix, O.sandwich(X, Om), rtol=1e-9)
    assert v.model_form == "full"


@pytest.mark.parametrize("kind", KINDS)
def test_sandwich_partial_dense_oracle(kind):
    d = _design(12)
    p = d.partialled()
    f = E.tsls(p)
    X = O.P(p.Z2) @ p.W2
    h = np.diag(X @ O.inv(X.T @ X) @ X.T)
    Om = O.dense_omega(f.residuals, kind, d.k2, h=h, lags=3, clusters=d.cluster_codes)
    v = sandwich_partial(d, f, spec_for(kind))
    np.testing.assert_allclose(v.matrix, O.sandwich(X, Om), rtol=1e-9)
    assert v.model_form == "partial"


@settings(max_examples=25, deadline=None)
@given(seed=seeds, ols=st.booleans(), kind=st.sampled_from(KINDS))
def test_equality_ledger(seed, ols, kind):
    d = _design(seed, ols, N=60)
    est = "ols" if ols else "2sls"
    ff, fp = E.fit(d, est), E.fit(d.partialled(), est)
    s = spec_for(kind)
    vf = sandwich_full(d, ff, s).interest_block
    if s.needs_leverages:
        vp = partial_inference_hc2_family(d, s).matrix
    else:
        vp = sandwich_partial(d, fp, s).matrix
    f = df_ratio(kind, d.N, d.k, d.k2)
    assert O.rel(vp, f * vf) < 1e-9


@pytest.mark.parametrize("kernel", ["bartlett", "parzen", "uniform", lambda L: 0.9 ** np.arange(L + 1)])
def test_hac_equality_is_kernel_agnostic(kernel):
    d = _design(5)
    s = CovSpec("hac", hac_lags=6, hac_kernel=kernel)
    vf = sandwich_full(d, E.tsls(d), s).interest_block
    vp = sandwich_partial(d, E.tsls(d.partialled()), s).matrix
    assert O.rel(vp, vf) < 1e-10


@settings(max_examples=25, deadline=None)
@given(seed=seeds, kind=st.sampled_from(KINDS))
def test_vcov_symmetric_psd(seed, kind):
    d = _design(seed)
    v = sandwich_full(d, E.tsls(d), spec_for(kind)).matrix
    assert np.abs(v - v.T).max() <= 1e-12 * np.abs(v).max()
    assert np.linalg.eigvalsh(v).min() >= -1e-10 * np.abs(v).max()


def test_leverages_via_partition(rng):
    for ols in (True, False):
        d = _design(int(rng.integers(1 << 30)), ols)
        X = d.W if ols else O.P(d.Z) @ d.W
        h = leverages_via_partition(d)
        np.testing.assert_allclose(h, np.diag(X @ O.inv(X.T @ X) @ X.T), rtol=1e-10, atol=1e-14)
        assert h.sum() == pytest.approx(d.k, rel=1e-12)


def test_partial_leverages_differ_from_full():
    d = _design(3)
    assert np.abs(partial_leverages(d) - leverages_via_partition(d)).max() > 1e-3
    assert partial_leverages(d).sum() == pytest.approx(d.k2)


def test_partial_inference_rejects_non_leverage_kinds():
    with pytest.raises(ValidationError):
        partial_inference_hc2_family(_design(1), CovSpec("hc1"))


def test_sandwich_rejects_non_linear_iv_fits():
    d = _design(1)
    with pytest.raises(ValidationError):
        sandwich_full(d, E.liml(d), CovSpec("hc0"))


def test_df_ratio():
    assert df_ratio("hc1", 100, 5, 2) == pytest.approx(95 / 98)
    assert df_ratio("hc0", 100, 5, 2) == 1.0
    assert df_ratio("hac", 100, 5, 2) == 1.0
