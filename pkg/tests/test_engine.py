import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles as O
from yfwl.covariance import CovSpec
from yfwl.engine import compare, convergence_sweep, limitation_demo, relative_delta
from yfwl.errors import OrderConditionViolated, ValidationError
from yfwl.model import PartitionTag, make_design
from yfwl.simulate import EndogenousConditioning, endogenous_conditioning_design, random_design


def test_ols_all_pass():
    d = random_design(1, 80, 3, 2, 0, intercept=True, n_clusters=4)
    specs = [CovSpec(k) for k in ("homo", "hc0", "hc1", "hc2", "hc3", "cluster-cv1")]
    rep = compare(d, "ols", cov_specs=specs)
    assert rep.verdict and not rep.expected_failure
    assert rep.partition_case.tag is PartitionTag.SUPERSET


def test_2sls_df_factors():
    d = random_design(2, 80, 3, 1, 3, intercept=True)
    rep = compare(d, "2sls", cov_specs=[CovSpec("hc0"), CovSpec("hc1"), CovSpec("homo")])
    f = (d.N - d.k) / (d.N - d.k2)
    assert [c.df_factor for c in rep.vcov_checks] == [1.0, pytest.approx(f), pytest.approx(f)]
    assert rep.verdict
    assert rep.partition_case.tag is PartitionTag.EQUAL


@pytest.mark.parametrize("estimator", ["igmm", "liml", "fuller"])
def test_expected_failure_is_reported_not_raised(estimator):
    d = random_design(3, 100, 3, 1, 3, heteroskedastic=True, instrument_loading=1.0)
    rep = compare(d, estimator)
    assert rep.expected_failure
    assert rep.max_abs_coef_delta >= 0


def test_vcov_only_for_linear_iv():
    d = random_design(3, 100, 3, 1, 3)
    with pytest.raises(ValidationError):
        compare(d, "liml", cov_specs=[CovSpec("hc0")])
    with pytest.raises(ValidationError):
        compare(d.partialled(), "2sls")


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31), t1=st.floats(1e-16, 1.0), t2=st.floats(1e-16, 1.0))
def test_verdict_monotone_in_tolerance(seed, t1, t2):
    lo, hi = sorted((t1, t2))
    d = random_design(seed, 60, 2, 1, 2, heteroskedastic=True)
    specs = [CovSpec("hc2"), CovSpec("hc1")]
    a = compare(d, "igmm", tolerance=lo)
    b = compare(d, "igmm", tolerance=hi)
    assert not (a.coef_verdict and not b.coef_verdict)
    a = compare(d, "2sls", cov_specs=specs, tolerance=lo)
    b = compare(d, "2sls", cov_specs=specs, tolerance=hi)
    assert [x.verdict <= y.verdict for x, y in zip(a.vcov_checks, b.vcov_checks)] == [True, True]


def test_column_order_invariance():
    d = random_design(9, 90, 2, 3, 4)
    perm = [2, 0, 1]
    d2 = make_design(d.Y, d.W1, d.W2[:, perm], d.Z2, names_W2=[d.names_W2[j] for j in perm])
    a, b = compare(d, "igmm"), compare(d2, "igmm")
    assert a.max_abs_coef_delta == pytest.approx(b.max_abs_coef_delta, rel=1e-8)
    np.testing.assert_allclose(a.coef_full_b2[perm], b.coef_full_b2, rtol=1e-10)


def test_relative_delta():
    assert relative_delta([0.0], [0.0]) == 0.0
    assert relative_delta([1.0, 2.0], [1.0, 2.5]) == pytest.approx(0.2)


# ---------------------------------------------------------------------------
# endogenous conditioning block
# ---------------------------------------------------------------------------


def test_limitation_exactly_identified_matches_closed_form():
    ec = endogenous_conditioning_design(4, N=120, k1=2, k2=2, k3=2)
    demo = limitation_demo(ec)
    Y, W1, W2, Z1 = ec.Y, ec.W1, ec.W2, ec.Z1
    A = np.eye(len(Y)) - W1 @ O.inv(Z1.T @ W1) @ Z1.T
    b_full = O.inv(W2.T @ A @ W2) @ W2.T @ A @ Y
    M1 = O.M(W1)
    b_ols = O.inv(W2.T @ M1 @ W2) @ W2.T @ M1 @ Y
    Zt = M1 @ Z1
    b_iv = O.inv(Zt.T @ M1 @ W2) @ Zt.T @ M1 @ Y
    np.testing.assert_allclose(demo.b2_full, b_full, rtol=1e-9)
    np.testing.assert_allclose(demo.b2_partial_ols, b_ols, rtol=1e-9)
    np.testing.assert_allclose(demo.b2_partial_iv, b_iv, rtol=1e-9)


def test_limitation_overidentified_full_estimate():
    ec = endogenous_conditioning_design(5, N=150, k1=1, k2=2, k3=3)
    demo = limitation_demo(ec)
    b = O.tsls(ec.Y, np.column_stack([ec.W1, ec.W2]), np.column_stack([ec.Z1, ec.W2]))
    np.testing.assert_allclose(demo.b2_full, b[1:], rtol=1e-9)


def test_limitation_orthogonal_blocks(rng):
    # W1'W2 = 0 and Z1 orthogonal to W2: full equals partial OLS; the partial IV is undefined.
    N = 100
    W1 = rng.standard_normal((N, 1))
    Q, _ = np.linalg.qr(np.column_stack([W1, rng.standard_normal((N, 2))]))
    W2 = Q[:, 1:2] * 10
    Z1 = W1 + 3 * Q[:, 2:3]
    Z1 -= W2 @ np.linalg.lstsq(W2, Z1, rcond=None)[0]
    Y = W1[:, 0] + W2[:, 0] + rng.standard_normal(N)
    demo = limitation_demo(EndogenousConditioning(Y, W1, W2, Z1))
    assert demo.delta_partial_ols < 1e-10
    np.testing.assert_allclose(demo.b2_full, np.linalg.lstsq(W2, Y, rcond=None)[0], rtol=1e-10)
    assert demo.b2_partial_iv is None and "rank" in demo.partial_iv_error


def test_limitation_self_instrumented_is_ols(rng):
    ec = endogenous_conditioning_design(6, N=80, k1=2, k2=1, k3=2)
    demo = limitation_demo(EndogenousConditioning(ec.Y, ec.W1, ec.W2, ec.W1))
    W = np.column_stack([ec.W1, ec.W2])
    np.testing.assert_allclose(demo.b2_full, (O.inv(W.T @ W) @ W.T @ ec.Y)[2:], rtol=1e-10)
    assert demo.delta_partial_ols < 1e-10


def test_limitation_degenerate_generator():
    demo = limitation_demo(endogenous_conditioning_design(7, k1=2, k2=2, k3=2, degenerate=True))
    assert max(demo.delta_partial_ols, demo.delta_partial_iv) < 1e-10


def test_limitation_order_condition(rng):
    ec = endogenous_conditioning_design(8, k1=2, k2=1, k3=2)
    with pytest.raises(OrderConditionViolated):
        limitation_demo(EndogenousConditioning(ec.Y, ec.W1, ec.W2, ec.Z1[:, :1]))


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("K", [0.0, 1.0])
def test_sweep_fixed_K_is_exact(K):
    rows = convergence_sweep(1, [50, 200], "kclass", params={"K": K})
    assert all(r.max_abs_delta < 1e-10 for r in rows)


def test_sweep_rows_do_not_depend_on_grid():
    a = convergence_sweep(3, [50, 200], "fuller")
    b = convergence_sweep(3, [200], "fuller")
    assert a[1] == b[0]


def test_sweep_kappa_decreases():
    rows = convergence_sweep(11, [50, 500, 5000], "liml", replications=10)
    k = [r.mean_kappa for r in rows]
    assert k[0] > k[1] > k[2] >= 1


def test_sweep_validation():
    with pytest.raises(ValidationError):
        convergence_sweep(1, [200, 50], "liml")
    with pytest.raises(ValidationError):
        convergence_sweep(1, [50], "igmm")
