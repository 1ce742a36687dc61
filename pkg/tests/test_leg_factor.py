import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from radleg.leg_factor import (LegNoiseParams, leg_bias_correct, leg_jacobian, leg_preintegrate,
                               leg_residual)
from radleg.radar_factor import EmptyWindowError
from radleg.state import NavState
from jaccheck import leg_errors


def _window(rng, n=30):
    return [(rng.normal(0, 1, 3), rng.uniform(0.004, 0.007)) for _ in range(n)]


def test_constant_velocity_window():
    pre = leg_preintegrate([(np.array([1.0, 0, 0]), 0.05)] * 10)
    assert np.allclose(pre.delta_p, [0.5, 0, 0])
    assert np.allclose(pre.d_dp_d_bias, -0.5 * np.eye(3))


def test_bias_equal_to_velocity_cancels():
    v = np.array([0.3, -0.2, 0.05])
    pre = leg_preintegrate([(v, 0.01)] * 7, lin_bias=v)
    assert np.allclose(pre.delta_p, 0.0)


def test_empty_and_bad_dt():
    with pytest.raises(EmptyWindowError):
        leg_preintegrate([])
    with pytest.raises(ValueError):
        leg_preintegrate([(np.zeros(3), -0.01)])
    with pytest.raises(ValueError):
        LegNoiseParams(sigma_v=0.0)


def test_bias_correct_examples():
    pre = leg_preintegrate([(np.zeros(3), 0.5)] * 4)
    assert np.array_equal(leg_bias_correct(pre, pre.lin_bias), pre.delta_p)
    assert np.allclose(leg_bias_correct(pre, [0.1, 0, 0]), [-0.2, 0, 0])


@given(st.integers(0, 10_000), st.tuples(*[st.floats(-1, 1)] * 3))
def test_bias_correct_equals_re_preintegration(seed, b):
    rng = np.random.default_rng(seed)
    w = _window(rng)
    b0 = rng.normal(0, 0.05, 3)
    pre = leg_preintegrate(w, b0)
    assert np.allclose(leg_bias_correct(pre, b), leg_preintegrate(w, b).delta_p, atol=1e-12)
    assert np.allclose(pre.d_dp_d_bias, -pre.dt_total * np.eye(3), atol=1e-15)


def test_residual_zero_at_preintegrated_displacement():
    rng = np.random.default_rng(0)
    pre = leg_preintegrate(_window(rng), rng.normal(0, 0.02, 3))
    si = NavState(p=[1, 2, 3])
    sj = NavState(0.2, si.p + pre.delta_p, b_l=pre.lin_bias)
    assert np.allclose(leg_residual(si, sj, pre), 0.0, atol=1e-15)


def test_residual_zero_on_integrated_truth():
    rng = np.random.default_rng(1)
    w = _window(rng, 60)
    p = np.cumsum([v * dt for v, dt in w], axis=0)
    pre = leg_preintegrate(w)
    si, sj = NavState(), NavState(0.3, p[-1])
    assert np.max(np.abs(leg_residual(si, sj, pre))) < 1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_jacobians_match_finite_differences(seed):
    errs = leg_errors(np.random.default_rng(seed))
    assert max(errs.values()) < 1e-5, errs


def test_jacobian_blocks():
    pre = leg_preintegrate([(np.zeros(3), 0.1)] * 3)
    J = leg_jacobian(NavState(), NavState(), pre)
    assert np.array_equal(J["p_i"], -np.eye(3)) and np.array_equal(J["p_j"], np.eye(3))
    assert np.allclose(J["b_j"], 0.3 * np.eye(3))


def test_covariance_grows_with_window():
    rng = np.random.default_rng(2)
    w = _window(rng, 20)
    covs = [leg_preintegrate(w[:n]).cov for n in range(1, 21)]
    for a, b in zip(covs[:-1], covs[1:]):
        assert np.all(np.linalg.eigvalsh(b - a) >= 0)
