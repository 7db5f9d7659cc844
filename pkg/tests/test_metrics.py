import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from overgfm import OverGFMError, fit_lfm, trace_statistic, trace_statistic_upsilon


def test_identical_and_rotated():
    rng = np.random.default_rng(0)
    A = rng.normal(size=(50, 4))
    assert trace_statistic(A, A) == pytest.approx(1.0, abs=1e-12)
    R = rng.normal(size=(4, 4)) + 3 * np.eye(4)
    assert trace_statistic(A @ R, A) == pytest.approx(1.0, abs=1e-12)


def test_orthogonal_complement_is_zero():
    Q, _ = np.linalg.qr(np.random.default_rng(1).normal(size=(30, 6)))
    assert trace_statistic(Q[:, :3], Q[:, 3:]) == pytest.approx(0.0, abs=1e-14)


def test_partial_overlap_value():
    # A0 = [e1, e2]; span(Ahat) = e1 -> half the energy is captured
    A0 = np.eye(5)[:, :2]
    assert trace_statistic(np.eye(5)[:, :1], A0) == pytest.approx(0.5)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_bounded(seed):
    rng = np.random.default_rng(seed)
    v = trace_statistic(rng.normal(size=(20, 3)), rng.normal(size=(20, 2)))
    assert 0 <= v <= 1


def test_errors():
    with pytest.raises(OverGFMError, match="rank deficient"):
        trace_statistic(np.ones((10, 2)), np.ones((10, 1)))
    with pytest.raises(OverGFMError, match="row counts"):
        trace_statistic(np.ones((10, 1)), np.ones((9, 1)))


def test_upsilon_stacks_intercepts():
    rng = np.random.default_rng(2)
    B, mu = rng.normal(size=(20, 2)), rng.normal(size=20)
    assert trace_statistic_upsilon(B, mu, B, mu) == pytest.approx(1.0)
    assert trace_statistic_upsilon(B, -mu, B, mu) == pytest.approx(1.0)
    assert trace_statistic_upsilon(B, rng.normal(size=20), B, mu) < 1


def test_lfm_recovers_exact_low_rank():
    rng = np.random.default_rng(3)
    H, B, mu = rng.normal(size=(40, 2)), rng.normal(size=(15, 2)), rng.normal(size=15)
    X = H @ B.T + mu
    Hh, Bh, muh = fit_lfm(X, 2)
    assert np.allclose(Hh @ Bh.T + muh, X, atol=1e-10)
    assert np.allclose(Hh.T @ Hh / 40, np.eye(2), atol=1e-12)
    with pytest.raises(OverGFMError):
        fit_lfm(X, 15)
