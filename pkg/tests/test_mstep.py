import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from overgfm import DegenerateError, ModelParams, VariableSchema, VariationalParams, validate
from overgfm.elbo import evaluate_elbo
from overgfm.mstep import (
    effective_response,
    m_step,
    update_factors,
    update_intercepts,
    update_loadings,
    update_variances,
)


def random_state(seed, n=25, q=2, trials=3):
    rng = np.random.default_rng(seed)
    kinds = ["continuous"] * 3 + ["count"] * 3 + ["binomial"] * 2
    schema = VariableSchema.from_kinds(kinds, trials=trials)
    X = np.column_stack([rng.normal(size=(n, 3)), rng.poisson(2, (n, 3)), rng.binomial(trials, 0.4, (n, 2))])
    from overgfm import MixedDataMatrix

    ds = validate(MixedDataMatrix(X, rng.normal(size=n) * 0.1), schema)
    p = len(kinds)
    params = ModelParams(B=rng.normal(size=(p, q)), mu=rng.normal(size=p), H=rng.normal(size=(n, q)),
                         lam=rng.uniform(0.2, 3, p))
    vp = VariationalParams(rng.normal(size=(n, 5)), rng.uniform(0.05, 1, (n, 5)))
    return ds, params, vp


def test_loadings_are_least_squares():
    ds, params, vp = random_state(0)
    er = effective_response(ds, vp)
    B = update_loadings(params.H, er.xbar, params.mu)
    ref = np.linalg.lstsq(params.H, er.xbar - params.mu, rcond=None)[0].T
    assert np.allclose(B, ref, atol=1e-12)


def test_factors_are_weighted_least_squares():
    ds, params, vp = random_state(1)
    er = effective_response(ds, vp)
    H = update_factors(params.B, params.lam, er.xbar, params.mu)
    w = 1 / np.sqrt(params.lam)
    for i in range(ds.n):
        ref = np.linalg.lstsq(params.B * w[:, None], (er.xbar[i] - params.mu) * w, rcond=None)[0]
        assert np.allclose(H[i], ref, atol=1e-12)


def test_intercepts_and_variances_elementwise():
    ds, params, vp = random_state(2)
    er = effective_response(ds, vp)
    mu = update_intercepts(params.B, params.H, er.xbar)
    lam = update_variances(params.B, params.H, mu, er.xbar, er.sigma2_full)
    for j in range(ds.p):
        r = [er.xbar[i, j] - params.H[i] @ params.B[j] for i in range(ds.n)]
        assert mu[j] == pytest.approx(np.mean(r), rel=1e-12, abs=1e-14)
        e = [(r[i] - mu[j]) ** 2 + er.sigma2_full[i, j] for i in range(ds.n)]
        assert lam[j] == pytest.approx(np.mean(e), rel=1e-12)


def test_effective_response_uses_tau_and_offsets():
    ds, params, vp = random_state(3)
    er = effective_response(ds, vp)
    a = ds.offsets[:, None]
    assert np.allclose(er.xbar[:, ds.continuous], ds.X[:, ds.continuous] - a)
    assert np.allclose(er.xbar[:, ds.latent], vp.tau - a)
    assert np.all(er.sigma2_full[:, ds.continuous] == 0)


def test_variance_floor():
    H = np.ones((4, 1))
    B = np.ones((2, 1))
    xbar = np.ones((4, 2))
    lam = update_variances(B, H, np.zeros(2), xbar, np.zeros((4, 2)), lambda_floor=1e-6)
    assert np.all(lam == 1e-6)


def test_degenerate_scores_raise():
    with pytest.raises(DegenerateError, match="degenerate factor scores"):
        update_loadings(np.zeros((5, 2)), np.ones((5, 3)), np.zeros(3))
    with pytest.raises(DegenerateError, match="degenerate loadings"):
        update_factors(np.zeros((3, 2)), np.ones(3), np.ones((5, 3)), np.zeros(3))


BLOCKS = ("B", "H", "mu", "lam")


def apply_block(block, ds, params, vp):
    er = effective_response(ds, vp)
    if block == "B":
        return params.replace(B=update_loadings(params.H, er.xbar, params.mu))
    if block == "H":
        return params.replace(H=update_factors(params.B, params.lam, er.xbar, params.mu))
    if block == "mu":
        return params.replace(mu=update_intercepts(params.B, params.H, er.xbar))
    return params.replace(lam=update_variances(params.B, params.H, params.mu, er.xbar, er.sigma2_full))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), block=st.sampled_from(BLOCKS))
def test_each_block_is_ascent(seed, block):
    ds, params, vp = random_state(seed)
    before = evaluate_elbo(ds, params, vp)
    after = evaluate_elbo(ds, apply_block(block, ds, params, vp), vp)
    assert after >= before - 1e-10 * abs(before)


@pytest.mark.parametrize("seed", range(5))
def test_full_sweep_is_ascent(seed):
    ds, params, vp = random_state(seed)
    before = evaluate_elbo(ds, params, vp)
    after = evaluate_elbo(ds, m_step(ds, params, vp), vp)
    assert after >= before - 1e-10 * abs(before)


def test_sweep_is_gauss_seidel():
    ds, params, vp = random_state(9)
    out = m_step(ds, params, vp)
    p1 = apply_block("B", ds, params, vp)
    p2 = apply_block("H", ds, p1, vp)
    p3 = apply_block("mu", ds, p2, vp)
    p4 = apply_block("lam", ds, p3, vp)
    for name in ("B", "H", "mu", "lam"):
        assert np.allclose(getattr(out, name), getattr(p4, name), rtol=1e-13, atol=1e-13)
