import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from overgfm import (
    FitConfig,
    ModelParams,
    OverGFMError,
    VariableSchema,
    apply_identifiability,
    fit,
    initialize,
    validate,
)
from overgfm.driver import _relative_change, run_vem, surrogate_matrix
from overgfm.simulate import generate_dataset, scenario1, scenario8


def small_mixed(seed=0, n=80, p=30, q=2, sigma2=0.3):
    spec = scenario1(sigma2=sigma2, n=n, p=p, q=q, seed=seed, c=4.0)
    return generate_dataset(spec)


def test_initialize_surrogate_and_shapes():
    sim = small_mixed()
    ds = validate(sim.data, sim.schema)
    params, vp = initialize(ds, 3)
    Xt = surrogate_matrix(ds)
    assert np.allclose(Xt[:, ds.count], np.log1p(ds.X[:, ds.count]))
    assert np.allclose(params.mu, Xt.mean(axis=0))
    assert params.H.shape == (80, 3) and params.B.shape == (30, 3)
    assert np.allclose(params.H.T @ params.H / 80, np.eye(3), atol=1e-10)
    assert np.all(params.lam == 1) and np.all(vp.sigma2 == 1)
    assert np.array_equal(vp.tau, Xt[:, ds.latent])


def _check_projection(old, new, tol=1e-10):
    n = old.H.shape[0]
    assert np.max(np.abs(new.H.sum(axis=0))) < tol * n
    assert np.max(np.abs(new.H.T @ new.H / n - np.eye(new.q))) < tol
    G = new.B.T @ new.B
    off = G - np.diag(np.diag(G))
    assert np.max(np.abs(off)) < tol * np.trace(G)
    assert np.all(np.diff(np.diag(G)) <= 1e-12 * np.trace(G))
    assert np.max(np.abs(new.linear_predictor() - old.linear_predictor())) < tol * max(1, np.abs(old.linear_predictor()).max())
    for k in range(new.q):
        nz = np.flatnonzero(new.B[:, k])
        assert new.B[nz[0], k] > 0


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(5, 60), p=st.integers(3, 40), q=st.integers(1, 4))
def test_identifiability_projection(seed, n, p, q):
    q = min(q, n - 1, p)
    rng = np.random.default_rng(seed)
    old = ModelParams(B=rng.normal(size=(p, q)), mu=rng.normal(size=p), H=rng.normal(size=(n, q)) + 2,
                      lam=np.ones(p))
    _check_projection(old, apply_identifiability(old))


def test_projection_is_idempotent():
    rng = np.random.default_rng(0)
    old = ModelParams(B=rng.normal(size=(9, 3)), mu=rng.normal(size=9), H=rng.normal(size=(20, 3)), lam=np.ones(9))
    once = apply_identifiability(old)
    twice = apply_identifiability(once)
    assert np.allclose(once.B, twice.B, atol=1e-12) and np.allclose(once.H, twice.H, atol=1e-12)


def test_projection_rank_deficient():
    H = np.ones((10, 2))
    H[:, 1] = np.arange(10)
    B = np.zeros((4, 2))
    B[:, 0] = 1
    with pytest.raises(OverGFMError, match="rank-deficient"):
        apply_identifiability(ModelParams(B=B, mu=np.zeros(4), H=H, lam=np.ones(4)))


def test_relative_change_zero_denominator():
    assert _relative_change(0.0, 0.0) == 0.0
    assert _relative_change(1.0, 0.0) == np.inf
    assert _relative_change(-99.0, -100.0) == pytest.approx(0.01)


@pytest.mark.parametrize("seed", range(4))
def test_fit_monotone_and_projected(seed):
    sim = small_mixed(seed)
    res = fit(sim.data, sim.schema, q=2)
    tr = np.array(res.elbo_trace)
    assert np.all(np.diff(tr) >= -1e-10 * np.abs(tr[:-1]))
    assert len(tr) == res.iterations + 1
    n = res.params.H.shape[0]
    assert np.allclose(res.params.H.T @ res.params.H / n, np.eye(2), atol=1e-10)


def test_convergence_flag_and_max_iter():
    sim = small_mixed(1)
    res = fit(sim.data, sim.schema, q=2, max_iter=2)
    assert res.iterations == 2 and not res.converged
    res = fit(sim.data, sim.schema, q=2, max_iter=500)
    assert res.converged
    rel = abs(res.elbo_trace[-1] - res.elbo_trace[-2]) / abs(res.elbo_trace[-2])
    assert rel < 1e-4


def test_fit_is_deterministic():
    sim = small_mixed(2)
    a = fit(sim.data, sim.schema, q=2)
    b = fit(sim.data, sim.schema, q=2)
    assert np.array_equal(a.params.H, b.params.H) and a.elbo_trace == b.elbo_trace


def test_threads_do_not_change_result():
    sim = small_mixed(3)
    a = fit(sim.data, sim.schema, q=2, threads=1)
    b = fit(sim.data, sim.schema, q=2, threads=4)
    assert np.allclose(a.params.B, b.params.B, rtol=1e-12, atol=1e-12)
    assert a.iterations == b.iterations


def test_restarts_keep_best_elbo():
    sim = small_mixed(4)
    base = fit(sim.data, sim.schema, q=2)
    res = fit(sim.data, sim.schema, q=2, n_restarts=2, seed=11)
    assert res.elbo >= base.elbo
    again = fit(sim.data, sim.schema, q=2, n_restarts=2, seed=11)
    assert again.elbo_trace == res.elbo_trace


def test_q_too_large():
    sim = small_mixed(0, n=10, p=30)
    with pytest.raises(OverGFMError, match="min"):
        fit(sim.data, sim.schema, q=10)


def test_gaussian_noise_free_exact_recovery():
    sim = generate_dataset(scenario8("gaussian", sigma2=0.0, n=60, p=40, q=3, seed=5))
    res = fit(sim.data, sim.schema, q=3)
    assert np.allclose(res.params.linear_predictor(), sim.Y0, atol=1e-8)


def test_pure_continuous_has_no_variational_sites():
    sim = generate_dataset(scenario8("gaussian", sigma2=0.5, n=50, p=20, q=2, seed=1))
    res = fit(sim.data, sim.schema, q=2)
    assert res.varparams.tau.shape == (50, 0)


def test_zero_count_column_is_handled():
    rng = np.random.default_rng(0)
    schema = VariableSchema.from_kinds(["count"] * 6)
    X = rng.poisson(2, (40, 6)).astype(float)
    X[:, 0] = 0
    res = fit(X, schema, q=1)
    assert np.all(np.isfinite(res.params.B)) and np.all(res.params.lam > 0)


def test_run_vem_unprojected_and_diagnostics():
    sim = small_mixed(5)
    ds = validate(sim.data, sim.schema)
    params, vp = initialize(ds, 2)
    res = run_vem(ds, params, vp, FitConfig(q=2))
    assert "rejected_site_updates" in res.diagnostics
    assert res.diagnostics["seconds_per_iter"] > 0
