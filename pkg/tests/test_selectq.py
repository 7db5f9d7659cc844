import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from overgfm import OverGFMError, VariableSchema, select_num_factors, singular_value_ratios


def diag_loadings(sv, p=30):
    B = np.zeros((p, len(sv)))
    B[np.arange(len(sv)), np.arange(len(sv))] = sv
    return B


def test_picks_largest_gap():
    rep = singular_value_ratios(diag_loadings([10, 8, 7, 1, 0.9, 0.8]))
    assert rep.q_hat == 3
    assert rep.max_ratio == pytest.approx(7.0)
    assert len(rep.ratios) == 5
    assert rep.singular_values[0] == pytest.approx(10)


def test_ties_go_to_smallest_k():
    rep = singular_value_ratios(diag_loadings([8, 4, 2, 1]))
    assert rep.q_hat == 1


def test_zero_singular_values_excluded():
    rep = singular_value_ratios(diag_loadings([5, 4, 0, 0]))
    assert rep.q_hat == 1 and np.isnan(rep.ratios[2])
    rep = singular_value_ratios(diag_loadings([5, 0, 0]))
    assert rep.q_hat == 1 and rep.max_ratio == float("inf")


def test_bad_inputs():
    with pytest.raises(OverGFMError):
        singular_value_ratios(np.ones((5, 1)))
    with pytest.raises(OverGFMError):
        singular_value_ratios(np.zeros((5, 3)))


def test_rank_one_toy():
    rng = np.random.default_rng(0)
    n, p = 120, 40
    h, b = rng.normal(size=n), rng.normal(size=p) * 2
    X = np.outer(h, b) + 0.01 * rng.normal(size=(n, p))
    schema = VariableSchema.from_kinds(["continuous"] * p)
    rep = select_num_factors(X, schema, q_max=6)
    assert rep.q_hat == 1
    assert len(rep.ratios) == 5


def test_q_max_validation():
    X = np.random.default_rng(0).normal(size=(10, 5))
    schema = VariableSchema.from_kinds(["continuous"] * 5)
    with pytest.raises(OverGFMError):
        select_num_factors(X, schema, q_max=1)


def test_constructed_diagonal_ratios():
    rep = singular_value_ratios(diag_loadings([10, 9, 0.1, 0.05]))
    assert rep.ratios == pytest.approx((10 / 9, 90, 2))
    assert rep.q_hat == 2


def test_equal_norm_orthogonal_columns_tie_to_one():
    Q, _ = np.linalg.qr(np.random.default_rng(5).normal(size=(20, 4)))
    rep = singular_value_ratios(3 * Q)
    assert rep.ratios == pytest.approx((1, 1, 1))
    assert rep.q_hat == 1


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31), scale=st.floats(1e-6, 1e6))
def test_q_hat_invariant_to_rescaling(seed, scale):
    B = np.random.default_rng(seed).normal(size=(12, 5)) * np.array([5, 3, 2, 1, 0.5])
    a, b = singular_value_ratios(B), singular_value_ratios(scale * B)
    assert a.q_hat == b.q_hat
    assert np.allclose(a.ratios, b.ratios, rtol=1e-9)


def test_max_ratio_falls_as_noise_grows():
    # mixed 300 x 300 design with six factors; averages over 5 replicates
    from overgfm import generate_dataset
    from overgfm.simulate import scenario1

    means = []
    for s2 in (0.1, 1.0, 3.0):
        vals = []
        for r in range(5):
            sim = generate_dataset(scenario1(sigma2=s2, n=300, p=300, q=6, seed=10 + r))
            vals.append(select_num_factors(sim.data, sim.schema, q_max=15).max_ratio)
        means.append(np.mean(vals))
    assert means[0] > means[1] > means[2], means
