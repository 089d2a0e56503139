import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.polynomial import hermite_e

from nlcca.errors import DominanceViolated, InvalidDimension
from nlcca.latent import check_dominance
from nlcca.oracle import (
    enumerate_hermite_spectrum,
    expected_entry_count,
    hermite_eval,
    mehler_cross_moment,
    monte_carlo_cross_moments,
    monte_carlo_gram,
    random_rho_vectors,
    run_oracle_suite,
    source_space_objective,
    verify_affine_optimality,
)


def test_hermite_small_cases():
    assert hermite_eval(0, 3.7) == 1.0
    assert hermite_eval(1, -0.4) == -0.4
    assert hermite_eval(2, 0.0) == pytest.approx(-1 / math.sqrt(2), abs=1e-15)
    with pytest.raises(ValueError):
        hermite_eval(-1, 0.0)


@pytest.mark.parametrize("n", range(9))
def test_hermite_matches_numpy_reference(n):
    x = np.linspace(-4, 4, 41)
    coef = np.zeros(n + 1)
    coef[n] = 1.0
    ref = hermite_e.hermeval(x, coef) / math.sqrt(math.factorial(n))
    np.testing.assert_allclose(hermite_eval(n, x), ref, rtol=1e-12, atol=1e-12)


def test_hermite_orthonormal_by_quadrature():
    x, w = hermite_e.hermegauss(30)
    w = w / w.sum()
    H = np.stack([hermite_eval(k, x) for k in range(8)])
    np.testing.assert_allclose((H * w) @ H.T, np.eye(8), atol=1e-12)


@pytest.mark.parametrize("m, n, rho, value", [(1, 1, 0.9, 0.9), (2, 1, 0.4, 0.0), (2, 2, 0.5, 0.25), (3, 3, -0.5, -0.125)])
def test_mehler_values(m, n, rho, value):
    assert mehler_cross_moment(m, n, rho) == pytest.approx(value)


def test_mehler_rejects_bad_input():
    with pytest.raises(ValueError):
        mehler_cross_moment(1, 1, 1.0)
    with pytest.raises(ValueError):
        mehler_cross_moment(-1, 1, 0.5)


def test_mehler_by_monte_carlo():
    mc = monte_carlo_cross_moments(0.5, 2, 1_000_000, seed=0)
    assert mc[2, 2] == pytest.approx(0.25, abs=0.01)
    for rho in (0.3, 0.5, 0.9):
        mc = monte_carlo_cross_moments(rho, 4, 1_000_000, seed=1)
        exact = np.array([[mehler_cross_moment(m, n, rho) for n in range(5)] for m in range(5)])
        assert np.max(np.abs(mc - exact)) <= 0.01


def test_plain_monte_carlo_is_the_inflation_one_case():
    a = monte_carlo_cross_moments(0.5, 1, 1000, seed=3, inflation=1.0)
    assert a[1, 1] == pytest.approx(0.5, abs=0.15)


def test_gram_by_monte_carlo():
    assert np.max(np.abs(monte_carlo_gram(5, 1_000_000, seed=2) - np.eye(6))) <= 0.01


def test_spectrum_two_coordinates_degree_two():
    spec = enumerate_hermite_spectrum((0.9, 0.85), 2)
    assert [a for a, _ in spec.entries] == [(1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]
    np.testing.assert_allclose(spec.values, [0.9, 0.85, 0.81, 0.765, 0.7225], rtol=1e-14)


def test_spectrum_single_coordinate():
    np.testing.assert_allclose(enumerate_hermite_spectrum((0.5,), 3).values, [0.5, 0.25, 0.125])


def test_spectrum_with_second_order_intruder():
    spec = enumerate_hermite_spectrum((0.9, 0.3), 2)
    assert spec.top(2) == [((1, 0), 0.9), ((2, 0), pytest.approx(0.81))]


def test_spectrum_tie_order_is_stable():
    spec = enumerate_hermite_spectrum((0.5, 0.5), 2)
    assert [a for a, _ in spec.entries] == [(1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]


def test_spectrum_count_and_csv(tmp_path):
    spec = enumerate_hermite_spectrum((0.9, 0.8, 0.7), 4)
    assert len(spec.entries) == expected_entry_count(3, 4) == math.comb(7, 3) - 1
    assert np.all((spec.values > 0) & (spec.values < 1))
    assert np.all(np.diff(spec.values) <= 0)
    spec.to_csv(tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "multi_index,degree,value" and lines[1].startswith("1 0 0,1,0.9")
    with pytest.raises(ValueError):
        enumerate_hermite_spectrum((0.9,), 0)


@pytest.mark.parametrize(
    "rho, optimal, top",
    [((0.9, 0.85), True, [(1, 0), (0, 1)]), ((0.9, 0.3), False, [(1, 0), (2, 0)]), ((0.5, 0.5), True, [(1, 0), (0, 1)])],
)
def test_affine_optimality_examples(rho, optimal, top):
    res = verify_affine_optimality(rho, 2, 2)
    assert res.affine_optimal is optimal
    assert res.top_indices == top


def test_affine_optimality_argument_checks():
    with pytest.raises(InvalidDimension):
        verify_affine_optimality((0.9, 0.85), 1)
    with pytest.raises(ValueError):
        verify_affine_optimality((0.9, 0.85), 2, 1)


def test_boundary_tie_is_not_affine_optimal():
    # rho_min == rho_max^2 exactly: a second-order feature ties the weakest first-order one
    assert check_dominance((0.5, 0.25)).holds is False
    assert verify_affine_optimality((0.5, 0.25), 2, 2).affine_optimal is False


def test_source_space_objective():
    assert source_space_objective((0.9, 0.85)) == pytest.approx(1.75)
    assert source_space_objective((0.5,)) == 0.5
    assert source_space_objective([0.88] * 5) == pytest.approx(4.4)
    assert source_space_objective((0.9, 0.85), 1) == 0.9
    with pytest.raises(DominanceViolated):
        source_space_objective((0.9, 0.3))
    with pytest.raises(InvalidDimension):
        source_space_objective((0.9, 0.85), 3)


def test_random_rho_vectors_cover_both_regimes():
    vecs = random_rho_vectors(400, seed=3)
    dominant = sum(check_dominance(r).holds for r in vecs)
    assert 100 < dominant < 300
    assert {len(r) for r in vecs} == {2, 3, 4, 5, 6}
    assert all(np.all(np.diff(r) <= 0) for r in vecs)


def test_oracle_suite_passes():
    results = run_oracle_suite(seed=0, n_random=200, mc_samples=1_000_000)
    assert [r.name for r in results] == [
        "hermite_orthonormality",
        "mehler_law",
        "dominance_equivalence",
        "counterexample_0.9_0.3",
        "ceiling_consistency",
    ]
    assert all(r.passed for r in results), results


rho_vec = st.lists(st.floats(0.02, 0.98), min_size=2, max_size=6).map(lambda v: sorted(v, reverse=True))


@given(rho_vec, st.sampled_from((2, 3, 4)))
def test_affine_optimality_iff_dominance(rho, degree):
    assert verify_affine_optimality(rho, len(rho), degree).affine_optimal == check_dominance(rho).holds


@given(rho_vec)
def test_ceiling_is_top_of_spectrum(rho):
    if check_dominance(rho).holds:
        top = enumerate_hermite_spectrum(rho, 4).values[: len(rho)].sum()
        assert source_space_objective(rho) == pytest.approx(top, abs=1e-12)
