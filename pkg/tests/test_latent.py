import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nlcca.errors import InvalidCorrelation, InvalidDimension, UnrealizableCorrelation
from nlcca.latent import (
    FAMILIES,
    GRID_TOL,
    LatentSpec,
    check_dominance,
    default_rho,
    make_latent_spec,
    population_cross_cov,
    rho_for_ratio,
    sample_source_pair,
)

N_MC = 1_000_000


def test_gaussian_variances_follow_rho():
    spec = make_latent_spec("gaussian", 2, (0.9, 0.85))
    np.testing.assert_allclose(spec.family_params["var_c"], [0.9, 0.85])
    np.testing.assert_allclose(spec.family_params["var_a"], [0.1, 0.15])


def test_equal_correlation_is_the_iid_case():
    spec = make_latent_spec("gaussian", 2, (0.5, 0.5))
    np.testing.assert_allclose(spec.family_params["var_a"], [0.5, 0.5])
    np.testing.assert_allclose(spec.family_params["var_c"], [0.5, 0.5])


def test_poisson_half_correlation_uses_equal_rates():
    spec = make_latent_spec("poisson", 2, (0.5, 0.5))
    assert spec.family_params["rate_a"] == [4.0, 4.0]
    assert spec.family_params["rate_c"] == [4.0, 4.0]
    mean, std = spec.standardizers
    np.testing.assert_allclose(mean, 8.0)
    np.testing.assert_allclose(std**2, 8.0)
    batch = sample_source_pair(spec, N_MC, seed=0)
    assert np.all(np.abs(batch.S.mean(axis=0)) <= 0.005)
    assert np.all(np.abs(batch.S.var(axis=0) - 1.0) <= 0.01)
    corr = [np.corrcoef(batch.S[:, i], batch.S_prime[:, i])[0, 1] for i in range(2)]
    np.testing.assert_allclose(corr, 0.5, atol=0.005)


@pytest.mark.parametrize(
    "kwargs, err",
    [
        (dict(family="gaussian", d_S=1, rho=(0.5,)), InvalidDimension),
        (dict(family="gaussian", d_S=2, rho=(1.0, 0.5)), InvalidCorrelation),
        (dict(family="gaussian", d_S=2, rho=(0.5, 0.0)), InvalidCorrelation),
        (dict(family="gaussian", d_S=2, rho=(0.5, 0.7)), InvalidCorrelation),
        (dict(family="gaussian", d_S=3, rho=(0.9, 0.8)), InvalidDimension),
        (dict(family="binomial", d_S=2, rho=(0.9, 0.537), total=10, max_total=10), UnrealizableCorrelation),
    ],
)
def test_make_latent_spec_rejects(kwargs, err):
    with pytest.raises(err):
        make_latent_spec(**kwargs)


def test_unknown_family():
    with pytest.raises(ValueError):
        make_latent_spec("cauchy", 2)


@pytest.mark.parametrize(
    "rho, holds, ratio",
    [((0.9, 0.85), True, 0.85 / 0.81), ((0.9, 0.3), False, 0.3 / 0.81), ((0.81, 0.81), True, 0.81 / 0.6561)],
)
def test_check_dominance_examples(rho, holds, ratio):
    d = check_dominance(rho)
    assert d.holds is holds
    assert d.ratio == pytest.approx(ratio, rel=1e-12)


def test_default_rho_is_dominant_and_descending():
    r = default_rho(5)
    assert r[0] == 0.90 and r[-1] == 0.85
    assert np.all(np.diff(r) < 0)
    assert check_dominance(r).holds


def test_rho_for_ratio_hits_requested_ratio():
    for ratio in (0.5, 0.8, 1.2, 1.5):
        r = rho_for_ratio(5, ratio)
        assert check_dominance(r).ratio == pytest.approx(ratio)
    with pytest.raises(InvalidCorrelation):
        rho_for_ratio(5, 2.0, top=0.6)


@pytest.mark.parametrize("family", FAMILIES)
def test_family_moments_and_correlations(family):
    spec = make_latent_spec(family, 3)
    assert np.max(np.abs(spec.realized_rho() - np.asarray(spec.rho))) <= GRID_TOL
    b = sample_source_pair(spec, N_MC, seed=11)
    S, Sp = b.S, b.S_prime
    assert np.all(np.abs(S.mean(axis=0)) <= 5 / np.sqrt(N_MC))
    assert np.all(np.abs(Sp.mean(axis=0)) <= 5 / np.sqrt(N_MC))
    np.testing.assert_allclose(S.var(axis=0), 1.0, atol=0.01)
    joint = np.corrcoef(np.hstack([S, Sp]).T)
    d = spec.d_S
    np.testing.assert_allclose(np.diag(joint[:d, d:]), spec.rho, atol=0.005)
    off = joint.copy()
    off[np.arange(2 * d), np.arange(2 * d)] = 0.0
    off[np.arange(d), np.arange(d) + d] = 0.0
    off[np.arange(d) + d, np.arange(d)] = 0.0
    assert np.max(np.abs(off)) <= 0.005


def test_monte_carlo_gaussian_correlations():
    spec = make_latent_spec("gaussian", 2, (0.9, 0.85))
    b = sample_source_pair(spec, N_MC, seed=0)
    cross = np.corrcoef(np.hstack([b.S, b.S_prime]).T)[:2, 2:]
    np.testing.assert_allclose(np.diag(cross), [0.9, 0.85], atol=0.005)
    assert abs(cross[0, 1]) <= 0.005 and abs(cross[1, 0]) <= 0.005


def test_hypergeometric_population_grows_to_realize_rho():
    spec = make_latent_spec("hypergeometric", 5)
    assert spec.family_params["population"] > 100
    assert spec.family_params["successes"] * 2 == spec.family_params["population"]
    iid = make_latent_spec("hypergeometric", 2, (0.5, 0.5))
    assert iid.family_params["population"] == 100


def test_sampling_is_deterministic():
    spec = make_latent_spec("gamma", 3)
    a = sample_source_pair(spec, 2, seed=7)
    b = sample_source_pair(spec, 2, seed=7)
    assert a.S.tobytes() == b.S.tobytes() and a.S_prime.tobytes() == b.S_prime.tobytes()
    assert a.spec_id == b.spec_id
    c = sample_source_pair(spec, 2, seed=8)
    assert c.S.tobytes() != a.S.tobytes()
    with pytest.raises(ValueError):
        sample_source_pair(spec, 1, seed=0)


@pytest.mark.parametrize("family", FAMILIES)
def test_json_round_trip(family):
    spec = make_latent_spec(family, 4, (0.9, 0.8733333333333333, 0.8466666666666667, 0.82))
    back = LatentSpec.from_json(spec.to_json())
    assert back == spec
    assert json.loads(spec.to_json())["rho"][1] == 0.8733333333333333


def test_json_without_params_is_rebuilt():
    doc = json.dumps({"family": "poisson", "d_S": 2, "rho": [0.7, 0.6], "family_params": {}})
    spec = LatentSpec.from_json(doc)
    assert spec.family_params["rate_c"] == pytest.approx([5.6, 4.8])
    with pytest.raises(InvalidDimension):
        LatentSpec.from_json(json.dumps({"family": "gaussian", "d_S": 3, "rho": [0.7, 0.6]}))


def test_population_cross_cov_is_diagonal_rho():
    spec = make_latent_spec("gaussian", 2, (0.9, 0.85))
    np.testing.assert_array_equal(population_cross_cov(spec), [[0.9, 0.0], [0.0, 0.85]])
    cov = population_cross_cov(make_latent_spec("binomial", 4))
    assert np.linalg.matrix_rank(cov) == 4
    np.testing.assert_allclose(np.linalg.svd(cov, compute_uv=False), sorted(np.diag(cov), reverse=True))


rho_vectors = st.lists(st.floats(0.01, 0.99), min_size=2, max_size=6).map(lambda v: sorted(v, reverse=True))


@given(rho_vectors)
def test_dominance_matches_its_definition(rho):
    assert check_dominance(rho).holds == (min(rho) > max(rho) ** 2)


@settings(max_examples=40, deadline=None)
@given(rho_vectors, st.sampled_from(("gaussian", "gamma", "poisson")))
def test_continuous_families_realize_rho_exactly(rho, family):
    spec = make_latent_spec(family, len(rho), rho)
    np.testing.assert_allclose(spec.realized_rho(), rho, rtol=1e-12)
    mean, std = spec.standardizers
    assert np.all(std > 0)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.05, 0.95), min_size=2, max_size=4).map(lambda v: sorted(v, reverse=True)))
def test_discrete_grid_is_within_tolerance(rho):
    for family in ("binomial", "hypergeometric"):
        try:
            spec = make_latent_spec(family, len(rho), rho)
        except UnrealizableCorrelation:
            continue
        assert np.max(np.abs(spec.realized_rho() - rho)) <= GRID_TOL
