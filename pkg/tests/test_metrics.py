import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nlcca.errors import DegenerateTarget, InsufficientSamples, InvalidShape, RankDeficientSpan
from nlcca.latent import make_rng
from nlcca.metrics import (
    MetricsReport,
    orbit_distance,
    principal_angles,
    procrustes,
    r_squared,
    singular_gap_linf,
    view_orbit_distance,
)


def _orth(d, seed):
    q, r = np.linalg.qr(make_rng(seed).standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def test_r2_exact_affine_relation():
    rng = make_rng(0)
    S = rng.standard_normal((500, 3))
    Z = S @ rng.standard_normal((3, 3)) + np.array([1.0, -2.0, 5.0])
    per_dim, mean = r_squared(S, Z)
    np.testing.assert_allclose(per_dim, 1.0, atol=1e-12)
    assert mean == pytest.approx(1.0, abs=1e-12)


def test_r2_of_independent_noise_is_small():
    rng = make_rng(1)
    S, Z = rng.standard_normal((2, 100_000, 10))
    assert r_squared(S, Z)[1] <= 0.01


def test_r2_with_a_missing_coordinate():
    rng = make_rng(2)
    S = rng.standard_normal((20_000, 3))
    per_dim, _ = r_squared(S, S[:, :2])
    np.testing.assert_allclose(per_dim[:2], 1.0, atol=1e-12)
    assert per_dim[2] < 0.01


def test_r2_errors():
    S = np.ones((10, 2))
    with pytest.raises(DegenerateTarget):
        r_squared(S, make_rng(0).standard_normal((10, 2)))
    with pytest.raises(InsufficientSamples):
        r_squared(make_rng(0).standard_normal((3, 2)), np.zeros((3, 2)))
    with pytest.raises(InvalidShape):
        r_squared(np.zeros((4, 2)), np.zeros((5, 2)))


def test_principal_angles_of_rotated_span():
    rng = make_rng(3)
    S = rng.standard_normal((300, 4))
    angles, mean, mx = principal_angles(S @ _orth(4, 4), S)
    np.testing.assert_allclose(angles, 0.0, atol=1e-5)
    assert mean == pytest.approx(0.0, abs=1e-5) and mx == pytest.approx(0.0, abs=1e-5)


def test_principal_angles_of_orthogonal_spans():
    n = 8
    z = np.zeros((n, 1))
    s = np.zeros((n, 1))
    z[:4, 0] = [1, -1, 1, -1]
    s[4:, 0] = [1, -1, 1, -1]
    angles, _, _ = principal_angles(z, s)
    np.testing.assert_allclose(angles, [90.0])


def test_principal_angles_known_profile():
    rng = make_rng(5)
    s = rng.standard_normal((1_000_000, 3))
    Z = np.column_stack([s[:, 0], s[:, 1] + s[:, 2]])
    angles, mean, mx = principal_angles(Z, s[:, :2])
    np.testing.assert_allclose(angles, [0.0, 45.0], atol=0.5)
    assert mx == angles[-1] and mean == pytest.approx(angles.mean())


def test_principal_angle_errors():
    rng = make_rng(6)
    S = rng.standard_normal((50, 2))
    with pytest.raises(RankDeficientSpan):
        principal_angles(np.column_stack([S[:, 0], 2 * S[:, 0]]), S)
    with pytest.raises(InsufficientSamples):
        principal_angles(S[:2], S[:2])


def test_orbit_distance_zero_cases():
    rng = make_rng(7)
    Z, Zp = rng.standard_normal((2, 100, 3))
    assert orbit_distance(Z, Z @ _orth(3, 1), Zp, Zp @ _orth(3, 2)) <= 1e-10
    Z2 = rng.standard_normal((50, 2))
    assert view_orbit_distance(Z2, -Z2) <= 1e-10
    reflect = np.diag([1.0, -1.0])
    assert view_orbit_distance(Z2, Z2 @ reflect) <= 1e-10


def test_orbit_distance_feasibility_bound():
    rng = make_rng(8)
    Z = np.linalg.qr(rng.standard_normal((200, 3)))[0]
    E = 0.01 * rng.standard_normal((200, 3))
    Ep = 0.02 * rng.standard_normal((200, 3))
    d = orbit_distance(Z, Z + E, Z, Z + Ep)
    assert d <= (np.sum(E**2) + np.sum(Ep**2)) / 200 + 1e-15


def test_orbit_distance_matches_closed_form():
    rng = make_rng(9)
    Z, Zh = rng.standard_normal((2, 40, 3))
    nuc = np.linalg.svd(Z.T @ Zh, compute_uv=False).sum()
    closed = (np.sum(Zh**2) + np.sum(Z**2) - 2 * nuc) / 40
    assert view_orbit_distance(Z, Zh) == pytest.approx(closed, rel=1e-10)
    Q = procrustes(Z, Zh)
    np.testing.assert_allclose(Q @ Q.T, np.eye(3), atol=1e-12)
    with pytest.raises(InvalidShape):
        view_orbit_distance(Z, Zh[:, :2])


def test_singular_gap():
    assert singular_gap_linf([0.9, 0.85], [0.9, 0.85]) == 0.0
    assert singular_gap_linf([0.9, 0.85], [0.9, 0.80]) == pytest.approx(0.05)
    with pytest.raises(InvalidShape):
        singular_gap_linf([1.0], [1.0, 2.0])


def test_population_singulars_concentrate():
    from nlcca.cca import empirical_cross_stats
    from nlcca.latent import make_latent_spec, sample_source_pair

    spec = make_latent_spec("gaussian", 2, (0.9, 0.85))
    b = sample_source_pair(spec, 1_000_000, seed=1)
    sig = empirical_cross_stats(b.S, b.S_prime, 1e-6).singulars
    assert singular_gap_linf(sig, spec.rho) <= 0.01


def test_report_row():
    rep = MetricsReport(np.array([1.0, 0.5]), 0.75, np.array([1.0, 2.0]), 1.5, 2.0, 0.1, 0.01)
    row = rep.to_row()
    assert row["r2_per_dim"] == "1 0.5" and row["pa_max"] == 2.0


seeds = st.integers(0, 2**31 - 1)


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_r2_affine_invariance(seed):
    rng = make_rng(seed)
    S = rng.standard_normal((80, 3))
    Z = S[:, :2] + 0.3 * rng.standard_normal((80, 2))
    A = rng.standard_normal((2, 2)) + 3 * np.eye(2)
    a = r_squared(S, Z)[0]
    b = r_squared(S, Z @ A + rng.standard_normal(2))[0]
    np.testing.assert_allclose(a, b, atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_principal_angles_depend_only_on_spans(seed):
    rng = make_rng(seed)
    S = rng.standard_normal((60, 3))
    Z = S + 0.5 * rng.standard_normal((60, 3))
    A = rng.standard_normal((3, 3)) + 4 * np.eye(3)
    B = rng.standard_normal((3, 3)) + 4 * np.eye(3)
    base = principal_angles(Z, S)[0]
    moved = principal_angles(Z @ A, S @ B)[0]
    np.testing.assert_allclose(base, moved, atol=1e-6)
    assert np.all((base >= 0) & (base <= 90))


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_orbit_distance_symmetry_and_common_rotation(seed):
    rng = make_rng(seed)
    Z, Zh = rng.standard_normal((2, 30, 3))
    Q = _orth(3, seed + 1)
    d = view_orbit_distance(Z, Zh)
    assert d >= 0
    assert view_orbit_distance(Zh, Z) == pytest.approx(d, rel=1e-9, abs=1e-12)
    assert view_orbit_distance(Z @ Q, Zh @ Q) == pytest.approx(d, rel=1e-9, abs=1e-12)
    assert view_orbit_distance(Z, Z @ Q) <= 1e-10
