import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import subspace_angles
from scipy.spatial.distance import directed_hausdorff

from clvtools.errors import AmbientMismatch, IllConditionedSplitting, NonFiniteValues, RankDeficient
from clvtools.grassmann import (
    SplittingPair,
    Subspace,
    directed_gap,
    grassmann_distance,
    oblique_project,
    orthonormalize,
    projection_norm,
    projector,
    random_subspace,
    restricted_norm,
    sample_complement,
    span,
    subspace_sum,
    transversality_degree,
)

E = np.eye(3)


def line(*v):
    return span(np.array(v, dtype=float))


# -- Subspace / orthonormalize ------------------------------------------------


def test_orthonormalize_identity_columns():
    s, r = orthonormalize(E[:, :2])
    np.testing.assert_array_equal(s.basis, E[:, :2])
    np.testing.assert_array_equal(r, np.eye(2))


def test_orthonormalize_single_column():
    s, r = orthonormalize([3.0, 4.0, 0.0])
    np.testing.assert_allclose(s.basis[:, 0], [0.6, 0.8, 0.0], atol=1e-15)
    np.testing.assert_allclose(r, [[5.0]], atol=1e-15)


def test_orthonormalize_repeated_column():
    with pytest.raises(RankDeficient) as info:
        orthonormalize(np.column_stack([E[:, 0], E[:, 0]]))
    assert info.value.column_index == 1


def test_orthonormalize_rejects_nan():
    with pytest.raises(NonFiniteValues):
        orthonormalize([[1.0], [np.nan]])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.integers(0, 4))
def test_orthonormalize_reconstructs(seed, k, extra):
    a = np.random.default_rng(seed).standard_normal((k + extra, k))
    s, r = orthonormalize(a)
    np.testing.assert_allclose(s.basis @ r, a, atol=1e-12)
    assert np.all(np.diag(r) > 0)
    np.testing.assert_array_equal(r, np.triu(r))
    assert np.abs(s.basis.T @ s.basis - np.eye(k)).max() < 1e-12


def test_subspace_rejects_non_orthonormal():
    with pytest.raises(ValueError):
        Subspace(np.array([[1.0, 1.0], [0.0, 1.0]]))


def test_subspace_is_read_only():
    s = span(E[:, :2])
    with pytest.raises(ValueError):
        s.basis[0, 0] = 2.0


def test_complement():
    s = span(E[:, :2])
    c = s.complement()
    assert c.dim == 1
    assert grassmann_distance(c, line(0, 0, 1)) < 1e-15
    assert span(E).complement() is None


def test_subspace_sum_of_intersecting_spaces_fails():
    with pytest.raises(RankDeficient):
        subspace_sum(span(E[:, :2]), span(E[:, 1:]))


# -- distances ----------------------------------------------------------------


def test_distance_identical_lines():
    assert grassmann_distance(line(1, 0, 0), line(1, 0, 0)) == 0.0


def test_distance_orthogonal_lines():
    assert grassmann_distance(line(1, 0), line(0, 1)) == 1.0


def test_distance_diagonal_line_matches_brute_force_hausdorff():
    t = np.linspace(-1, 1, 200_001)[:, None]
    a = t * np.array([1.0, 0.0])
    b = t * np.array([1.0, 1.0]) / math.sqrt(2)
    brute = max(directed_hausdorff(a[::100], b)[0], directed_hausdorff(b[::100], a)[0])
    d = grassmann_distance(line(1, 0), line(1, 1))
    assert d == pytest.approx(math.sqrt(2) / 2, abs=1e-15)
    assert d == pytest.approx(brute, abs=1e-4)


def test_unequal_dimensions_are_at_distance_one():
    assert grassmann_distance(line(1, 0, 0), span(E[:, :2])) == 1.0


def test_ambient_mismatch():
    with pytest.raises(AmbientMismatch):
        grassmann_distance(line(1, 0), line(1, 0, 0))
    with pytest.raises(AmbientMismatch):
        directed_gap(line(1, 0), line(1, 0, 0))
    with pytest.raises(AmbientMismatch):
        transversality_degree(line(1, 0), line(1, 0, 0))


def test_directed_gap_into_superspace():
    assert directed_gap(line(1, 0, 0), span(E[:, :2])) == 0.0


def test_directed_gap_from_larger_space():
    assert directed_gap(span(E[:, :2]), line(1, 0, 0)) == 1.0


def test_directed_gap_matches_sampling():
    rng = np.random.default_rng(11)
    v, w = random_subspace(rng, 4, 2), random_subspace(rng, 4, 2)
    x = v.basis @ rng.standard_normal((2, 100_000))
    x /= np.linalg.norm(x, axis=0)
    # nearest point of the unit disk of W, found by search over a polar grid
    r, th = np.meshgrid(np.linspace(0, 1, 201), np.linspace(0, 2 * np.pi, 721))
    disk = w.basis @ np.vstack([(r * np.cos(th)).ravel(), (r * np.sin(th)).ravel()])
    worst = x[:, np.argmax(np.linalg.norm(w.residual(x), axis=0))]
    grid_dist = np.linalg.norm(disk - worst[:, None], axis=0).min()
    sampled = np.linalg.norm(w.residual(x), axis=0).max()
    gap = directed_gap(v, w)
    assert sampled <= gap + 1e-12
    assert gap == pytest.approx(sampled, abs=1e-3)
    assert gap == pytest.approx(grid_dist, abs=1e-2)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 8), st.data())
def test_distance_is_sine_of_largest_principal_angle(seed, d, data):
    k = data.draw(st.integers(1, d - 1))
    rng = np.random.default_rng(seed)
    v, w = random_subspace(rng, d, k), random_subspace(rng, d, k)
    expected = math.sin(subspace_angles(v.basis, w.basis).max())
    assert grassmann_distance(v, w) == pytest.approx(expected, abs=1e-10)
    assert directed_gap(v, w) == pytest.approx(directed_gap(w, v), abs=1e-10)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_metric_axioms(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(2, 7))
    k = int(rng.integers(1, d))
    u, v, w = (random_subspace(rng, d, k) for _ in range(3))
    assert grassmann_distance(u, v) == grassmann_distance(v, u)
    assert 0.0 <= grassmann_distance(u, v) <= 1.0
    assert grassmann_distance(u, w) <= grassmann_distance(u, v) + grassmann_distance(v, w) + 1e-10
    q = np.linalg.qr(rng.standard_normal((k, k)))[0]
    assert grassmann_distance(u, Subspace(u.basis @ q)) < 1e-10


# -- transversality -----------------------------------------------------------


def test_transversality_orthogonal():
    assert transversality_degree(line(1, 0, 0), span(E[:, 1:])) == pytest.approx(1.0, abs=1e-15)


def test_transversality_diagonal():
    w = line(1, 1, 0)
    v = span(E[:, 1:])
    t = transversality_degree(w, v)
    assert t == pytest.approx(math.sqrt(2) / 2, abs=1e-15)
    x = np.array([1.0, 1.0, 0.0]) / math.sqrt(2)
    assert t == pytest.approx(np.linalg.norm(x - np.array([0, x[1], 0])), abs=1e-15)


def test_transversality_containment():
    assert transversality_degree(line(1, 0, 0), span(E[:, :2])) == 0.0


def test_transversality_too_many_dimensions():
    assert transversality_degree(span(E[:, :2]), span(E[:, 1:])) == 0.0


def test_transversality_matches_sampling():
    rng = np.random.default_rng(5)
    w, v = random_subspace(rng, 5, 2), random_subspace(rng, 5, 3)
    x = w.basis @ rng.standard_normal((2, 50_000))
    x /= np.linalg.norm(x, axis=0)
    sampled = np.linalg.norm(v.residual(x), axis=0).min()
    t = transversality_degree(w, v)
    assert t <= sampled + 1e-12
    assert t == pytest.approx(sampled, abs=1e-3)
    # sqrt(1 - sigma_max^2) identity
    smax = np.linalg.svd(v.basis.T @ w.basis, compute_uv=False).max()
    assert t == pytest.approx(math.sqrt(1 - smax**2), abs=1e-10)


# -- splittings and projections -----------------------------------------------


def test_oblique_orthogonal_pair():
    pair = SplittingPair(line(1, 0), line(0, 1))
    y, z = oblique_project(pair, [3.0, 5.0])
    np.testing.assert_allclose(y, [3, 0], atol=1e-15)
    np.testing.assert_allclose(z, [0, 5], atol=1e-15)


def test_oblique_skew_pair():
    pair = SplittingPair(line(1, 0), line(1, 1))
    y, z = oblique_project(pair, [0.0, 1.0])
    np.testing.assert_allclose(y, [-1, 0], atol=1e-15)
    np.testing.assert_allclose(z, [1, 1], atol=1e-15)


def test_oblique_zero_vector():
    rng = np.random.default_rng(0)
    pair = SplittingPair(random_subspace(rng, 4, 1), random_subspace(rng, 4, 3))
    y, z = oblique_project(pair, np.zeros(4))
    assert not y.any() and not z.any()


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_oblique_decomposition_and_idempotence(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(2, 7))
    k = int(rng.integers(1, d))
    pair = SplittingPair(random_subspace(rng, d, k), random_subspace(rng, d, d - k))
    x = rng.standard_normal(d)
    y, z = oblique_project(pair, x)
    scale = 1 + np.abs(y).max()
    np.testing.assert_allclose(y + z, x, atol=1e-12 * scale)
    assert np.linalg.norm(pair.y.residual(y)) < 1e-12 * scale
    assert np.linalg.norm(pair.z.residual(z)) < 1e-12 * scale
    y2, z2 = oblique_project(pair, y)
    np.testing.assert_allclose(y2, y, atol=1e-12 * scale)
    np.testing.assert_allclose(projector(pair) @ x, y, atol=1e-12 * scale)


def test_ill_conditioned_splitting():
    with pytest.raises(IllConditionedSplitting):
        SplittingPair(line(1, 0), line(1, 1e-16))


def test_splitting_dimension_check():
    with pytest.raises(ValueError):
        SplittingPair(line(1, 0, 0), line(0, 1, 0))


def test_projection_norm_orthogonal():
    pair = SplittingPair(span(E[:, :2]), line(0, 0, 1))
    assert projection_norm(pair) == pytest.approx(1.0, abs=1e-15)
    assert projection_norm(pair, onto_y=False) == pytest.approx(1.0, abs=1e-15)


def test_projection_norm_skew():
    pair = SplittingPair(line(1, 0), line(1, 1))
    np.testing.assert_allclose(projector(pair), [[1, -1], [0, 0]], atol=1e-15)
    assert projection_norm(pair) == pytest.approx(math.sqrt(2), abs=1e-14)


@pytest.mark.parametrize("theta", [1.2, 0.5, 0.1, 1e-3, 1e-6])
def test_projection_norm_blows_up_as_spaces_merge(theta):
    pair = SplittingPair(line(1, 0), line(math.cos(theta), math.sin(theta)))
    assert projection_norm(pair) == pytest.approx(1 / abs(math.sin(theta)), rel=1e-9)


def test_projection_norm_basis_invariance():
    rng = np.random.default_rng(2)
    y, z = random_subspace(rng, 5, 2), random_subspace(rng, 5, 3)
    qy = np.linalg.qr(rng.standard_normal((2, 2)))[0]
    qz = np.linalg.qr(rng.standard_normal((3, 3)))[0]
    a = SplittingPair(y, z)
    b = SplittingPair(Subspace(y.basis @ qy), Subspace(z.basis @ qz))
    for onto in (True, False):
        assert projection_norm(a, onto) == pytest.approx(projection_norm(b, onto), abs=1e-12)


def test_restricted_norm():
    op = np.diag([3.0, 2.0, 1.0])
    assert restricted_norm(op, span(E[:, 1:])) == pytest.approx(2.0)


# -- complements --------------------------------------------------------------


def test_sample_complement_full_space():
    assert grassmann_distance(sample_complement(3, 3, 4), span(E)) < 1e-15


def test_sample_complement_deterministic():
    a, b = sample_complement(5, 2, 7), sample_complement(5, 2, 7)
    np.testing.assert_array_equal(a.basis, b.basis)


def test_sample_complement_is_transverse():
    v = span(np.eye(50)[:, 3:])
    for seed in range(100):
        assert transversality_degree(sample_complement(50, 3, seed), v) > 0


def test_sample_complement_bad_k():
    with pytest.raises(ValueError):
        sample_complement(3, 4, 0)


# -- closeness constants ------------------------------------------------------


def test_small_directed_gap_bounds_distance():
    rng = np.random.default_rng(2024)
    checked = 0
    for _ in range(1000):
        d = int(rng.integers(2, 11))
        k = int(rng.integers(1, min(3, d - 1) + 1))
        v = random_subspace(rng, d, k)
        r_target = rng.uniform(0, 3.0**-k / 4)
        tilt = v.complement().basis @ rng.standard_normal((d - k, k))
        tilt *= r_target / np.linalg.norm(tilt, 2)
        w = orthonormalize(v.basis + tilt)[0]
        r = directed_gap(v, w)
        if r < 3.0**-k / 4:
            checked += 1
            assert grassmann_distance(v, w) < 4 * 3**k * r
    assert checked >= 900
