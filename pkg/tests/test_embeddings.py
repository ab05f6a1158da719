"""Tests for the embeddings module."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from embeddings import (
    AitchisonSpace,
    CompositionPoint,
    EmbeddedVector,
    IntervalPoint,
    LaplacianPoint,
    QuantileCurve,
    SphereSpace,
    SpdPoint,
    aitchison_embed,
    aitchison_inverse,
    barycenter_root,
    embedded_distance,
    functional_embed,
    helmert_basis,
    interval_embed,
    interval_inverse,
    laplacian_embed,
    laplacian_inverse,
    make_space,
    quantile_embed,
    sphere_embed,
    sphere_inverse,
    spd_embed,
    spd_inverse,
    trapezoid_weights,
)
from errors import (
    DimensionMismatch,
    EmptySample,
    InvalidObject,
    InvertedInterval,
    NotInImage,
    NotPositiveDefinite,
    NotTangent,
    ZeroComponent,
)

LN2 = np.log(2.0)


def compositions(min_part=0.01, min_size=3, max_size=5):
    """Strategy for compositions with parts bounded below by min_part before scaling."""
    return st.lists(
        st.floats(min_value=min_part, max_value=1.0), min_size=min_size, max_size=max_size
    ).filter(lambda raw: sum(raw) > 0.1).map(
        lambda raw: CompositionPoint(np.asarray(raw) / np.sum(raw))
    )


def interval_points():
    return st.tuples(
        st.floats(min_value=-100, max_value=100), st.floats(min_value=0, max_value=50)
    ).map(lambda pair: IntervalPoint(pair[0], pair[0] + pair[1]))


class TestAitchison:
    """Test cases for the centred log-ratio embedding."""

    def test_barycenter_maps_to_origin(self):
        """Test that the barycenter embeds to the zero vector."""
        v = aitchison_embed(CompositionPoint(np.full(3, 1.0 / 3.0)))
        np.testing.assert_allclose(v.coords, 0.0, atol=1e-12)

    def test_hand_evaluated_embedding(self):
        """Test (1/2, 1/4, 1/4) against the log-ratio formula."""
        v = aitchison_embed(CompositionPoint([0.5, 0.25, 0.25]))
        expected = np.array([2.0 / 3.0, -1.0 / 3.0, -1.0 / 3.0]) * LN2
        np.testing.assert_allclose(v.coords, expected, atol=1e-12)
        np.testing.assert_allclose(v.coords, [0.4621, -0.2310, -0.2310], atol=1e-4)

    def test_zero_part_rejected(self):
        """Test that boundary compositions need the sphere embedding."""
        with pytest.raises(ZeroComponent):
            aitchison_embed(CompositionPoint([0.0, 0.5, 0.5]))

    def test_inverse_examples(self):
        """Test inverse at the origin and at the rounded hand example."""
        np.testing.assert_allclose(
            aitchison_inverse(EmbeddedVector(np.zeros(3))).parts, 1.0 / 3.0, atol=1e-12
        )
        coords = np.array([0.4621, -0.2310, -0.2310])
        coords -= coords.mean()
        np.testing.assert_allclose(
            aitchison_inverse(EmbeddedVector(coords)).parts, [0.5, 0.25, 0.25], atol=1e-4
        )

    def test_inverse_rejects_nonzero_sum(self):
        """Test that coordinates off the sum-zero plane are not in the image."""
        with pytest.raises(NotInImage):
            aitchison_inverse(EmbeddedVector(np.ones(3)))

    def test_distance_to_barycenter(self):
        """Test the Aitchison distance from the barycenter to (1/2, 1/4, 1/4)."""
        a = aitchison_embed(CompositionPoint(np.full(3, 1.0 / 3.0)))
        b = aitchison_embed(CompositionPoint([0.5, 0.25, 0.25]))
        assert embedded_distance(a, b) == pytest.approx(0.5659, abs=1e-4)

    @settings(max_examples=200, deadline=None)
    @given(compositions())
    def test_round_trip(self, x):
        """Test inverse(embed(x)) == x."""
        back = aitchison_inverse(aitchison_embed(x))
        np.testing.assert_allclose(back.parts, x.parts, atol=1e-10)

    @settings(max_examples=200, deadline=None)
    @given(compositions(min_size=3, max_size=3), compositions(min_size=3, max_size=3))
    def test_isometry_with_pairwise_log_ratios(self, x, y):
        """Test the embedded distance against the pairwise log-ratio formula."""
        lx, ly = np.log(x.parts), np.log(y.parts)
        ratios = (lx[:, None] - lx[None, :]) - (ly[:, None] - ly[None, :])
        native = np.sqrt(np.sum(ratios**2) / (2 * x.parts.size))
        embedded = embedded_distance(aitchison_embed(x), aitchison_embed(y))
        assert embedded == pytest.approx(native, abs=1e-8)

    @settings(max_examples=100, deadline=None)
    @given(compositions(min_size=4, max_size=4), compositions(min_size=4, max_size=4))
    def test_image_is_convex(self, x, y):
        """Test that convex combinations of images stay on the sum-zero plane."""
        space = AitchisonSpace()
        v, w = space.embed(x.parts), space.embed(y.parts)
        for t in (0.25, 0.5, 0.75):
            assert space.contains((1 - t) * v + t * w)


class TestHelmertBasis:
    """Test cases for the sum-zero orthonormal frame."""

    @pytest.mark.parametrize("k", [2, 3, 5])
    def test_orthonormal_and_sum_zero(self, k):
        """Test that the columns are orthonormal and orthogonal to ones."""
        basis = helmert_basis(k)
        assert basis.shape == (k, k - 1)
        np.testing.assert_allclose(basis.T @ basis, np.eye(k - 1), atol=1e-12)
        np.testing.assert_allclose(basis.sum(axis=0), 0.0, atol=1e-12)

    def test_chart_preserves_distances(self):
        """Test that chart coordinates are an isometric copy of the clr plane."""
        space = AitchisonSpace()
        v = space.embed(np.array([0.5, 0.25, 0.25]))
        w = space.embed(np.array([0.2, 0.3, 0.5]))
        chart = space.to_chart(np.vstack([v, w]))
        assert np.linalg.norm(chart[0] - chart[1]) == pytest.approx(np.linalg.norm(v - w))
        np.testing.assert_allclose(space.from_chart(chart[0], 3), v, atol=1e-12)


class TestSphere:
    """Test cases for the square-root sphere embedding."""

    def test_reference_maps_to_zero(self):
        """Test that the composition mu^2 maps to the zero tangent vector."""
        v = sphere_embed(CompositionPoint(np.full(3, 1.0 / 3.0)))
        np.testing.assert_allclose(v.coords, 0.0, atol=1e-12)

    def test_vertex_distance(self):
        """Test the tangent norm of (1, 0, 0) at the barycenter root."""
        v = sphere_embed(CompositionPoint([1.0, 0.0, 0.0]))
        assert np.linalg.norm(v.coords) == pytest.approx(np.arccos(1 / np.sqrt(3)), abs=1e-12)
        assert np.linalg.norm(v.coords) == pytest.approx(0.9553, abs=1e-4)

    def test_round_trip_example(self):
        """Test Exp after Log on (0.2, 0.3, 0.5)."""
        x = CompositionPoint([0.2, 0.3, 0.5])
        np.testing.assert_allclose(sphere_inverse(sphere_embed(x)).parts, x.parts, atol=1e-10)

    def test_zero_vector_inverts_to_reference(self):
        """Test that v = 0 decodes to mu squared."""
        mu = barycenter_root(4)
        back = sphere_inverse(EmbeddedVector(np.zeros(4)), mu)
        np.testing.assert_allclose(back.parts, mu**2, atol=1e-12)

    def test_quarter_turn_hits_boundary(self):
        """Test that a tangent vector of length pi/2 reaches a zero part."""
        mu = barycenter_root(3)
        tangent = np.array([1.0, -1.0, 0.0]) / np.sqrt(2.0) * (np.pi / 2.0)
        back = sphere_inverse(EmbeddedVector(tangent), mu)
        assert back.parts.min() == pytest.approx(0.0, abs=1e-12)

    def test_non_tangent_rejected(self):
        """Test that vectors with a component along mu are rejected."""
        with pytest.raises(NotTangent):
            sphere_inverse(EmbeddedVector(np.ones(3)))

    @settings(max_examples=200, deadline=None)
    @given(compositions(min_part=0.0))
    def test_round_trip_with_zeros(self, x):
        """Test round trips on compositions that may contain zeros."""
        back = sphere_inverse(sphere_embed(x))
        np.testing.assert_allclose(back.parts, x.parts, atol=1e-10)

    @settings(max_examples=200, deadline=None)
    @given(compositions(min_part=0.0, min_size=3, max_size=3))
    def test_radial_isometry(self, x):
        """Test that the tangent norm equals the geodesic distance to mu."""
        mu = barycenter_root(3)
        native = 2.0 * np.arcsin(np.linalg.norm(np.sqrt(x.parts) - mu) / 2.0)
        assert np.linalg.norm(sphere_embed(x, mu).coords) == pytest.approx(native, abs=1e-8)

    def test_images_are_tangent_and_convex(self):
        """Test image membership for convex combinations."""
        space = SphereSpace()
        v = space.embed(np.array([0.0, 0.4, 0.6]))
        w = space.embed(np.array([0.7, 0.3, 0.0]))
        for t in (0.0, 0.25, 0.5, 0.75, 1.0):
            assert space.contains((1 - t) * v + t * w)


class TestQuantileEmbedding:
    """Test cases for quantile curves."""

    def test_constant_sample(self):
        """Test that a constant sample gives a constant curve."""
        curve = quantile_embed([5.0, 5.0, 5.0], [0.1, 0.5, 0.9])
        np.testing.assert_array_equal(curve.values, 5.0)

    def test_order_statistic_convention(self):
        """Test the ceil(n q)-th order statistic."""
        curve = quantile_embed([3.0, 1.0], [0.25, 0.75])
        np.testing.assert_array_equal(curve.values, [1.0, 3.0])

    def test_exact_multiple_uses_lower_statistic(self):
        """Test that n q integral picks the (n q)-th order statistic."""
        curve = quantile_embed([4.0, 1.0, 3.0, 2.0], [0.5])
        assert curve.values[0] == 2.0

    def test_empty_sample(self):
        """Test that an empty sample cannot be embedded."""
        with pytest.raises(EmptySample):
            quantile_embed([], [0.5])

    def test_bad_grid(self):
        """Test that probabilities must lie strictly inside (0, 1)."""
        with pytest.raises(InvalidObject):
            quantile_embed([1.0, 2.0], [0.0, 0.5])

    @settings(max_examples=100, deadline=None)
    @given(
        st.lists(st.floats(min_value=-50, max_value=50), min_size=1, max_size=40),
        st.lists(st.floats(min_value=-50, max_value=50), min_size=1, max_size=40),
    )
    def test_weighted_isometry(self, first, second):
        """Test the weighted distance against an independent trapezoid rule."""
        grid = np.linspace(0.1, 0.9, 17)
        a = quantile_embed(first, grid)
        b = quantile_embed(second, grid)
        diff = a.values - b.values
        native = np.sqrt(np.sum(np.diff(grid) * (diff[:-1] ** 2 + diff[1:] ** 2) / 2.0))
        assert embedded_distance(a.to_vector(), b.to_vector()) == pytest.approx(native, abs=1e-8)
        space = make_space("distribution", eval_grid=grid)
        assert space.contains(0.5 * a.values + 0.5 * b.values)

    def test_functional_embedding_weights(self):
        """Test that functional data carry trapezoid weights."""
        grid = np.array([0.0, 0.5, 1.0])
        v = functional_embed([1.0, 1.0, 1.0], grid)
        np.testing.assert_allclose(v.weights, trapezoid_weights(grid))
        assert embedded_distance(v, EmbeddedVector(np.zeros(3), v.weights)) == pytest.approx(1.0)

    def test_decreasing_curve_rejected(self):
        """Test that quantile curves must be monotone."""
        with pytest.raises(InvalidObject):
            QuantileCurve(np.array([0.2, 0.8]), np.array([2.0, 1.0]))


class TestInterval:
    """Test cases for the interval support-function embedding."""

    def test_degenerate_interval(self):
        """Test [2, 2]."""
        np.testing.assert_array_equal(interval_embed(IntervalPoint(2.0, 2.0)).coords, [-2.0, 2.0])

    def test_support_values(self):
        """Test [-1, 3] maps to (1, 3)."""
        np.testing.assert_array_equal(interval_embed(IntervalPoint(-1.0, 3.0)).coords, [1.0, 3.0])

    def test_inverted_interval(self):
        """Test that lower > upper is rejected."""
        with pytest.raises(InvertedInterval):
            IntervalPoint(3.0, -1.0)

    def test_inverse_rejects_empty_interval(self):
        """Test that support values of an empty set are outside the image."""
        with pytest.raises(NotInImage):
            interval_inverse(EmbeddedVector(np.array([-2.0, 1.0])))

    @settings(max_examples=200, deadline=None)
    @given(interval_points(), interval_points())
    def test_round_trip_and_isometry(self, x, y):
        """Test round trip and the L2 distance of support functions on {-1, +1}."""
        back = interval_inverse(interval_embed(x))
        assert back.lower == pytest.approx(x.lower, abs=1e-10)
        assert back.upper == pytest.approx(x.upper, abs=1e-10)
        native = np.sqrt((y.lower - x.lower) ** 2 + (x.upper - y.upper) ** 2)
        assert embedded_distance(interval_embed(x), interval_embed(y)) == pytest.approx(
            native, abs=1e-8
        )


class TestRandomizedInvariants:
    """Round trips and isometries on 10,000 seeded random objects each."""

    N = 10_000

    @staticmethod
    def dirichlet_point(rng, k, zeros=False):
        parts = rng.dirichlet(np.full(k, 2.0))
        if zeros:
            parts[rng.random(k) < 0.2] = 0.0
            if parts.sum() == 0.0:
                parts[int(rng.integers(k))] = 1.0
        return CompositionPoint(parts / parts.sum())

    def test_aitchison(self):
        """Test the clr round trip and the pairwise log-ratio distance."""
        rng = np.random.default_rng(101)
        for _ in range(self.N):
            k = int(rng.integers(3, 6))
            x, y = self.dirichlet_point(rng, k), self.dirichlet_point(rng, k)
            back = aitchison_inverse(aitchison_embed(x))
            np.testing.assert_allclose(back.parts, x.parts, atol=1e-10)

            lx, ly = np.log(x.parts), np.log(y.parts)
            ratios = (lx[:, None] - lx[None, :]) - (ly[:, None] - ly[None, :])
            native = np.sqrt(np.sum(ratios**2) / (2 * k))
            embedded = embedded_distance(aitchison_embed(x), aitchison_embed(y))
            assert abs(embedded - native) <= 1e-8 * max(1.0, native)

    def test_sphere(self):
        """Test the square-root round trip with zeros and the radial distance."""
        rng = np.random.default_rng(102)
        for _ in range(self.N):
            k = int(rng.integers(3, 6))
            x = self.dirichlet_point(rng, k, zeros=True)
            v = sphere_embed(x)
            np.testing.assert_allclose(sphere_inverse(v).parts, x.parts, atol=1e-10)

            mu = barycenter_root(k)
            native = 2.0 * np.arcsin(np.linalg.norm(np.sqrt(x.parts) - mu) / 2.0)
            assert abs(np.linalg.norm(v.coords) - native) <= 1e-8

    def test_interval(self):
        """Test the support-value round trip and the L2 distance on {-1, +1}."""
        rng = np.random.default_rng(103)
        lowers = rng.uniform(-100.0, 100.0, size=(self.N, 2))
        widths = rng.exponential(10.0, size=(self.N, 2))
        widths[rng.random((self.N, 2)) < 0.05] = 0.0
        for (a, b), (wa, wb) in zip(lowers, widths):
            x, y = IntervalPoint(a, a + wa), IntervalPoint(b, b + wb)
            back = interval_inverse(interval_embed(x))
            assert back == x

            native = np.hypot(y.lower - x.lower, x.upper - y.upper)
            embedded = embedded_distance(interval_embed(x), interval_embed(y))
            assert abs(embedded - native) <= 1e-8


class TestMatrices:
    """Test cases for Laplacian and SPD embeddings."""

    def test_laplacian_round_trip(self):
        """Test flattening and reshaping of a weighted path graph."""
        entries = np.array([[1.0, -1.0, 0.0], [-1.0, 1.5, -0.5], [0.0, -0.5, 0.5]])
        v = laplacian_embed(LaplacianPoint(entries, max_weight=1.0))
        np.testing.assert_array_equal(laplacian_inverse(v, 1.0).entries, entries)

    def test_laplacian_invariants(self):
        """Test that rows must sum to zero."""
        with pytest.raises(InvalidObject):
            LaplacianPoint(np.array([[1.0, -0.5], [-0.5, 1.0]]))

    def test_identity_log(self):
        """Test log I = 0."""
        np.testing.assert_allclose(spd_embed(SpdPoint(np.eye(2))).coords, 0.0, atol=1e-12)

    def test_diagonal_power(self):
        """Test the square-root power map on diag(4, 9)."""
        v = spd_embed(SpdPoint(np.diag([4.0, 9.0])), mode="power", power=0.5)
        np.testing.assert_allclose(v.coords, [2.0, 0.0, 0.0, 3.0], atol=1e-12)

    def test_log_needs_positive_definite(self):
        """Test diag(0, 1) in log mode."""
        with pytest.raises(NotPositiveDefinite):
            spd_embed(SpdPoint(np.diag([0.0, 1.0])))

    @pytest.mark.parametrize("mode", ["log", "power"])
    def test_spd_round_trip(self, mode):
        """Test inverse after embed for a full SPD matrix."""
        matrix = np.array([[2.0, 0.5, 0.1], [0.5, 1.5, 0.3], [0.1, 0.3, 1.0]])
        back = spd_inverse(spd_embed(SpdPoint(matrix), mode), mode)
        np.testing.assert_allclose(back.entries, matrix, atol=1e-10)


class TestDistance:
    """Test cases for embedded_distance."""

    def test_identical_points(self):
        """Test that d(a, a) = 0."""
        a = EmbeddedVector(np.array([1.0, 2.0]))
        assert embedded_distance(a, a) == 0.0

    def test_dimension_mismatch(self):
        """Test that vectors of different size are rejected."""
        with pytest.raises(DimensionMismatch):
            embedded_distance(EmbeddedVector(np.zeros(2)), EmbeddedVector(np.zeros(3)))


class TestMakeSpace:
    """Test cases for the space factory."""

    def test_unknown_space(self):
        """Test that unknown names are rejected."""
        with pytest.raises(InvalidObject):
            make_space("hyperbolic")

    def test_distribution_needs_grid(self):
        """Test that the distribution space requires an evaluation grid."""
        with pytest.raises(InvalidObject):
            make_space("distribution")

    def test_compositional_decode_of_embed(self):
        """Test that the compositional adapter decodes its own images."""
        space = make_space("compositional")
        parts = np.array([0.2, 0.3, 0.5])
        np.testing.assert_allclose(space.decode(space.embed(parts)), parts, atol=1e-12)
