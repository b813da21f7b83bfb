import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dualflat import (
    ConvexityError,
    DivergencePair,
    DomainError,
    GeneratorSpec,
    ValidationError,
    bregman,
    conjugate_bregman,
    dual_bregman,
    dual_induced_metric,
    induced_metric,
    kl_discrete,
    local_quadratic,
    log_partition,
    mixed_bregman,
    to_dual,
)

from conftest import FAMILY_KINDS, bernoulli, euclid, exp_generator, family


def two_outcome_kl(a, b):
    """KL between Bernoulli(a) and Bernoulli(b), summed over both outcomes."""
    return a * math.log(a / b) + (1 - a) * math.log((1 - a) / (1 - b))


LOG3 = math.log(3.0)


class TestBregman:
    def test_euclidean_half_squared_distance(self):
        assert bregman(euclid(), [0, 0], [3, 4]) == pytest.approx(12.5, abs=1e-12)

    def test_identical_points(self, fam):
        gen = log_partition(fam)
        assert bregman(gen, [0.3, -0.2], [0.3, -0.2]) == 0.0

    def test_bernoulli_against_outcome_sum(self):
        expected = two_outcome_kl(0.5, 0.75)
        assert expected == pytest.approx(0.143841, abs=5e-7)
        assert bregman(bernoulli(), [LOG3], [0.0]) == pytest.approx(expected, abs=1e-12)

    def test_orientation_is_not_symmetric(self):
        gen = bernoulli()
        assert bregman(gen, [LOG3], [0.0]) != pytest.approx(bregman(gen, [0.0], [LOG3]), abs=1e-3)

    def test_domain_violation(self):
        gen = GeneratorSpec(dim=1, value=lambda x: -math.log(x[0]), domain_guard=lambda x: x[0] > 0)
        with pytest.raises(DomainError):
            bregman(gen, [1.0], [-1.0])

    def test_invariant_under_affine_terms(self, rng):
        gen = bernoulli(2)
        shifted = GeneratorSpec(dim=2, value=lambda x: gen.psi(x) + 3.0 * x[0] - x[1] + 7.0)
        for p, q in rng.normal(size=(10, 2, 2)):
            assert bregman(shifted, p, q) == pytest.approx(bregman(gen, p, q), abs=1e-8)


class TestDualBregman:
    def test_euclidean(self):
        assert dual_bregman(euclid(), [0, 0], [3, 4]) == pytest.approx(12.5, abs=1e-12)

    def test_identical_points(self):
        assert dual_bregman(bernoulli(), [0.4], [0.4]) == 0.0

    def test_bernoulli_against_outcome_sum(self):
        expected = two_outcome_kl(0.75, 0.5)
        assert expected == pytest.approx(0.130812, abs=5e-7)
        assert dual_bregman(bernoulli(), [LOG3], [0.0]) == pytest.approx(expected, abs=1e-12)

    def test_pair_orientation(self):
        gen = bernoulli()
        assert DivergencePair(gen)([LOG3], [0.0]) == bregman(gen, [LOG3], [0.0])
        assert DivergencePair(gen, "dual")([LOG3], [0.0]) == dual_bregman(gen, [LOG3], [0.0])
        with pytest.raises(ValueError):
            DivergencePair(gen, "sideways")

    def test_euclidean_self_dual_exactly(self, rng):
        gen = euclid(3)
        for p, q in rng.normal(size=(20, 2, 3)):
            assert bregman(gen, p, q) == dual_bregman(gen, q, p)
            assert abs(bregman(gen, p, q) - dual_bregman(gen, p, q)) < 1e-12


class TestMixed:
    def test_euclidean(self):
        assert mixed_bregman(euclid(), [0, 0], [3, 4]) == pytest.approx(12.5, abs=1e-12)

    def test_same_point_in_both_charts(self, fam):
        gen = log_partition(fam)
        p = np.array([0.4, -0.7])
        assert mixed_bregman(gen, p, to_dual(gen, p)) == pytest.approx(0.0, abs=1e-12)

    def test_bernoulli_closed_form(self):
        expected = math.log(4.0) - math.log(2.0) - 0.5 * LOG3
        assert mixed_bregman(bernoulli(), [LOG3], [0.5]) == pytest.approx(expected, abs=1e-12)
        assert expected == pytest.approx(0.143841, abs=5e-7)


class TestInducedMetric:
    def test_euclidean_identity(self):
        np.testing.assert_array_equal(induced_metric(euclid(3), [1.0, -2.0, 5.0]).matrix, np.eye(3))

    def test_bernoulli_at_zero(self):
        np.testing.assert_allclose(induced_metric(bernoulli(), [0.0]).matrix, [[0.25]], atol=1e-15)

    def test_exponential_at_zero(self):
        np.testing.assert_allclose(induced_metric(exp_generator(), [0.0]).matrix, [[1.0]])

    def test_rejects_indefinite_hessian(self):
        saddle = GeneratorSpec(dim=2, value=lambda x: x[0] ** 2 - x[1] ** 2)
        with pytest.raises(ConvexityError):
            induced_metric(saddle, [0.0, 0.0])

    def test_quadratic_form(self):
        form = induced_metric(bernoulli(2), [0.0, 0.0])
        assert form([2.0, 0.0]) == pytest.approx(1.0)
        assert form([1.0, 0.0], [0.0, 1.0]) == 0.0
        np.testing.assert_allclose(form.inverse().matrix, 4 * np.eye(2))

    def test_dual_metric_inverts(self, fam, rng):
        gen = log_partition(fam)
        for p in rng.uniform(-2, 2, size=(5, 2)):
            prod = induced_metric(gen, p).matrix @ dual_induced_metric(gen, p).matrix
            np.testing.assert_allclose(prod, np.eye(2), atol=1e-5)


class TestLocalQuadratic:
    def test_euclidean(self):
        assert local_quadratic(euclid(), [0.0, 0.0], [0.1, 0.0]) == pytest.approx(0.005, abs=1e-15)

    def test_bernoulli(self):
        assert local_quadratic(bernoulli(), [0.0], [0.1]) == pytest.approx(0.5 * 0.25 * 0.01, abs=1e-15)

    def test_ratio_tends_to_one(self):
        gen = bernoulli()
        ratio = bregman(gen, [0.0], [1e-4]) / local_quadratic(gen, [0.0], [1e-4])
        assert ratio == pytest.approx(1.0, abs=1e-3)

    def test_target_outside_domain(self):
        gen = GeneratorSpec(dim=1, value=lambda x: -math.log(x[0]), domain_guard=lambda x: x[0] > 0)
        with pytest.raises(DomainError):
            local_quadratic(gen, [0.5], [-1.0])


class TestKLDiscrete:
    def test_equal(self):
        assert kl_discrete([0.5, 0.5], [0.5, 0.5]) == 0.0

    def test_two_outcomes(self):
        assert kl_discrete([0.5, 0.5], [0.75, 0.25]) == pytest.approx(0.143841, abs=5e-7)
        assert kl_discrete([0.75, 0.25], [0.5, 0.5]) == pytest.approx(0.130812, abs=5e-7)

    def test_zero_mass_convention(self):
        assert kl_discrete([1.0, 0.0], [0.5, 0.5]) == pytest.approx(math.log(2.0))

    def test_support_violation_is_infinite(self):
        assert kl_discrete([0.5, 0.5], [1.0, 0.0]) == math.inf

    @pytest.mark.parametrize(
        "p, q, pointer",
        [([0.5, 0.6], [0.5, 0.5], "/p"), ([0.5, 0.5], [0.2, 0.2], "/q"), ([-0.5, 1.5], [0.5, 0.5], "/p")],
    )
    def test_validation(self, p, q, pointer):
        with pytest.raises(ValidationError) as info:
            kl_discrete(p, q)
        assert info.value.errors[0][0] == pointer

    def test_length_mismatch(self):
        with pytest.raises(ValidationError):
            kl_discrete([0.5, 0.5], [0.2, 0.3, 0.5])


@pytest.mark.parametrize("kind", FAMILY_KINDS)
@settings(max_examples=50, deadline=None)
@given(pq=arrays(np.float64, (2, 2), elements=st.floats(-4, 4)))
def test_nonnegative(kind, pq):
    gen = log_partition(family(kind))
    assert bregman(gen, pq[0], pq[1]) >= 0.0
    assert bregman(gen, pq[0], pq[0]) == 0.0


@pytest.mark.parametrize("kind", FAMILY_KINDS)
@settings(max_examples=30, deadline=None)
@given(pq=arrays(np.float64, (2, 2), elements=st.floats(-4, 4)))
def test_mixed_agrees(kind, pq):
    gen = log_partition(family(kind))
    p, q = pq
    assert abs(bregman(gen, p, q) - mixed_bregman(gen, p, to_dual(gen, q))) <= 1e-9 * max(1.0, bregman(gen, p, q))


@pytest.mark.parametrize("kind", FAMILY_KINDS)
@settings(max_examples=15, deadline=None)
@given(pq=arrays(np.float64, (2, 2), elements=st.floats(-3, 3)))
def test_dual_is_conjugate_bregman(kind, pq):
    gen = log_partition(family(kind))
    p, q = pq
    assert conjugate_bregman(gen, p, q, analytic=False) == pytest.approx(dual_bregman(gen, p, q), abs=1e-6)
    assert conjugate_bregman(gen, p, q) == pytest.approx(dual_bregman(gen, p, q), abs=1e-9)
