import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from narrowops import (
    DirectSum,
    EllQ,
    FiniteOperator,
    Lq,
    NormEstimate,
    Partition,
    UncondSum,
    block_projection,
    counterexample_operator,
    dyadic_space,
    embed,
    identity_like,
    op_norm,
    rademacher,
    rank_one_integration,
    restrict,
    s_coordinate_partition,
)
from narrowops.operators import norm_subgradient, target_from_descriptor


def uncond_norm_oracle(target: UncondSum, y):
    """Independent sign enumeration for the unconditional-sum norm."""
    N, d = target.blocks, target.child.dim
    blocks = np.asarray(y).reshape(N, d)
    best = -np.inf
    for k in range(1 << (N - 1)):
        eps = np.ones(N)
        for j in range(N - 1):
            if (k >> j) & 1:
                eps[j + 1] = -1.0
        best = max(best, float(target.child.norm(eps @ blocks)))
    return best


class TestNormEstimate:
    def test_exact_is_point(self):
        with pytest.raises(ValueError):
            NormEstimate(1.0, 2.0, "exact")

    def test_interval_order(self):
        with pytest.raises(ValueError):
            NormEstimate(2.0, 1.0, "search")

    def test_unknown_tag(self):
        with pytest.raises(ValueError):
            NormEstimate(0.0, 1.0, "guess")


class TestTargets:
    def test_lq_flat_and_euclidean(self):
        t = Lq([0.25, 0.25], 2.0)
        assert t.norm([2.0, 0.0]) == 1.0
        assert t.euclidean_scale() is not None

    def test_direct_sum_norm(self):
        t = DirectSum(2.0, [EllQ(1, 1.0), EllQ(1, 1.0)])
        assert t.norm([3.0, 4.0]) == 5.0

    def test_uncond_sum_requires_identical_children(self):
        with pytest.raises(ValueError):
            UncondSum([EllQ(1, 1.0), EllQ(2, 1.0)])

    def test_uncond_norm_against_oracle(self, rng):
        for _ in range(10):
            N = int(rng.integers(1, 6))
            d = int(rng.integers(1, 4))
            q = float(rng.choice([1.0, 2.0, 3.0]))
            t = UncondSum([EllQ(d, q)] * N)
            y = rng.standard_normal(N * d)
            assert float(t.norm(y)) == pytest.approx(uncond_norm_oracle(t, y), rel=1e-12)

    def test_uncond_batch_matches_single(self, rng):
        t = UncondSum([EllQ(3, 1.0)] * 4)
        Y = rng.standard_normal((12, 7))
        batch = t.norm(Y)
        for j in range(7):
            assert batch[j] == pytest.approx(float(t.norm(Y[:, j])), rel=1e-13)

    def test_plain_sum_below_uncond_norm(self, rng):
        t = UncondSum([EllQ(2, 1.5)] * 3)
        for _ in range(10):
            y = rng.standard_normal(6)
            plain = float(t.child.norm(y.reshape(3, 2).sum(axis=0)))
            assert plain <= float(t.norm(y)) + 1e-12

    def test_descriptor_round_trip(self):
        t = UncondSum([DirectSum(2.0, [Lq([0.5, 0.5], 2.0), EllQ(2, 1.0)])] * 2)
        back = target_from_descriptor(t.descriptor())
        assert back.descriptor() == t.descriptor()

    def test_norm_interval_exact_and_degraded(self, rng):
        small = UncondSum([EllQ(2, 1.0)] * 3)
        y = rng.standard_normal(6)
        est = small.norm_interval(y)
        assert est.method == "exact" and est.lower == float(small.norm(y))

        import narrowops.operators as ops

        big = UncondSum([EllQ(1, 1.0)] * (ops.UNCOND_ENUM_CAP + 2))
        z = rng.standard_normal(big.dim)
        assert not big.norm_exact
        deg = big.norm_interval(z)
        assert deg.method == "search"
        # greedy lower within the triangle upper, and above the plain sum
        assert deg.lower <= deg.upper
        assert deg.lower >= abs(float(z.sum())) - 1e-12
        assert deg.upper == pytest.approx(float(np.sum(np.abs(z))), rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(data=st.lists(st.floats(-50, 50), min_size=6, max_size=6),
       other=st.lists(st.floats(-50, 50), min_size=6, max_size=6),
       c=st.floats(-5, 5))
def test_uncond_norm_is_a_norm(data, other, c):
    t = UncondSum([EllQ(2, 1.0)] * 3)
    y, z = np.array(data), np.array(other)
    scale = max(1.0, float(t.norm(y)), float(t.norm(z)))
    assert float(t.norm(c * y)) == pytest.approx(abs(c) * float(t.norm(y)), rel=1e-12, abs=1e-12)
    assert float(t.norm(y + z)) <= float(t.norm(y)) + float(t.norm(z)) + 1e-12 * scale


class TestFiniteOperator:
    def test_columns_are_indicator_images(self, rng):
        sp = dyadic_space(3)
        M = rng.standard_normal((4, 8))
        T = FiniteOperator(sp, EllQ(4, 2.0), M)
        for i in range(8):
            chi = sp.indicator([i])
            assert np.array_equal(T.apply(chi), M[:, i])

    def test_additivity(self, rng):
        sp = dyadic_space(3)
        T = FiniteOperator(sp, EllQ(4, 1.0), rng.standard_normal((4, 8)))
        f, g = sp.function(rng.standard_normal(8)), sp.function(rng.standard_normal(8))
        assert np.allclose(T.apply(f + g), T.apply(f) + T.apply(g), rtol=1e-13, atol=1e-13)

    def test_zero_operator(self):
        sp = dyadic_space(2)
        T = FiniteOperator.zeros(sp, EllQ(3, 1.0))
        assert T.image_norm(sp.function([1, 2, 3, 4])) == 0.0

    def test_space_mismatch(self):
        T = FiniteOperator.zeros(dyadic_space(2), EllQ(1, 1.0))
        with pytest.raises(ValueError):
            T.apply(dyadic_space(3).zero())

    def test_serialization_round_trip(self, rng):
        sp = dyadic_space(2, 1.0, 1.5)
        T = FiniteOperator(sp, UncondSum([EllQ(2, 1.0)] * 2), rng.standard_normal((4, 4)))
        back = FiniteOperator.from_text(T.to_text())
        assert np.array_equal(back.matrix, T.matrix)
        assert back.target.descriptor() == T.target.descriptor()
        assert back.source.p == 1.5


class TestOpNorm:
    def test_identity_like_is_one(self):
        T = identity_like(dyadic_space(3))
        est = op_norm(T)
        assert est.method == "exact" and est.lower == 1.0

    def test_rank_one_integration_exact(self, rng):
        sp = dyadic_space(3, 1.0, 1.0)
        x = rng.standard_normal(4)
        T = rank_one_integration(sp, x, EllQ(4, 2.0))
        est = op_norm(T)
        assert est.method == "exact"
        assert est.lower == pytest.approx(float(np.linalg.norm(x)), rel=1e-12)

    def test_zero(self):
        T = FiniteOperator.zeros(dyadic_space(2), EllQ(2, 1.0))
        assert op_norm(T).upper == 0.0

    def test_l1_exact_vs_vertex_bruteforce(self, rng):
        # extreme points of the L1 ball are the normalized atom indicators
        sp = dyadic_space(3, 1.0, 1.0)
        for _ in range(10):
            T = FiniteOperator(sp, UncondSum([EllQ(2, 1.0)] * 2), rng.standard_normal((4, 8)))
            est = op_norm(T)
            brute = max(
                float(T.target.norm(s * T.matrix[:, i])) / sp.atom_measure
                for i in range(8) for s in (1.0, -1.0)
            )
            assert est.method == "exact"
            assert est.lower == pytest.approx(brute, rel=1e-13)

    def test_l2_exact_vs_random_search(self, rng):
        sp = dyadic_space(3, 1.0, 2.0)
        T = FiniteOperator(sp, EllQ(5, 2.0), rng.standard_normal((5, 8)))
        est = op_norm(T)
        assert est.method == "exact"
        for _ in range(200):
            v = rng.standard_normal(8)
            f = sp.function(v)
            assert float(T.target.norm(T.apply(f))) <= est.upper * f.norm() * (1 + 1e-9)

    def test_interval_mode_brackets_truth(self, rng):
        sp = dyadic_space(3, 1.0, 1.5)
        T = FiniteOperator(sp, EllQ(4, 3.0), rng.standard_normal((4, 8)))
        est = op_norm(T, seed=3)
        assert est.method == "search"
        assert 0 < est.lower <= est.upper < np.inf
        for _ in range(100):
            f = sp.function(rng.standard_normal(8))
            assert float(T.target.norm(T.apply(f))) <= est.upper * f.norm() * (1 + 1e-9)

    def test_mean_zero_l1_exact_vs_bruteforce(self, rng):
        sp = dyadic_space(3, 1.0, 1.0)
        T = FiniteOperator(sp, EllQ(3, 2.0), rng.standard_normal((3, 8)))
        est = op_norm(T, "mean_zero")
        assert est.method == "exact"
        mu = sp.atom_measure
        brute = max(
            float(T.target.norm(T.matrix[:, i] - T.matrix[:, j])) / (2 * mu)
            for i in range(8) for j in range(8) if i != j
        )
        assert est.lower == pytest.approx(brute, rel=1e-13)
        # searched mean-zero vectors never beat the exact value
        for _ in range(100):
            v = rng.standard_normal(8)
            v -= v.mean()
            f = sp.function(v)
            assert float(T.target.norm(T.apply(f))) <= est.lower * f.norm(1) * (1 + 1e-9)


class TestRestrict:
    def test_singletons_unchanged(self, rng):
        sp = dyadic_space(2)
        T = FiniteOperator(sp, EllQ(3, 1.0), rng.standard_normal((3, 4)))
        R = restrict(T, Partition.singletons(sp.full()))
        assert np.array_equal(R.matrix, T.matrix)

    def test_single_block_rank_one(self, rng):
        sp = dyadic_space(2)
        T = FiniteOperator(sp, EllQ(3, 1.0), rng.standard_normal((3, 4)))
        R = restrict(T, Partition.single_block(sp.full()))
        assert np.allclose(R.matrix[:, 0], T.matrix.sum(axis=1))

    def test_commutes_with_embedding(self, rng):
        sp = dyadic_space(3)
        T = FiniteOperator(sp, EllQ(3, 2.0), rng.standard_normal((3, 8)))
        perm = rng.permutation(8)
        groups = [np.sort(perm[:4]), np.sort(perm[4:])]
        P = Partition.from_index_groups(sp.full(), groups)
        R = restrict(T, P)
        g = np.array([0.7, -1.3])
        assert np.allclose(R.apply_values(g), T.apply(embed(P, g)), rtol=1e-13, atol=1e-14)

    def test_composes_over_nested_partitions(self, rng):
        sp = dyadic_space(3)
        T = FiniteOperator(sp, EllQ(2, 1.0), rng.standard_normal((2, 8)))
        fine = Partition.consecutive(sp.full(), 4)
        R1 = restrict(T, fine)
        coarse = Partition.consecutive(R1.source.full(), 2)
        R2 = restrict(R1, coarse)
        direct = restrict(T, Partition.consecutive(sp.full(), 2))
        assert np.allclose(R2.matrix, direct.matrix)


class TestBlockProjection:
    def test_full_range_is_identity(self, rng):
        t = UncondSum([EllQ(2, 1.0)] * 3)
        P = block_projection(1, None, t)
        y = rng.standard_normal(6)
        assert np.array_equal(P.apply(y), y)

    def test_idempotent(self, rng):
        t = UncondSum([EllQ(2, 1.0)] * 4)
        P = block_projection(2, 4, t)
        y = rng.standard_normal(8)
        assert np.array_equal(P.apply(P.apply(y)), P.apply(y))

    def test_nonexpanding_by_pattern_oracle(self, rng):
        t = UncondSum([EllQ(2, 1.5)] * 4)
        for _ in range(20):
            y = rng.standard_normal(8)
            n = int(rng.integers(1, 4))
            m = int(rng.integers(n + 1, 6))
            P = block_projection(n, min(m, 5), t)
            assert uncond_norm_oracle(t, P.apply(y)) <= uncond_norm_oracle(t, y) + 1e-12

    def test_range_validation(self):
        t = UncondSum([EllQ(1, 1.0)] * 3)
        with pytest.raises(ValueError):
            block_projection(0, 2, t)
        with pytest.raises(ValueError):
            block_projection(2, 2, t)
        with pytest.raises(ValueError):
            block_projection(1, 6, t)


class TestCounterexampleOperator:
    def test_t_independent_functions_pass_through(self):
        T = counterexample_operator(2, 2)
        sp = T.source
        vals = np.repeat([1.0, -2.0, 3.0, 0.5], 4)
        out = T.apply(sp.function(vals))
        assert np.allclose(out, [1.0, -2.0, 3.0, 0.5])

    def test_rademacher_in_t_killed(self):
        T = counterexample_operator(2, 2)
        sp = T.source
        r = np.tile([1.0, -1.0, 1.0, -1.0], 4)
        assert np.allclose(T.apply(sp.function(r)), 0.0)

    def test_l1_norm_is_one(self):
        est = op_norm(counterexample_operator(2, 3))
        assert est.method == "exact"
        assert est.lower == pytest.approx(1.0, rel=1e-14)

    def test_s_partition_restriction_is_identity(self):
        T = counterexample_operator(2, 2)
        P = s_coordinate_partition(T.source, 2)
        R = restrict(T, P)
        assert np.allclose(R.matrix, np.eye(4))


def test_norm_subgradient_supports_targets(rng):
    targets = [
        Lq(rng.uniform(0.5, 2.0, 4), 1.0),
        Lq(rng.uniform(0.5, 2.0, 4), 2.5),
        DirectSum(2.0, [EllQ(2, 2.0), EllQ(2, 1.0)]),
        UncondSum([EllQ(2, 1.5)] * 2),
    ]
    for t in targets:
        y = rng.standard_normal(t.dim)
        g = norm_subgradient(t, y)
        assert float(g @ y) == pytest.approx(float(t.norm(y)), rel=1e-9)
