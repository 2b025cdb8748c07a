import numpy as np
import pytest

from narrowops import (
    MultiIndex,
    build_tree,
    dyadic_space,
    expand,
    haar_norm_formula,
    haar_system,
    natural_order,
    reconstruct,
    telescope,
    tree_from_text,
    tree_to_text,
)
from conftest import random_tree


class TestMultiIndex:
    def test_validation(self):
        with pytest.raises(ValueError):
            MultiIndex((0,))

    def test_rank_enumeration(self):
        order = natural_order(3)
        assert [a.rank for a in order] == list(range(len(order)))
        for a in order:
            assert MultiIndex.from_rank(a.rank) == a

    def test_tokens(self):
        assert MultiIndex(()).token() == "."
        assert MultiIndex((1, -1)).token() == "+-"
        assert MultiIndex.from_token("+-") == MultiIndex((1, -1))


class TestNaturalOrder:
    def test_displayed_sequence(self):
        # level-by-level, -1 before 1 within each level
        got = [a.signs for a in natural_order(2)]
        assert got == [(), (-1,), (1,), (-1, -1), (-1, 1), (1, -1), (1, 1)]

    def test_level_zero(self):
        assert natural_order(0) == [MultiIndex(())]


class TestBuildTree:
    def test_interval_convention(self):
        sp = dyadic_space(2)
        tree = build_tree(sp.full(), 2)
        assert tree.nodes[MultiIndex((-1,))].indices.tolist() == [0, 1]
        assert tree.nodes[MultiIndex((1,))].indices.tolist() == [2, 3]

    def test_classical_tree_is_dyadic_intervals(self):
        sp = dyadic_space(3)
        tree = build_tree(sp.full(), 3)
        for alpha in natural_order(3):
            node = tree.nodes[alpha]
            size = sp.atoms >> alpha.level
            assert node.indices.tolist() == list(range(node.indices[0], node.indices[0] + size))

    def test_indivisible_rejected(self):
        sp = dyadic_space(2)
        with pytest.raises(ValueError):
            build_tree(sp.full(), 3)

    def test_explicit_split_validated(self):
        sp = dyadic_space(2)
        A = sp.full()
        bad = {
            MultiIndex((-1,)): [0, 1, 2],
            MultiIndex((1,)): [3],
        }
        with pytest.raises(ValueError):
            build_tree(A, 1, bad)


class TestHaarSystem:
    def test_root_function_and_norm(self):
        sp = dyadic_space(1, 1.0, 1.5)
        sys = haar_system(build_tree(sp.full(), 1))
        h = sys.function(MultiIndex())
        assert h.values.tolist() == [-1.0, 1.0]
        assert h.norm() == pytest.approx(1.0, abs=1e-15)

    def test_level_one_norm_at_p2(self):
        sp = dyadic_space(2, 1.0, 2.0)
        sys = haar_system(build_tree(sp.full(), 2))
        got = sys.function(MultiIndex((-1,))).norm()
        assert got == pytest.approx(2 ** -0.5, rel=1e-15)

    def test_norm_formula_random_trees(self, rng):
        for _ in range(10):
            p = float(rng.choice([1.0, 1.5, 2.0, 4.0]))
            depth = int(rng.integers(2, 6))
            sp = dyadic_space(depth, 1.0, p)
            sys = haar_system(random_tree(sp.full(), depth, rng))
            for alpha in sys.indices():
                expect = haar_norm_formula(p, 1.0, alpha.level)
                assert abs(sys.function(alpha).norm() - expect) <= 1e-12 * expect

    def test_supports_disjoint_within_level_nested_along_branches(self, rng):
        sp = dyadic_space(4)
        sys = haar_system(random_tree(sp.full(), 3, rng))
        idx = sys.indices()
        for a in idx:
            for b in idx:
                if a == b:
                    continue
                sa = set(sys.tree.nodes[a].indices.tolist())
                sb = set(sys.tree.nodes[b].indices.tolist())
                if a.level == b.level:
                    assert not (sa & sb)
                elif a.signs == b.signs[: a.level]:
                    assert sb <= sa


class TestExpandReconstruct:
    def test_basis_element(self, rng):
        sp = dyadic_space(3)
        sys = haar_system(random_tree(sp.full(), 3, rng))
        beta = MultiIndex((1, -1))
        coeffs = expand(sys.function(beta), sys)
        for alpha, a in coeffs.items():
            assert a == pytest.approx(1.0 if alpha == beta else 0.0, abs=1e-14)

    def test_zero(self):
        sp = dyadic_space(2)
        sys = haar_system(build_tree(sp.full(), 2))
        assert all(a == 0.0 for a in expand(sp.zero(), sys).values())

    def test_round_trip_random(self, rng):
        sp = dyadic_space(4)
        sys = haar_system(random_tree(sp.full(), 3, rng))
        for _ in range(10):
            coeffs = {a: float(rng.standard_normal()) for a in sys.indices()}
            f = reconstruct(coeffs, sys)
            back = expand(f, sys)
            for alpha in sys.indices():
                assert back[alpha] == pytest.approx(coeffs[alpha], abs=1e-12)

    def test_rejects_non_mean_zero(self):
        sp = dyadic_space(2)
        sys = haar_system(build_tree(sp.full(), 2))
        with pytest.raises(ValueError, match="mean-zero"):
            expand(sp.function([1, 1, 1, 1]), sys)

    def test_rejects_non_leaf_measurable(self, rng):
        sp = dyadic_space(3)
        sys = haar_system(build_tree(sp.full(), 2))
        v = rng.standard_normal(8)
        v -= v.mean()
        with pytest.raises(ValueError, match="constant"):
            expand(sp.function(v), sys)

    def test_monotone_partial_sums(self, rng):
        sp = dyadic_space(4, 1.0, 1.5)
        sys = haar_system(random_tree(sp.full(), 4, rng))
        order = sys.indices()
        for _ in range(10):
            coeffs = {a: float(rng.standard_normal()) for a in order}
            f = reconstruct(coeffs, sys)
            full = f.norm()
            for k in range(1, len(order)):
                partial = reconstruct({a: coeffs[a] for a in order[:k]}, sys)
                assert partial.norm() <= full * (1 + 1e-12)


class TestTelescope:
    def test_level_one(self):
        sp = dyadic_space(2)
        sys = haar_system(build_tree(sp.full(), 2))
        t = telescope(sys, MultiIndex((1,)))
        expect = 2.0 * sys.tree.nodes[MultiIndex((1,))].indicator().values - 1.0
        assert t.values.tolist() == expect.tolist()

    def test_level_two(self):
        sp = dyadic_space(2)
        sys = haar_system(build_tree(sp.full(), 2))
        t = telescope(sys, MultiIndex((1, 1)))
        expect = np.full(4, -1.0)
        expect[3] = 3.0
        assert t.values.tolist() == expect.tolist()

    def test_level_zero_is_zero(self):
        sp = dyadic_space(2)
        sys = haar_system(build_tree(sp.full(), 2))
        assert not np.any(telescope(sys, MultiIndex()).values)

    def test_every_branch_random_trees(self, rng):
        for _ in range(5):
            depth = int(rng.integers(2, 6))
            sp = dyadic_space(depth, 1.0, 1.0)
            sys = haar_system(random_tree(sp.full(), depth, rng))
            for leaf in natural_order(depth):
                if leaf.level != depth:
                    continue
                t = telescope(sys, leaf)  # exactness asserted inside
                assert t.norm(1) <= 2.0


class TestSerialization:
    def test_round_trip(self, rng):
        sp = dyadic_space(3, 1.0, 1.5)
        tree = random_tree(sp.full(), 2, rng)
        text = tree_to_text(tree)
        back = tree_from_text(text)
        assert back.max_level == tree.max_level
        for alpha in natural_order(2):
            assert np.array_equal(back.nodes[alpha].indices, tree.nodes[alpha].indices)
        assert tree_to_text(back) == text

    def test_rejects_garbage(self):
        with pytest.raises(ValueError):
            tree_from_text("not a tree\n")


def test_classical_haar_correspondence():
    # independently built dyadic-interval difference functions coincide with
    # the interval-split system (mean-zero part of the classical family)
    sp = dyadic_space(3)
    sys = haar_system(build_tree(sp.full(), 3))
    for alpha in sys.indices():
        level, offset = alpha.level, 0
        for s in alpha.signs:
            offset = 2 * offset + (1 if s > 0 else 0)
        size = sp.atoms >> level
        lo = offset * size
        expect = np.zeros(sp.atoms)
        expect[lo:lo + size // 2] = -1.0
        expect[lo + size // 2:lo + size] = 1.0
        assert np.array_equal(sys.function(alpha).values, expect)
