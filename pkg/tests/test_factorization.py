import numpy as np
import pytest

from narrowops import (
    EllQ,
    FiniteOperator,
    Lq,
    SeriesRep,
    ToleranceUnachievable,
    UncondSum,
    build_tree,
    check_lower_bound,
    direct_sum_growth_experiment,
    dyadic_space,
    factorize,
    haar_system,
    identity_like,
    is_sign,
    narrow_sign_pipeline,
    op_norm,
    rank1_series,
    unconditional_target_sign,
)


def aligned_series(seed, *, depth=5, count=6, dim=8, scale=0.003, q=1.0):
    rng = np.random.default_rng(seed)
    sp = dyadic_space(depth, 1.0, 1.0)
    ops = []
    for n in range(count):
        x = np.zeros(dim)
        x[n % dim] = rng.standard_normal()
        phi = rng.standard_normal(sp.atoms)
        ops.append(FiniteOperator(sp, EllQ(dim, q), scale * np.outer(x, phi)))
    return SeriesRep(tuple(ops)), sp


def haar_slicing(sp):
    sys = haar_system(build_tree(sp.full(), sp.depth))
    mu = sp.atom_measure
    target = Lq(np.full(sp.atoms, mu), sp.p)
    cols = [np.ones(sp.atoms)] + [sys.function(a).values for a in sys.indices()]
    ops = []
    for b in cols:
        dual = mu * b / float(np.sum(b * b) * mu)
        ops.append(FiniteOperator(sp, target, np.outer(b, dual)))
    return SeriesRep(tuple(ops)), sys


class TestFactorize:
    def test_all_zero_series(self):
        sp = dyadic_space(4, 1.0, 1.0)
        ops = tuple(FiniteOperator.zeros(sp, EllQ(3, 1.0)) for _ in range(3))
        res = factorize(SeriesRep(ops), sp.full(), 0.2, 2)
        assert not np.any(res.u_images)
        assert not np.any(res.v_images)
        assert all(res.recheck_postconditions().values())

    def test_small_series_postconditions(self):
        series, sp = aligned_series(4)
        res = factorize(series, sp.full(), 0.1, 2, seed=4)
        checks = res.recheck_postconditions()
        assert all(checks.values()), checks
        vspan = res.v_span_norm()
        assert vspan.upper <= 0.1
        assert res.certificates.v_norm_upper <= 0.1 + 1e-12

    def test_cut_indices_strictly_increase(self):
        series, sp = aligned_series(4)
        res = factorize(series, sp.full(), 0.1, 2, seed=4)
        ranges = [res.block_ranges[a] for a in res.order()]
        for (lo1, hi1), (lo2, hi2) in zip(ranges, ranges[1:]):
            assert hi1 == lo2 and hi1 > lo1 and hi2 > lo2

    def test_u_image_norm_is_its_own_block_norm(self):
        series, sp = aligned_series(4)
        res = factorize(series, sp.full(), 0.1, 2, seed=4)
        d = res.y_space.child.dim
        for k, alpha in enumerate(res.order()):
            lo, hi = res.block_ranges[alpha]
            hi_eff = min(hi, series.count + 1)
            full = float(res.y_space.norm(res.u_images[:, k]))
            if hi_eff <= lo:
                assert full == 0.0
                continue
            sub = res.u_images[(lo - 1) * d:(hi_eff - 1) * d, k]
            subspace = UncondSum((series.target,) * (hi_eff - lo))
            assert full == pytest.approx(float(subspace.norm(sub)), rel=1e-12, abs=1e-15)

    def test_composition_recovers_sum_on_span(self):
        series, sp = aligned_series(4)
        res = factorize(series, sp.full(), 0.1, 2, seed=4)
        T = series.sum_matrix()
        for k, alpha in enumerate(res.order()):
            h = res.system.function(alpha).values
            via_factorization = res.summation.apply(res.u_images[:, k] + res.v_images[:, k])
            assert np.allclose(via_factorization, T @ h, rtol=1e-12, atol=1e-14)

    def test_embedding_series_fails_with_witness(self):
        sp = dyadic_space(4, 1.0, 1.0)
        series = rank1_series(identity_like(sp))
        with pytest.raises(ToleranceUnachievable) as info:
            factorize(series, sp.full(), 0.2, 2)
        assert info.value.node.level == 1
        assert info.value.achieved > info.value.required

    def test_eps_domain_enforced(self):
        series, sp = aligned_series(0)
        with pytest.raises(ValueError):
            factorize(series, sp.full(), 0.7, 2)


class TestCheckLowerBound:
    def test_identity_haar_slicing_chain_holds(self):
        sp = dyadic_space(4, 1.0, 1.5)
        series, sys = haar_slicing(sp)
        report = check_lower_bound((series, sys), 1.0, eps=0.25, seed=0, budget=1500)
        assert report.c_ok and report.ok
        assert report.constant_lower <= report.bound + 1e-9

    def test_overclaimed_c_rejected_with_witness(self):
        sp = dyadic_space(3, 1.0, 1.5)
        series, sys = haar_slicing(sp)
        # scale down: now ||T f|| = 0.5 ||f|| < 2 ||f||
        small = SeriesRep(tuple(0.5 * T for T in series.operators))
        report = check_lower_bound((small, sys), 2.0, eps=0.25, seed=0, budget=500)
        assert not report.c_ok and not report.ok
        assert report.witness is not None
        T = small.sum_operator()
        f = report.witness
        assert float(T.target.norm(T.apply(f))) < 2.0 * f.norm()

    def test_p2_chain_trivial(self):
        sp = dyadic_space(3, 1.0, 2.0)
        series, sys = haar_slicing(sp)
        report = check_lower_bound((series, sys), 1.0, eps=0.25, seed=0, budget=500)
        assert report.ok
        assert report.constant_lower == 1.0


class TestGrowthExperiment:
    def test_p2_block_is_exactly_one(self):
        report = direct_sum_growth_experiment([2.0], 3, budget=500, seed=0)
        row = report.rows[0]
        assert row.m_lower == pytest.approx(1.0, abs=1e-12)
        assert row.haar_lower == 1.0
        assert row.beta == 1.0
        assert row.ok

    def test_single_slice_is_identity_norm(self):
        report = direct_sum_growth_experiment([2.0], 2, n_slices=1, budget=200, seed=0)
        assert report.rows[0].m_lower == pytest.approx(1.0, abs=1e-9)

    def test_rows_dominate_haar_constant(self):
        report = direct_sum_growth_experiment([4.0, 2.0], 3, budget=1200, seed=1)
        for row in report.rows:
            assert row.m_lower >= row.haar_lower - 1e-9
            assert row.ok

    def test_rejects_p_one(self):
        with pytest.raises(ValueError):
            direct_sum_growth_experiment([1.0], 3)


class TestPipeline:
    def test_rank_one_series_shortcut(self):
        sp = dyadic_space(4, 1.0, 1.0)
        rng = np.random.default_rng(0)
        T = FiniteOperator(sp, EllQ(3, 2.0),
                           np.outer(rng.standard_normal(3), np.full(16, sp.atom_measure)))
        series = rank1_series(T)
        res = narrow_sign_pipeline(series, sp.full(), 0.2, seed=0)
        assert res.ok
        assert is_sign(res.sign, sp.full())
        assert res.measured <= 0.2 + res.slack + 1e-9

    def test_random_small_series_end_to_end(self):
        series, sp = aligned_series(4)
        res = narrow_sign_pipeline(series, sp.full(), 0.2, seed=4)
        assert res.ok
        assert res.raw_measured <= 0.2 + 1e-9
        assert res.coefficient_check is None or res.coefficient_check.ok

    def test_requires_l1_source(self):
        sp = dyadic_space(4, 1.0, 2.0)
        T = FiniteOperator.zeros(sp, EllQ(2, 2.0))
        with pytest.raises(ValueError, match="L_1"):
            narrow_sign_pipeline(rank1_series(T), sp.full(), 0.2)

    def test_embedding_fails_upstream(self):
        sp = dyadic_space(4, 1.0, 1.0)
        with pytest.raises(ToleranceUnachievable):
            narrow_sign_pipeline(rank1_series(identity_like(sp)), sp.full(), 0.2)


class TestUnconditionalTargetSign:
    def test_ell2_target(self):
        rng = np.random.default_rng(5)
        sp = dyadic_space(8, 1.0, 1.0)
        M = rng.standard_normal((4, 256))
        T = FiniteOperator(sp, EllQ(4, 2.0), M)
        T = T * (0.9 / op_norm(T).upper)
        res = unconditional_target_sign(T, sp.full(), 0.2, seed=5)
        assert res.ok
        assert is_sign(res.sign, sp.full())
        assert res.measured <= 0.2 + res.slack + 1e-9

    def test_zero_operator_any_sign(self):
        sp = dyadic_space(4, 1.0, 1.0)
        T = FiniteOperator.zeros(sp, EllQ(3, 1.0))
        res = unconditional_target_sign(T, sp.full(), 0.1, seed=0)
        assert res.ok and res.measured == 0.0

    def test_uncond_sum_target_blocks(self):
        rng = np.random.default_rng(2)
        sp = dyadic_space(5, 1.0, 1.0)
        t = UncondSum([EllQ(1, 1.0)] * 3)
        T = FiniteOperator(sp, t, 0.002 * rng.standard_normal((3, 32)))
        res = unconditional_target_sign(T, sp.full(), 0.2, seed=2)
        assert res.ok


def test_coefficient_bound_holds_on_random_trials():
    # the sup-coefficient image bound with beta = 1 (disjoint blocks) must
    # hold for arbitrary coefficients, not just the construction's
    series, sp = aligned_series(4)
    res = factorize(series, sp.full(), 0.1, 2, seed=4)
    u_norm = res.u_span_norm().upper
    rng = np.random.default_rng(41)
    K = res.u_images.shape[1]
    A = rng.uniform(-1.0, 1.0, size=(K, 10_000))
    images = res.u_images @ A
    vals = np.atleast_1d(res.y_space.norm(images))
    sups = np.abs(A).max(axis=0)
    assert np.all(vals <= 2.0 * u_norm * sups + 1e-12)


def test_growth_table_ordering_toward_two():
    report = direct_sum_growth_experiment([4.0, 3.0, 2.0], 4, budget=2000, seed=0)
    lows = [r.m_lower for r in report.rows]
    assert lows[0] >= lows[1] >= lows[2] >= 1.0 - 1e-12
    assert all(r.ok for r in report.rows)
