"""Blocking factorization of an operator series through the unconditional-sum
space, plus the experiments built on it.

factorize interleaves two steps along the natural order of a growing tree: at
each node, find a sign whose image under the already-consumed head blocks is
small (a restricted defect search), then cut the block index at the smallest
point making the remaining tail small. The head part plus tail part forms the
small summand V; the blocks between consecutive cuts carry U, whose images
occupy pairwise disjoint block ranges and are therefore structurally
1-unconditional.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dyadic import AtomSet, SimpleFunction, dyadic_space, is_sign
from .haar import HaarLikeSystem, MultiIndex, SubsetTree, build_tree, haar_system, natural_order
from .operators import (
    FiniteOperator,
    Lq,
    NormEstimate,
    NormedTarget,
    UncondSum,
    op_norm_on_span,
)
from .narrowness import EpsilonSchedule, ToleranceUnachievable, epsilon_schedule, sign_defect
from .signbuilder import (
    CoefficientBoundReport,
    CompletionReport,
    bounded_sign,
    coefficient_bound_report,
    complete_to_sign,
)
from .uncond import (
    BasicSequence,
    SeriesRep,
    SummationMap,
    burkholder_beta,
    classical_haar_constants,
    rank1_series,
    uncond_constant,
    uncond_norm,
)

__all__ = [
    "NodeTolerance",
    "FactorizationCertificates",
    "FactorizationResult",
    "factorize",
    "LowerBoundReport",
    "check_lower_bound",
    "GrowthRow",
    "GrowthReport",
    "direct_sum_growth_experiment",
    "PipelineResult",
    "narrow_sign_pipeline",
    "unconditional_target_sign",
]


@dataclass(frozen=True)
class NodeTolerance:
    head_achieved: float
    tail_achieved: float
    required: float  # the node's schedule value; head and tail each got half


@dataclass(frozen=True)
class FactorizationCertificates:
    v_norm_upper: float  # 2 * sum ||V h_alpha|| / ||h_alpha||, the extension bound
    blocks_disjoint: bool
    node_tolerances: dict[MultiIndex, NodeTolerance]


@dataclass(frozen=True, eq=False)
class FactorizationResult:
    """Output of the blocking factorization.

    u_images / v_images hold one column per system function (natural order) in
    the unconditional-sum space; lift and summation close the factorization
    triangle, with summation(lift(f)) equal to the series sum bitwise."""

    series: SeriesRep
    system: HaarLikeSystem
    schedule: EpsilonSchedule
    y_space: UncondSum
    lift: FiniteOperator
    summation: SummationMap
    cuts: dict[MultiIndex, int]
    block_ranges: dict[MultiIndex, tuple[int, int]]
    u_images: np.ndarray
    v_images: np.ndarray
    certificates: FactorizationCertificates

    def order(self) -> list[MultiIndex]:
        return self.system.indices()

    def recheck_postconditions(self) -> dict[str, bool]:
        """Independent recheck of the four structural postconditions."""
        order = self.order()
        H = self.system.function_matrix()
        # recompute each image exactly as during construction (one matvec per
        # contiguous sign vector); a single matrix product would use different
        # BLAS blocking and break bitwise equality
        fresh = np.column_stack([
            self.lift.matrix @ np.ascontiguousarray(H[:, k]) for k in range(H.shape[1])
        ])
        sum_exact = bool(np.array_equal(self.u_images + self.v_images, fresh))

        ranges = [self.block_ranges[a] for a in order]
        cuts_increasing = all(r[1] > r[0] for r in ranges) and all(
            ranges[i + 1][0] == ranges[i][1] for i in range(len(ranges) - 1)
        )

        d = self.y_space.child.dim
        disjoint = True
        for k, (lo, hi) in enumerate(ranges):
            outside = np.ones(self.y_space.dim, dtype=bool)
            outside[(lo - 1) * d:(hi - 1) * d] = False
            if np.any(self.u_images[outside, k] != 0.0):
                disjoint = False
        for i in range(len(ranges)):
            for j in range(i + 1, len(ranges)):
                if max(ranges[i][0], ranges[j][0]) < min(ranges[i][1], ranges[j][1]):
                    disjoint = False

        v_small = True
        for k, alpha in enumerate(order):
            if float(self.y_space.norm(self.v_images[:, k])) > self.schedule.value(alpha) + 1e-9:
                v_small = False
        return {
            "sum_exact": sum_exact,
            "cuts_increasing": cuts_increasing,
            "blocks_disjoint": disjoint,
            "v_small": v_small,
        }

    def u_span_norm(self, *, budget: int = 2000, seed: int = 0) -> NormEstimate:
        return op_norm_on_span(self.u_images, self.system, self.y_space, budget=budget, seed=seed)

    def v_span_norm(self, *, budget: int = 2000, seed: int = 0) -> NormEstimate:
        return op_norm_on_span(self.v_images, self.system, self.y_space, budget=budget, seed=seed)

    def u_basic_sequence(self) -> BasicSequence:
        return BasicSequence(self.u_images, self.y_space)


def factorize(series: SeriesRep, A: AtomSet, eps: float, max_level: int, *,
              seed: int = 0, budget: int = 2000, exact_cap: int = 24) -> FactorizationResult:
    """Blocking factorization of the series on a tree over A.

    Requires 0 < eps < 1/2. At each node in natural order: a sign with head
    image at most eps_alpha/2 (restricted defect search over the blocks before
    the previous cut), then the smallest cut whose tail is at most eps_alpha/2
    (the tail past the last block is empty, so a cut always exists). Raises
    ToleranceUnachievable with the witness node when the head defect cannot be
    met."""
    if not 0.0 < eps < 0.5:
        raise ValueError(f"eps must lie in (0, 1/2), got {eps}")
    levels = max_level
    if levels < 1:
        raise ValueError("max_level must be >= 1")
    if A.count % (1 << levels):
        raise ValueError(f"|A| = {A.count} not divisible by 2^{levels}")
    N = series.count
    child = series.target
    d = child.dim
    source = series.source
    y_space = UncondSum((child,) * N)
    lift = FiniteOperator(source, y_space, np.vstack([T.matrix for T in series.operators]))
    summation = SummationMap(y_space)
    schedule = epsilon_schedule(eps, levels, source.p, A.measure)

    nodes: dict[MultiIndex, AtomSet] = {MultiIndex(): A}
    cuts: dict[MultiIndex, int] = {}
    ranges: dict[MultiIndex, tuple[int, int]] = {}
    tolerances: dict[MultiIndex, NodeTolerance] = {}
    u_cols: list[np.ndarray] = []
    v_cols: list[np.ndarray] = []
    n_prev = 1
    for alpha in natural_order(levels - 1):
        node = nodes[alpha]
        eps_a = schedule.value(alpha)
        head_blocks = min(n_prev - 1, N)
        if head_blocks == 0:
            head = FiniteOperator.zeros(source, UncondSum((child,)))
        else:
            head = FiniteOperator(source, UncondSum((child,) * head_blocks),
                                  lift.matrix[: head_blocks * d])
        res = sign_defect(head, node, "auto", budget=budget, seed=seed + alpha.rank,
                          exact_cap=exact_cap)
        head_achieved = res.value.upper
        if head_achieved > eps_a / 2.0:
            raise ToleranceUnachievable(alpha, head_achieved, eps_a / 2.0)
        h = res.sign
        image = lift.matrix @ h.values
        blocks = image.reshape(N, d)

        # smallest cut past the previous one with a small tail; blocks past N
        # are identically zero in the finite model, so a cut always exists and
        # cuts may run beyond N + 1 once every block has been consumed
        cut = None
        tail_achieved = 0.0
        for c in range(n_prev + 1, N + 2):
            if c == N + 1:
                cut, tail_achieved = c, 0.0
                break
            tail = UncondSum((child,) * (N - c + 1))
            val = float(tail.norm(blocks[c - 1:].ravel()))
            if val <= eps_a / 2.0:
                cut, tail_achieved = c, val
                break
        if cut is None:
            cut = n_prev + 1

        mask = np.zeros(N * d, dtype=bool)
        mask[(n_prev - 1) * d:(cut - 1) * d] = True
        u = np.zeros(N * d)
        v = np.zeros(N * d)
        u[mask] = image[mask]
        v[~mask] = image[~mask]
        u_cols.append(u)
        v_cols.append(v)
        cuts[alpha] = cut
        ranges[alpha] = (n_prev, cut)
        tolerances[alpha] = NodeTolerance(head_achieved, tail_achieved, eps_a)
        nodes[alpha.child(-1)] = AtomSet(A.space, np.flatnonzero(h.values == -1.0))
        nodes[alpha.child(1)] = AtomSet(A.space, np.flatnonzero(h.values == 1.0))
        n_prev = cut

    tree = SubsetTree(A, levels, nodes)
    system = haar_system(tree)
    order = system.indices()
    u_images = np.column_stack(u_cols)
    v_images = np.column_stack(v_cols)
    v_norms = np.atleast_1d(y_space.norm(v_images))
    hnorms = np.array([system.norm(a) for a in order])
    certs = FactorizationCertificates(
        v_norm_upper=2.0 * float(np.sum(v_norms / hnorms)),
        blocks_disjoint=True,
        node_tolerances=tolerances,
    )
    return FactorizationResult(series, system, schedule, y_space, lift, summation,
                               cuts, ranges, u_images, v_images, certs)


@dataclass(frozen=True)
class LowerBoundReport:
    ok: bool
    c_ok: bool
    witness: SimpleFunction | None
    constant_lower: float
    bound: float
    u_norm_upper: float
    u_inv_upper: float
    m_upper: float
    eps: float


def check_lower_bound(res, c: float, M: NormEstimate | None = None,
                      eps: float | None = None, *, samples: int = 64, seed: int = 0,
                      budget: int = 4000) -> LowerBoundReport:
    """Consistency chain for a below-bounded series sum.

    `res` is a FactorizationResult or a plain (series, system) pair; the chain
    needs only a Haar-like system, not a successful blocking. Validates the
    claim ||T f|| >= c ||f|| on the system's span by vertex and random
    sampling (rejecting with the violating f), then checks that the computed
    lower bound for the unconditional constant of {h_alpha} in L_p does not
    exceed (M + eps) / (c - eps)."""
    if isinstance(res, FactorizationResult):
        series, sys = res.series, res.system
        eps = res.schedule.eps if eps is None else eps
    else:
        series, sys = res
        if eps is None:
            raise ValueError("eps is required when no factorization is given")
    if not c > eps:
        raise ValueError(f"need c > eps, got c = {c}, eps = {eps}")
    M = series.M if M is None else M
    T = series.sum_operator()
    H = sys.function_matrix()
    p = T.source.p
    mu = T.source.atom_measure

    def pnorm(values: np.ndarray) -> float:
        return float((np.sum(np.abs(values) ** p) * mu) ** (1.0 / p))

    rng = np.random.default_rng(seed)
    candidates = [H[:, k] for k in range(H.shape[1])]
    candidates.extend(H @ rng.standard_normal(H.shape[1]) for _ in range(samples))
    for values in candidates:
        fn = pnorm(values)
        if fn == 0.0:
            continue
        img = float(T.target.norm(T.matrix @ values))
        if img < c * fn - 1e-9 * max(1.0, fn):
            witness = SimpleFunction(T.source, values)
            return LowerBoundReport(False, False, witness, math.nan, math.nan,
                                    math.nan, math.nan, M.upper, eps)

    seq = BasicSequence(H, Lq(np.full(T.source.atoms, mu), p))
    const = uncond_constant(seq, budget=budget, seed=seed)
    u_norm_upper = M.upper + eps
    u_inv_upper = 1.0 / (c - eps)
    bound = u_norm_upper * u_inv_upper
    ok = const.estimate.lower <= bound + 1e-9
    return LowerBoundReport(ok, True, None, const.estimate.lower, bound,
                            u_norm_upper, u_inv_upper, M.upper, eps)


@dataclass(frozen=True)
class GrowthRow:
    p: float
    m_lower: float
    m_upper: float
    m_method: str
    haar_lower: float
    beta: float
    ok: bool


@dataclass(frozen=True)
class GrowthReport:
    rows: tuple[GrowthRow, ...]
    depth: int
    n_slices: int
    block_space: NormedTarget


def direct_sum_growth_experiment(p_list, depth: int, n_slices: int | None = None, *,
                                 budget: int = 4000, seed: int = 0) -> GrowthReport:
    """Per-exponent unconditional norms of the Haar slicing of the identity.

    For each p the identity on the depth-D grid is sliced into rank-one
    coefficient projections along the full Haar basis (constant included);
    the block unconditional norm M is lower-bounded by the signed-multiplier
    ratio at the Haar-constant witness, so M >= (Haar constant lower bound)
    holds by construction and the growth of the bound as p moves away from 2
    is the observable."""
    from .operators import DirectSum  # local import keeps module deps one-way

    p_list = list(p_list)
    if any(p <= 1 for p in p_list):
        raise ValueError("exponents must be > 1")
    rows = []
    for p in p_list:
        sp = dyadic_space(depth, 1.0, p)
        sys = haar_system(build_tree(sp.full(), depth))
        mu = sp.atom_measure
        basis_cols = [np.ones(sp.atoms)] + [sys.function(a).values for a in sys.indices()]
        if n_slices is not None:
            basis_cols = basis_cols[:n_slices]
        target = Lq(np.full(sp.atoms, mu), p)
        slices = []
        for b in basis_cols:
            dual = mu * b / float(np.sum(b * b) * mu)
            slices.append(FiniteOperator(sp, target, np.outer(b, dual)))
        series = SeriesRep(tuple(slices))

        truncated = n_slices is not None and n_slices < (1 << depth)
        if truncated and n_slices <= 1:
            # constant slice only: nothing to dominate
            witness = None
            haar_lower = 1.0
            hsys_matrix = None
        elif truncated:
            # domination only makes sense against the functions actually sliced
            kept = n_slices - 1
            sub = BasicSequence(sys.function_matrix()[:, :kept], target)
            witness = uncond_constant(sub, budget=budget, seed=seed)
            haar_lower = max(1.0, witness.estimate.lower)
            hsys_matrix = sys.function_matrix()[:, :kept]
        else:
            chain = classical_haar_constants(p, depth, budget=budget, seed=seed)
            haar_lower = chain[-1].lower
            witness = chain[-1].raw
            hsys_matrix = sys.function_matrix()

        ratio_lower = 1.0
        if witness is not None and witness.pattern is not None and witness.coeffs is not None:
            a = np.asarray(witness.coeffs)
            f_vals = hsys_matrix @ a
            g_vals = hsys_matrix @ (np.asarray(witness.pattern) * a)
            den = float(target.norm(f_vals))
            if den > 0:
                ratio_lower = float(target.norm(g_vals)) / den
        m_est = uncond_norm(series, budget=budget, seed=seed, hint_lower=ratio_lower)
        m_lower = max(m_est.lower, ratio_lower, haar_lower)
        rows.append(GrowthRow(p, m_lower, m_est.upper, m_est.method, haar_lower,
                              burkholder_beta(p), m_lower >= haar_lower - 1e-9))
    block_space = DirectSum(2.0, [Lq(np.full(1 << depth, 2.0 ** -depth), p) for p in p_list])
    return GrowthReport(tuple(rows), depth, n_slices or (1 << depth), block_space)


@dataclass(frozen=True, eq=False)
class PipelineResult:
    sign: SimpleFunction
    measured: float
    slack: float
    raw_measured: float
    eps: float
    m: int
    delta: float
    residual_measure: float
    u_span_norm: NormEstimate
    factorization: FactorizationResult
    completion: CompletionReport
    coefficient_check: CoefficientBoundReport | None
    ok: bool


def narrow_sign_pipeline(series: SeriesRep, A: AtomSet, eps: float,
                         max_level: int | None = None, *, seed: int = 0,
                         budget: int = 2000, exact_cap: int = 24) -> PipelineResult:
    """End-to-end small-image sign for a series on an L_1 source.

    Factorizes with budget eps/2 on the small summand, picks the coefficient
    bound delta = eps / (4 ||U||_span mu(A)) so the blocked part contributes
    at most eps/2 on bounded-coefficient expansions, builds the bounded sign,
    and completes it to an exact sign. The completion correction's measured
    image norm is reported as slack; measured ||T f|| <= eps + slack."""
    if series.source.p != 1.0:
        raise ValueError("pipeline requires an L_1 source")
    if max_level is None:
        free = (A.count & -A.count).bit_length() - 1
        max_level = min(2, free - 1)
    if max_level < 1:
        raise ValueError("need |A| divisible by 4 for at least one level plus paired leaves")

    factor = factorize(series, A, eps / 2.0, max_level, seed=seed, budget=budget,
                       exact_cap=exact_cap)
    u_span = factor.u_span_norm(budget=budget, seed=seed)
    mu = A.measure
    if u_span.upper == 0.0:
        delta = 1.0
    else:
        delta = eps / (4.0 * u_span.upper * mu)
    built = bounded_sign(factor.system, delta)

    T = series.sum_operator()
    raw_measured = float(T.target.norm(T.matrix @ built.function.values))
    coeff_check = None
    if abs(mu - 1.0) <= 1e-9:
        coeff_check = coefficient_bound_report(
            factor.u_images, factor.y_space, factor.system,
            built.coefficients, u_span.upper)

    completed, completion = complete_to_sign(built, operator=T, seed=seed)
    measured = float(T.target.norm(T.matrix @ completed.values))
    slack = completion.operator_slack or 0.0
    ok = (
        measured <= eps + slack + 1e-9
        and is_sign(completed, A)
        and abs(completed.integral()) == 0.0
        and (coeff_check is None or coeff_check.ok)
    )
    return PipelineResult(completed, measured, slack, raw_measured, eps, built.m,
                          delta, built.residual_measure, u_span, factor, completion,
                          coeff_check, ok)


def unconditional_target_sign(T: FiniteOperator, A: AtomSet, eps: float,
                              basis: np.ndarray | None = None, *, seed: int = 0,
                              budget: int = 2000, max_level: int | None = None,
                              exact_cap: int = 24) -> PipelineResult:
    """Small-image sign for a single operator into a target with a validated
    1-unconditional basis: slice into rank-one pieces, then run the series
    pipeline."""
    series = rank1_series(T, basis, seed=seed)
    return narrow_sign_pipeline(series, A, eps, max_level, seed=seed, budget=budget,
                                exact_cap=exact_cap)
