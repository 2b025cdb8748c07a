"""Unconditional constants and unconditional norms of operator series.

The unconditional constant of a finite sequence of target vectors is the
supremum over sign patterns and coefficient vectors of the ratio
||sum eps_k a_k x_k|| / ||sum a_k x_k||; reported values are certified lower
bounds except in the Euclidean case, where per-pattern maximization is an
eigenproblem and full pattern enumeration makes the value exact. The
unconditional norm of a finite series is the supremum over sign patterns of
the operator norm of the signed sum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dyadic import Space, dyadic_space
from .haar import build_tree, haar_system
from .operators import (
    UNCOND_ENUM_CAP,
    FiniteOperator,
    Lq,
    NormedTarget,
    NormEstimate,
    UncondSum,
    _patterns,
    norm_subgradient,
    op_norm,
)

__all__ = [
    "burkholder_beta",
    "BasicSequence",
    "UncondConstantResult",
    "uncond_constant",
    "SeriesRep",
    "uncond_norm",
    "SummationMap",
    "YFactorization",
    "make_Y",
    "rank1_series",
    "ChainedConstant",
    "classical_haar_constants",
]


def burkholder_beta(p: float) -> float:
    """Unconditional constant of the Haar system in L_p: max(p-1, 1/(p-1)).

    Returns +inf at p = 1 (the constant degenerates there)."""
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    if p == 1:
        return math.inf
    return max(p - 1.0, 1.0 / (p - 1.0))


@dataclass(frozen=True, eq=False)
class BasicSequence:
    """Finite sequence of target vectors, stored as columns."""

    vectors: np.ndarray
    ambient: NormedTarget

    def __post_init__(self):
        X = np.ascontiguousarray(self.vectors, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] != self.ambient.dim:
            raise ValueError(f"vectors must be columns of dimension {self.ambient.dim}")
        norms = np.atleast_1d(self.ambient.norm(X))
        if np.any(norms == 0.0):
            raise ValueError("vectors must be nonzero")
        X.setflags(write=False)
        object.__setattr__(self, "vectors", X)

    @property
    def count(self) -> int:
        return self.vectors.shape[1]


@dataclass(frozen=True)
class UncondConstantResult:
    estimate: NormEstimate
    pattern: np.ndarray | None
    coeffs: np.ndarray | None
    evaluations: int


def _pad_hint(hint, count):
    if hint is None:
        return None
    eps, a = hint
    eps = np.asarray(eps, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    if eps.size > count or a.size != eps.size:
        return None
    pad = count - eps.size
    return np.concatenate([eps, np.ones(pad)]), np.concatenate([a, np.zeros(pad)])


def _euclid_pattern_value(G: np.ndarray, R: np.ndarray, eps: np.ndarray):
    """Max ratio for a fixed pattern in the Euclidean case: largest eigenvalue
    of the flipped Gram compressed to the span.

    A pattern whose flipped Gram equals G bitwise certifies ratio exactly 1."""
    Geps = G * np.outer(eps, eps)
    if np.array_equal(Geps, G):
        return 1.0, None
    M = R.T @ Geps @ R
    M = 0.5 * (M + M.T)
    vals, vecs = np.linalg.eigh(M)
    lam = float(max(vals[-1], 0.0))
    return math.sqrt(lam), R @ vecs[:, -1]


def _ratio(ambient, X, eps, a) -> float:
    den = float(ambient.norm(X @ a))
    if den == 0.0:
        return 0.0
    return float(ambient.norm(X @ (eps * a))) / den


def _ratio_ascent(ambient, X, eps, a0, iters=30):
    """Gradient ascent on the norm ratio for a fixed pattern; every iterate is
    evaluated honestly, so the best seen is a certified lower bound."""
    a = np.asarray(a0, dtype=np.float64).copy()
    na = np.linalg.norm(a)
    if na == 0.0:
        return 0.0, a, 1
    a /= na
    best_val, best_a = _ratio(ambient, X, eps, a), a.copy()
    evals = 1
    step = 0.5
    for _ in range(iters):
        u = X @ (eps * a)
        v = X @ a
        den = float(ambient.norm(v))
        if den == 0.0:
            break
        num = float(ambient.norm(u))
        gnum = eps * (X.T @ norm_subgradient(ambient, u))
        gden = X.T @ norm_subgradient(ambient, v)
        grad = gnum / den - (num / den**2) * gden
        gn = np.linalg.norm(grad)
        if gn < 1e-14:
            break
        improved = False
        while step > 1e-6:
            cand = a + step * grad / gn
            cand /= np.linalg.norm(cand)
            val = _ratio(ambient, X, eps, cand)
            evals += 1
            if val > best_val + 1e-15:
                best_val, best_a = val, cand.copy()
                a = cand
                improved = True
                break
            step *= 0.5
        if not improved:
            break
    return best_val, best_a, evals


def uncond_constant(seq: BasicSequence, *, budget: int = 4000, seed: int = 0,
                    enum_cap: int = UNCOND_ENUM_CAP, hint=None) -> UncondConstantResult:
    """Lower bound (exact in the fully enumerated Euclidean case) for the
    unconditional constant of the sequence in its ambient norm.

    `hint` is an optional (pattern, coeffs) witness from a subsequence; it is
    padded and included among the candidates, which makes chained runs over
    nested systems monotone."""
    X = seq.vectors
    K = seq.count
    rng = np.random.default_rng(seed)
    best_val, best_eps, best_a = 1.0, np.ones(K), None
    evals = 0
    hint = _pad_hint(hint, K)

    scale = seq.ambient.euclidean_scale()
    if scale is not None:
        flat = seq.ambient.flat()
        if flat is not None and np.all(flat[0] == flat[0][0]):
            # uniform weights: X^T X is exact for small-integer entries, so true
            # zero off-diagonals stay exactly zero and the sign-flip-invariance
            # certificate below can fire
            G = (X.T @ X) * flat[0][0]
        else:
            Xs = X * scale[:, None]
            G = Xs.T @ Xs
        lam, Q = np.linalg.eigh(G)
        keep = lam > max(lam[-1], 0.0) * 1e-12
        R = Q[:, keep] * lam[keep] ** -0.5
        exhaustive = K <= enum_cap
        if exhaustive:
            patterns = _patterns(K)
        else:
            count = max(8, min(256, budget // max(1, K)))
            rows = [np.ones(K)]
            if hint is not None:
                rows.append(hint[0])
            rows.extend(np.where(rng.random((count, K)) < 0.5, -1.0, 1.0))
            for r in rows[2:]:
                r[0] = 1.0
            patterns = np.array(rows)
        for eps in patterns:
            val, a = _euclid_pattern_value(G, R, eps)
            evals += 1
            if val > best_val:
                best_val, best_eps, best_a = val, eps.copy(), a
        method = "exact" if exhaustive else "search"
        upper = best_val if exhaustive else math.inf
        return UncondConstantResult(NormEstimate.interval(best_val, upper, method),
                                    best_eps, best_a, evals)

    def try_pattern(eps, seeds):
        nonlocal best_val, best_eps, best_a, evals
        for a0 in seeds:
            val, a, ev = _ratio_ascent(seq.ambient, X, eps, a0)
            evals += ev
            if val > best_val:
                best_val, best_eps, best_a = val, eps.copy(), a

    base_seeds = [np.ones(K), rng.standard_normal(K), rng.standard_normal(K)]
    if hint is not None:
        base_seeds.insert(0, hint[1])
    if K <= 13:
        for eps in _patterns(K):
            try_pattern(eps, base_seeds)
            if evals >= budget:
                break
    else:
        if hint is not None:
            try_pattern(hint[0], base_seeds)
        eps = np.ones(K)
        improved = True
        while improved and evals < budget:
            improved = False
            for k in range(1, K):
                trial = eps.copy()
                trial[k] = -trial[k]
                seeds = [best_a] if best_a is not None else base_seeds[:1]
                before = best_val
                try_pattern(trial, seeds)
                if best_val > before:
                    eps = trial
                    improved = True
                if evals >= budget:
                    break
        count = max(4, (budget - evals) // 40)
        for _ in range(count):
            eps = np.where(rng.random(K) < 0.5, -1.0, 1.0)
            eps[0] = 1.0
            try_pattern(eps, base_seeds[:2])
            if evals >= budget:
                break
    return UncondConstantResult(NormEstimate.interval(best_val, math.inf, "search"),
                                best_eps, best_a, evals)


def _seq_sum(arrays) -> np.ndarray:
    """Left-to-right sum; both the series sum and the summation map use this,
    so the factorization identity W(lift f) = (sum T_n) f holds bitwise."""
    arrays = list(arrays)
    out = arrays[0].copy()
    for a in arrays[1:]:
        out = out + a
    return out


@dataclass(eq=False)
class SeriesRep:
    """Finite family of operators sharing source and target, with its sign-
    supremum norm M cached on first use."""

    operators: tuple[FiniteOperator, ...]
    _m_cache: NormEstimate | None = field(default=None, repr=False)

    def __post_init__(self):
        ops = tuple(self.operators)
        if not ops:
            raise ValueError("series needs at least one operator")
        first = ops[0]
        for T in ops[1:]:
            if T.source.atoms != first.source.atoms or T.target.descriptor() != first.target.descriptor():
                raise ValueError("series members must share source and target")
        self.operators = ops

    @property
    def count(self) -> int:
        return len(self.operators)

    @property
    def source(self) -> Space:
        return self.operators[0].source

    @property
    def target(self) -> NormedTarget:
        return self.operators[0].target

    def sum_matrix(self) -> np.ndarray:
        return _seq_sum([T.matrix for T in self.operators])

    def sum_operator(self) -> FiniteOperator:
        return FiniteOperator(self.source, self.target, self.sum_matrix())

    @property
    def M(self) -> NormEstimate:
        if self._m_cache is None:
            self._m_cache = uncond_norm(self)
        return self._m_cache


def uncond_norm(series: SeriesRep, *, budget: int = 2000, seed: int = 0,
                exact_cap: int = UNCOND_ENUM_CAP, hint_lower: float = 0.0) -> NormEstimate:
    """M = max over sign patterns of ||sum +- T_n||.

    Exact when the per-pattern operator norm is exact (p = 1, or Euclidean
    target at p = 2) and the pattern count fits the cap; otherwise a searched
    lower bound against the triangle-inequality upper bound."""
    N = series.count
    if N == 1:
        return op_norm(series.operators[0], budget=budget, seed=seed)
    T0 = series.operators[0]
    p = T0.source.p
    euclid = T0.target.euclidean_scale() is not None and p == 2.0
    exact_possible = (p == 1.0 and T0.target.norm_exact) or euclid
    cap = min(exact_cap, 14) if euclid else exact_cap
    stacked = np.stack([T.matrix for T in series.operators])

    if exact_possible and N <= cap:
        best = 0.0
        P = _patterns(N)
        for eps in P:
            S = np.tensordot(eps, stacked, axes=(0, 0))
            val = op_norm(FiniteOperator(T0.source, T0.target, S), budget=budget, seed=seed).upper
            best = max(best, val)
        return NormEstimate.exact(best)

    rng = np.random.default_rng(seed)
    lower = hint_lower
    count = max(8, min(128, budget // max(1, N)))
    rows = [np.ones(N)]
    rows.extend(np.where(rng.random((count, N)) < 0.5, -1.0, 1.0))
    for r in rows[1:]:
        r[0] = 1.0
    for eps in rows:
        S = np.tensordot(eps, stacked, axes=(0, 0))
        lower = max(lower, op_norm(FiniteOperator(T0.source, T0.target, S),
                                   budget=budget // 4, seed=seed).lower)
    upper = sum(op_norm(T, budget=budget // 4, seed=seed).upper for T in series.operators)
    return NormEstimate.interval(min(lower, upper), upper, "search")


@dataclass(frozen=True, eq=False)
class SummationMap:
    """W: the unconditional-sum space onto the target, y -> sum of blocks.
    ||W|| <= 1 since the plain sum is one of the signed sums."""

    y_space: UncondSum

    def apply(self, y: np.ndarray) -> np.ndarray:
        blocks = self.y_space.block_view(y)
        out = _seq_sum([blocks[n] for n in range(self.y_space.blocks)])
        return out[:, 0] if np.asarray(y).ndim == 1 else out

    @property
    def norm_bound(self) -> float:
        return 1.0


@dataclass(frozen=True, eq=False)
class YFactorization:
    y_space: UncondSum
    lift: FiniteOperator
    summation: SummationMap
    lift_norm: NormEstimate
    series_norm: NormEstimate


def make_Y(series: SeriesRep, *, budget: int = 2000, seed: int = 0) -> YFactorization:
    """Unconditional-sum space over the series' target, the stacked lift
    f -> (T_1 f, ..., T_N f) into it, and the summation map back.

    The composition summation(lift(f)) equals (sum T_n) f bitwise, and the
    lift's norm never exceeds the series' unconditional norm."""
    Y = UncondSum((series.target,) * series.count)
    lift = FiniteOperator(series.source, Y, np.vstack([T.matrix for T in series.operators]))
    W = SummationMap(Y)
    lift_norm = op_norm(lift, budget=budget, seed=seed)
    M = series.M
    if lift_norm.lower > M.upper + 1e-9 * max(1.0, M.upper):
        raise AssertionError("lift norm exceeds the series' unconditional norm")
    return YFactorization(Y, lift, W, lift_norm, M)


def _is_sign_invariant_basis(target: NormedTarget) -> bool:
    if target.flat() is not None:
        return True
    return isinstance(target, UncondSum) and target.child.dim == 1


def rank1_series(T: FiniteOperator, basis: np.ndarray | None = None, *,
                 spot_checks: int = 16, seed: int = 0) -> SeriesRep:
    """Slice T along a 1-unconditional basis of its target into rank-one
    coordinate pieces whose sum reproduces T.

    With the default coordinate basis the slices are row extractions and the
    sum is bitwise exact; flat targets (and unconditional sums of scalar
    blocks) are sign-invariant structurally, anything else is spot-checked."""
    d = T.target.dim
    if basis is None:
        if not _is_sign_invariant_basis(T.target):
            rng = np.random.default_rng(seed)
            for _ in range(spot_checks):
                y = rng.standard_normal(d)
                eps = np.where(rng.random(d) < 0.5, -1.0, 1.0)
                a, b = float(T.target.norm(eps * y)), float(T.target.norm(y))
                if abs(a - b) > 1e-9 * max(1.0, b):
                    raise ValueError("coordinate basis is not 1-unconditional for this target")
        slices = []
        for k in range(d):
            M = np.zeros_like(T.matrix)
            M[k] = T.matrix[k]
            slices.append(FiniteOperator(T.source, T.target, M))
        return SeriesRep(tuple(slices))

    B = np.asarray(basis, dtype=np.float64)
    if B.shape != (d, d):
        raise ValueError(f"basis must be {d} x {d}")
    try:
        coords = np.linalg.solve(B, T.matrix)
    except np.linalg.LinAlgError as exc:
        raise ValueError("basis does not span the target") from exc
    rng = np.random.default_rng(seed)
    for _ in range(spot_checks):
        c = rng.standard_normal(d)
        eps = np.where(rng.random(d) < 0.5, -1.0, 1.0)
        a = float(T.target.norm(B @ (eps * c)))
        b = float(T.target.norm(B @ c))
        if abs(a - b) > 1e-9 * max(1.0, b):
            raise ValueError("basis fails the sign-invariance spot check")
    slices = [FiniteOperator(T.source, T.target, np.outer(B[:, k], coords[k])) for k in range(d)]
    total = _seq_sum([S.matrix for S in slices])
    if not np.allclose(total, T.matrix, rtol=1e-10, atol=1e-12):
        raise AssertionError("slices do not sum back to the operator")
    return SeriesRep(tuple(slices))


@dataclass(frozen=True)
class ChainedConstant:
    depth: int
    lower: float
    raw: UncondConstantResult


def classical_haar_constants(p: float, max_depth: int, *, budget: int = 4000,
                             seed: int = 0) -> list[ChainedConstant]:
    """Lower bounds for the unconditional constant of the classical Haar
    system (mean-zero part) in L_p, at each depth up to max_depth.

    Depth D is seeded with the depth D-1 witness; since the shallower system
    is a subsystem of the deeper one (same step functions on [0,1]), the
    reported chain is nondecreasing by construction."""
    out: list[ChainedConstant] = []
    hint = None
    running = 1.0
    for depth in range(1, max_depth + 1):
        sp = dyadic_space(depth, 1.0, p)
        sys = haar_system(build_tree(sp.full(), depth))
        seq = BasicSequence(sys.function_matrix(), Lq(np.full(sp.atoms, sp.atom_measure), p))
        res = uncond_constant(seq, budget=budget, seed=seed, hint=hint)
        running = max(running, res.estimate.lower)
        out.append(ChainedConstant(depth, running, res))
        if res.pattern is not None:
            hint = (res.pattern, res.coeffs if res.coeffs is not None else np.ones(seq.count))
    return out
