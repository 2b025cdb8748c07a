"""Bounded-coefficient sign construction on a Haar-like system.

Starting from (1/m) h_root, each node at the next level receives coefficient
1/m while the running partial sum is strictly inside (-1, 1) on it and 0 once
the sum has hit +-1 there. Partial sums are integer multiples of 1/m, so the
whole construction runs in exact integer arithmetic; at finite depth the set
B where |f| < 1 is reported instead of vanishing, and a completion step
rounds f to an exact sign while accounting for the correction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations, islice, product

import numpy as np

from .dyadic import AtomSet, SimpleFunction, is_sign
from .haar import HaarLikeSystem, MultiIndex
from .operators import FiniteOperator
from .uncond import BasicSequence

__all__ = [
    "LevelStat",
    "BoundedSignResult",
    "bounded_sign",
    "CompletionReport",
    "complete_to_sign",
    "CoefficientBoundReport",
    "coefficient_bound_report",
]


@dataclass(frozen=True)
class LevelStat:
    level: int
    increment_l1: float
    residual_measure: float
    residual_atoms: int
    active_atoms: int


@dataclass(frozen=True)
class BoundedSignResult:
    """Truncated construction output with residual bookkeeping.

    function = sum of the level increments; coefficients are 0 or 1/m;
    residual is the set where |function| < 1. At every level n the residual
    measure satisfies mu(B_n) <= m * ||f_n||_1 exactly (integer counts)."""

    function: SimpleFunction
    coefficients: dict[MultiIndex, float]
    m: int
    base: AtomSet
    residual: AtomSet
    residual_measure: float
    last_level_l1: float
    level_stats: tuple[LevelStat, ...]


def _pick_m(delta: float) -> int:
    if delta <= 0:
        raise ValueError("delta must be positive")
    if delta >= 1:
        return 1
    m = max(1, int(math.ceil(1.0 / delta)))
    while m > 1 and 1.0 / (m - 1) <= delta:
        m -= 1
    while 1.0 / m > delta:
        m += 1
    return m


def bounded_sign(sys: HaarLikeSystem, delta: float) -> BoundedSignResult:
    """Bounded-coefficient near-sign on the system's base set.

    m is the smallest integer with 1/m <= delta; all coefficients are 0 or
    1/m and every partial sum is bounded by 1 in modulus (asserted on exact
    integers). Construction stops early once no atom is still active."""
    m = _pick_m(delta)
    space = sys.space
    mu = space.atom_measure
    base = sys.base
    kappa = np.zeros(space.atoms, dtype=np.int64)  # m * partial sum
    coeffs: dict[MultiIndex, float] = {}
    stats: list[LevelStat] = []
    active = True
    for n in range(sys.max_level):
        level_nodes = [MultiIndex(signs) for signs in product((-1, 1), repeat=n)]
        active_atoms = 0
        if active:
            for alpha in level_nodes:
                node = sys.tree.nodes[alpha]
                k0 = int(kappa[node.indices[0]])
                if abs(k0) > m:
                    raise AssertionError("partial sum escaped [-1, 1]")
                if abs(k0) < m:
                    coeffs[alpha] = 1.0 / m
                    kappa[sys.tree.nodes[alpha.child(1)].indices] += 1
                    kappa[sys.tree.nodes[alpha.child(-1)].indices] -= 1
                    active_atoms += node.count
                else:
                    coeffs[alpha] = 0.0
        else:
            for alpha in level_nodes:
                coeffs[alpha] = 0.0
        if np.max(np.abs(kappa)) > m:
            raise AssertionError("partial sum escaped [-1, 1]")
        residual_atoms = int(np.sum(np.abs(kappa[base.indices]) < m))
        stats.append(LevelStat(n, active_atoms * mu / m, residual_atoms * mu,
                               residual_atoms, active_atoms))
        active = residual_atoms > 0
    residual = AtomSet(space, base.indices[np.abs(kappa[base.indices]) < m])
    f = SimpleFunction(space, kappa.astype(np.float64) / m)
    return BoundedSignResult(f, coeffs, m, base, residual, residual.measure,
                             stats[-1].increment_l1, tuple(stats))


@dataclass(frozen=True)
class CompletionReport:
    slack_l1: float
    operator_slack: float | None
    plus_assigned: int
    residual_measure: float
    evaluations: int


def _best_fixed_count_signs(images: np.ndarray, offset: np.ndarray, target, x: int,
                            seed: int, enum_cap: int):
    """Choose signs on the residual atoms (exactly x of them +1) minimizing
    ||images^T s - offset|| in the target norm."""
    nb = images.shape[0]
    evals = 0
    if math.comb(nb, x) <= enum_cap:
        best_val, best_set = math.inf, None
        it = combinations(range(nb), x)
        while True:
            block = list(islice(it, 2048))
            if not block:
                break
            S = -np.ones((len(block), nb))
            for r, comb in enumerate(block):
                S[r, list(comb)] = 1.0
            vals = np.atleast_1d(target.norm((S @ images - offset).T))
            evals += vals.size
            i = int(np.argmin(vals))
            if vals[i] < best_val:
                best_val = float(vals[i])
                best_set = block[i]
        s = -np.ones(nb)
        s[list(best_set)] = 1.0
        return s, evals
    # greedy fill then fixed-count swap descent
    s = -np.ones(nb)
    y = -images.sum(axis=0) - offset
    chosen: list[int] = []
    for _ in range(x):
        rest = np.flatnonzero(s < 0)
        cand = y[None, :] + 2.0 * images[rest]
        vals = np.atleast_1d(target.norm(cand.T))
        evals += vals.size
        k = rest[int(np.argmin(vals))]
        s[k] = 1.0
        y = y + 2.0 * images[k]
        chosen.append(int(k))
    for _ in range(40):
        plus = np.flatnonzero(s > 0)
        minus = np.flatnonzero(s < 0)
        if plus.size == 0 or minus.size == 0:
            break
        cand = y[None, None, :] - 2.0 * images[plus][:, None, :] + 2.0 * images[minus][None, :, :]
        vals = np.atleast_1d(target.norm(cand.reshape(-1, images.shape[1]).T))
        evals += vals.size
        cur = float(target.norm(y))
        k = int(np.argmin(vals))
        if not vals[k] < cur * (1.0 - 1e-12):
            break
        i, j = divmod(k, minus.size)
        s[plus[i]] = -1.0
        s[minus[j]] = 1.0
        y = s @ images - offset
    return s, evals


def complete_to_sign(res: BoundedSignResult, operator: FiniteOperator | None = None, *,
                     seed: int = 0, enum_cap: int = 20_000) -> tuple[SimpleFunction, CompletionReport]:
    """Round the construction output to an exact sign on its base set.

    Atoms of the residual set get +-1 in the unique balanced proportion; when
    an operator is supplied the assignment minimizes the norm of the image of
    the correction, otherwise it is an arbitrary balanced one. The L1 size of
    the correction is at most 2 mu(B)."""
    B = res.residual
    f = res.function
    if B.count == 0:
        return f, CompletionReport(0.0, 0.0 if operator is not None else None, 0,
                                   0.0, 0)
    if B.count % 2:
        raise ValueError(f"residual set has odd atom count {B.count}")
    n_plus = int(np.sum(f.values == 1.0))
    n_minus = int(np.sum(f.values == -1.0))
    doubled = n_minus - n_plus + B.count
    if doubled % 2 or not 0 <= doubled // 2 <= B.count:
        raise ValueError("no balanced completion exists")
    x = doubled // 2

    evals = 0
    if operator is None:
        s = -np.ones(B.count)
        s[:x] = 1.0
    else:
        images = np.ascontiguousarray(operator.matrix[:, B.indices].T)
        offset = images.T @ f.values[B.indices]  # image of the raw part on B
        s, evals = _best_fixed_count_signs(images, offset, operator.target, x, seed, enum_cap)

    values = f.values.copy()
    values[B.indices] = s
    completed = SimpleFunction(f.space, values)
    if not is_sign(completed, res.base):
        raise AssertionError("completion failed to produce an exact sign")
    correction = completed.values - f.values
    slack_l1 = float(np.sum(np.abs(correction)) * f.space.atom_measure)
    if slack_l1 > 2.0 * B.measure + 1e-12:
        raise AssertionError("correction exceeded the residual bound")
    op_slack = None
    if operator is not None:
        op_slack = float(operator.target.norm(operator.matrix @ correction))
    return completed, CompletionReport(slack_l1, op_slack, x, B.measure, evals)


@dataclass(frozen=True)
class CoefficientBoundReport:
    lhs: float
    rhs: float
    sup_coeff: float
    beta: float
    u_norm_bound: float
    ok: bool


def _disjoint_supports(X: np.ndarray) -> bool:
    return bool(np.all((X != 0.0).sum(axis=1) <= 1))


def coefficient_bound_report(images, ambient, sys: HaarLikeSystem,
                             coeffs: dict[MultiIndex, float], u_norm_bound: float,
                             beta: float | None = None) -> CoefficientBoundReport:
    """Check ||sum a_alpha images_alpha|| <= 2 * ||U|| * beta^2 * sup |a_alpha|.

    `images` holds one column per system function (a BasicSequence also
    works). Requires the normalized setting mu(base) = 1 (so ||h_root|| = 1).
    beta defaults to 1 when the image supports are pairwise disjoint
    (structural 1-unconditionality); otherwise it must be supplied."""
    if isinstance(images, BasicSequence):
        ambient = images.ambient
        images = images.vectors
    X = np.asarray(images, dtype=np.float64)
    if abs(sys.base.measure - 1.0) > 1e-9:
        raise ValueError("system must be normalized to base measure 1")
    order = sys.indices()
    if X.shape[1] != len(order):
        raise ValueError("one image per system function expected")
    if beta is None:
        if not _disjoint_supports(X):
            raise ValueError("images are not disjointly supported; supply beta")
        beta = 1.0
    a = np.array([coeffs.get(alpha, 0.0) for alpha in order])
    lhs = float(ambient.norm(X @ a))
    sup = float(np.max(np.abs(a))) if a.size else 0.0
    rhs = 2.0 * u_norm_bound * beta * beta * sup
    return CoefficientBoundReport(lhs, rhs, sup, beta, u_norm_bound, lhs <= rhs + 1e-9)
