"""Finite dyadic model of a nonatomic probability space and its L_p elements.

Everything lives on a grid of equal-measure atoms, so equal-measure splits
become cardinality conditions. All measures are binary fractions of the total
measure; double precision is then exact for measures and for L1 norms of
plus/minus-one functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Space",
    "dyadic_space",
    "product_space",
    "AtomSet",
    "SimpleFunction",
    "Partition",
    "norm",
    "integral",
    "is_sign",
    "rademacher",
    "embed",
    "measurable_wrt",
    "block_values",
]


def _frozen(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr)
    if out is arr:
        out = arr.copy()
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class Space:
    """Uniform measure space: `atoms` atoms of equal measure, L_p exponent `p`.

    Dyadic spaces (atoms = 2^depth) are built with :func:`dyadic_space`; spaces
    with other atom counts arise as coarse quotients under partitions.
    """

    atoms: int
    total_measure: float = 1.0
    p: float = 1.0

    def __post_init__(self):
        if self.atoms < 1:
            raise ValueError(f"need at least one atom, got {self.atoms}")
        if not self.total_measure > 0:
            raise ValueError(f"total measure must be positive, got {self.total_measure}")
        if self.p < 1:
            raise ValueError(f"exponent p must be >= 1, got {self.p}")

    @property
    def atom_measure(self) -> float:
        return self.total_measure / self.atoms

    @property
    def depth(self) -> int:
        d = self.atoms.bit_length() - 1
        if 1 << d != self.atoms:
            raise ValueError(f"{self.atoms} atoms is not a dyadic grid")
        return d

    def full(self) -> "AtomSet":
        return AtomSet(self, np.arange(self.atoms, dtype=np.int64))

    def function(self, values) -> "SimpleFunction":
        return SimpleFunction(self, np.asarray(values, dtype=np.float64))

    def zero(self) -> "SimpleFunction":
        return SimpleFunction(self, np.zeros(self.atoms))

    def indicator(self, indices) -> "SimpleFunction":
        v = np.zeros(self.atoms)
        v[np.asarray(indices, dtype=np.int64)] = 1.0
        return SimpleFunction(self, v)


def dyadic_space(depth: int, total_measure: float = 1.0, p: float = 1.0) -> Space:
    """Space with 2^depth equal atoms; the finite stand-in for (Omega, Sigma, mu)."""
    if depth < 1:
        raise ValueError(f"depth must be >= 1, got {depth}")
    return Space(1 << depth, total_measure, p)


def product_space(depth_s: int, depth_t: int, total_measure: float = 1.0, p: float = 1.0) -> Space:
    """Dyadic grid on a square, atom (i, j) stored at flat index i * 2^depth_t + j."""
    return Space(1 << (depth_s + depth_t), total_measure, p)


@dataclass(frozen=True, eq=False)
class AtomSet:
    """Measurable set: strictly increasing atom indices within a space."""

    space: Space
    indices: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        if idx.ndim != 1:
            raise ValueError("indices must be one-dimensional")
        if idx.size and (idx[0] < 0 or idx[-1] >= self.space.atoms):
            raise ValueError("atom index out of range")
        if idx.size > 1 and not np.all(np.diff(idx) > 0):
            raise ValueError("atom indices must be strictly increasing")
        object.__setattr__(self, "indices", _frozen(idx))

    @property
    def count(self) -> int:
        return int(self.indices.size)

    @property
    def measure(self) -> float:
        return self.count * self.space.atom_measure

    def indicator(self) -> "SimpleFunction":
        return self.space.indicator(self.indices)

    def mask(self) -> np.ndarray:
        m = np.zeros(self.space.atoms, dtype=bool)
        m[self.indices] = True
        return m

    def split_in_half(self) -> tuple["AtomSet", "AtomSet"]:
        if self.count % 2:
            raise ValueError(f"cannot halve {self.count} atoms")
        h = self.count // 2
        return AtomSet(self.space, self.indices[:h]), AtomSet(self.space, self.indices[h:])

    def subset(self, indices) -> "AtomSet":
        sub = AtomSet(self.space, indices)
        if not np.all(np.isin(sub.indices, self.indices)):
            raise ValueError("not a subset")
        return sub


@dataclass(frozen=True, eq=False)
class SimpleFunction:
    """Element of L_p on a uniform grid, stored as one value per atom."""

    space: Space
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (self.space.atoms,):
            raise ValueError(f"expected {self.space.atoms} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("values must be finite")
        object.__setattr__(self, "values", _frozen(v))

    def norm(self, q: float | None = None) -> float:
        q = self.space.p if q is None else q
        mu = self.space.atom_measure
        if q == 1:
            return float(np.sum(np.abs(self.values)) * mu)
        if q == 2:
            return float(math.sqrt(np.sum(self.values * self.values) * mu))
        return float((np.sum(np.abs(self.values) ** q) * mu) ** (1.0 / q))

    def integral(self) -> float:
        return float(np.sum(self.values) * self.space.atom_measure)

    def inner(self, other: "SimpleFunction") -> float:
        self._check_space(other)
        return float(np.sum(self.values * other.values) * self.space.atom_measure)

    def support(self) -> AtomSet:
        return AtomSet(self.space, np.flatnonzero(self.values != 0.0))

    def _check_space(self, other: "SimpleFunction"):
        if other.space is not self.space and (
            other.space.atoms != self.space.atoms
            or other.space.total_measure != self.space.total_measure
            or other.space.p != self.space.p
        ):
            raise ValueError("functions live on different spaces")

    def __add__(self, other: "SimpleFunction") -> "SimpleFunction":
        self._check_space(other)
        return SimpleFunction(self.space, self.values + other.values)

    def __sub__(self, other: "SimpleFunction") -> "SimpleFunction":
        self._check_space(other)
        return SimpleFunction(self.space, self.values - other.values)

    def __neg__(self) -> "SimpleFunction":
        return SimpleFunction(self.space, -self.values)

    def __mul__(self, c: float) -> "SimpleFunction":
        return SimpleFunction(self.space, self.values * float(c))

    __rmul__ = __mul__


def norm(f: SimpleFunction, q: float | None = None) -> float:
    return f.norm(q)


def integral(f: SimpleFunction) -> float:
    return f.integral()


def is_sign(f: SimpleFunction, A: AtomSet) -> bool:
    """True iff f is +1 on half of A, -1 on the other half and 0 off A.

    The halves must have equal measure, which on a uniform grid is an exact
    cardinality condition; values are compared exactly.
    """
    if A.count == 0:
        raise ValueError("support set must be nonempty")
    mask = A.mask()
    if np.any(f.values[~mask] != 0.0):
        return False
    on = f.values[mask]
    if np.any(np.abs(on) != 1.0):
        return False
    return int(np.sum(on == 1.0)) == int(np.sum(on == -1.0))


def rademacher(A: AtomSet, k: int) -> SimpleFunction:
    """k-th Rademacher function on A: alternating +-1 over 2^k consecutive
    blocks of A's sorted atom list, +1 on the first block."""
    if k < 1:
        raise ValueError(f"index k must be >= 1, got {k}")
    blocks = 1 << k
    if A.count % blocks:
        raise ValueError(f"|A| = {A.count} not divisible by 2^{k}")
    size = A.count // blocks
    signs = np.repeat(np.where(np.arange(blocks) % 2 == 0, 1.0, -1.0), size)
    v = np.zeros(A.space.atoms)
    v[A.indices] = signs
    return SimpleFunction(A.space, v)


@dataclass(frozen=True, eq=False)
class Partition:
    """Pairwise-disjoint nonempty blocks covering a base set.

    Models a sub-sigma-algebra on the base: measurable functions are the
    block-constant ones.
    """

    base: AtomSet
    blocks: tuple[AtomSet, ...]

    def __post_init__(self):
        blocks = tuple(self.blocks)
        if not blocks:
            raise ValueError("partition needs at least one block")
        seen = np.concatenate([b.indices for b in blocks])
        if any(b.count == 0 for b in blocks):
            raise ValueError("blocks must be nonempty")
        if np.unique(seen).size != seen.size:
            raise ValueError("blocks overlap")
        if not np.array_equal(np.sort(seen), self.base.indices):
            raise ValueError("blocks do not cover the base set")
        object.__setattr__(self, "blocks", blocks)

    @property
    def block_count(self) -> int:
        return len(self.blocks)

    @property
    def equal_blocks(self) -> bool:
        sizes = {b.count for b in self.blocks}
        return len(sizes) == 1

    def coarse_space(self) -> Space:
        """Space whose atoms are this partition's blocks (requires equal sizes)."""
        if not self.equal_blocks:
            raise ValueError("coarse space needs equal-cardinality blocks")
        return Space(self.block_count, self.base.measure, self.base.space.p)

    @classmethod
    def from_index_groups(cls, base: AtomSet, groups) -> "Partition":
        return cls(base, tuple(AtomSet(base.space, g) for g in groups))

    @classmethod
    def singletons(cls, base: AtomSet) -> "Partition":
        return cls.from_index_groups(base, [[i] for i in base.indices])

    @classmethod
    def single_block(cls, base: AtomSet) -> "Partition":
        return cls(base, (base,))

    @classmethod
    def consecutive(cls, base: AtomSet, block_count: int) -> "Partition":
        """Split the sorted atom list into `block_count` consecutive equal runs."""
        if base.count % block_count:
            raise ValueError(f"{base.count} atoms do not split into {block_count} equal blocks")
        size = base.count // block_count
        groups = [base.indices[i * size:(i + 1) * size] for i in range(block_count)]
        return cls.from_index_groups(base, groups)


def embed(partition: Partition, values) -> SimpleFunction:
    """Block-constant data on a partition, as a fine function (0 off the base)."""
    vals = np.asarray(values, dtype=np.float64)
    if vals.shape != (partition.block_count,):
        raise ValueError(f"expected {partition.block_count} block values")
    v = np.zeros(partition.base.space.atoms)
    for b, c in zip(partition.blocks, vals):
        v[b.indices] = c
    return SimpleFunction(partition.base.space, v)


def measurable_wrt(f: SimpleFunction, partition: Partition) -> bool:
    """True iff f is constant on every block of the partition."""
    for b in partition.blocks:
        vals = f.values[b.indices]
        if np.any(vals != vals[0]):
            return False
    return True


def block_values(f: SimpleFunction, partition: Partition, tol: float = 0.0) -> np.ndarray:
    """Per-block values of a block-constant function.

    tol > 0 allows values within an absolute tolerance of the block's first
    value (useful for reconstructed data carrying float dust).
    """
    out = np.empty(partition.block_count)
    for j, b in enumerate(partition.blocks):
        vals = f.values[b.indices]
        if np.any(np.abs(vals - vals[0]) > tol):
            raise ValueError(f"function is not constant on block {j}")
        out[j] = vals[0]
    return out
