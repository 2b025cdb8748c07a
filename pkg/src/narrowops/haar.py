"""Trees of subsets, Haar-like systems and their basis calculus.

A tree on a base set A splits every node into two equal-measure children
indexed by -1 and +1; the attached functions h_alpha = chi(child_+1) -
chi(child_-1) form a monotone Schauder basis of the mean-zero block-measurable
functions on A. Nodes are indexed by multi-indices over {-1, +1} enumerated in
the natural order: level by level, lexicographic within a level with -1 first.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import product

import numpy as np

from .dyadic import AtomSet, Partition, SimpleFunction, Space

__all__ = [
    "MultiIndex",
    "natural_order",
    "SubsetTree",
    "build_tree",
    "HaarLikeSystem",
    "haar_system",
    "haar_norm_formula",
    "expand",
    "reconstruct",
    "telescope",
    "tree_to_text",
    "tree_from_text",
]


@dataclass(frozen=True)
class MultiIndex:
    """Tuple over {-1, +1}; the empty tuple indexes the root."""

    signs: tuple[int, ...] = ()

    def __post_init__(self):
        if any(s not in (-1, 1) for s in self.signs):
            raise ValueError(f"entries must be -1 or +1, got {self.signs}")
        object.__setattr__(self, "signs", tuple(int(s) for s in self.signs))

    @property
    def level(self) -> int:
        return len(self.signs)

    def child(self, sign: int) -> "MultiIndex":
        return MultiIndex(self.signs + (sign,))

    def parent(self) -> "MultiIndex":
        if not self.signs:
            raise ValueError("the root has no parent")
        return MultiIndex(self.signs[:-1])

    def prefix(self, k: int) -> "MultiIndex":
        return MultiIndex(self.signs[:k])

    @property
    def rank(self) -> int:
        """Position in the natural order (root = 0)."""
        offset = 0
        for s in self.signs:
            offset = 2 * offset + (1 if s > 0 else 0)
        return (1 << self.level) - 1 + offset

    @classmethod
    def from_rank(cls, rank: int) -> "MultiIndex":
        if rank < 0:
            raise ValueError("rank must be nonnegative")
        level = (rank + 1).bit_length() - 1
        offset = rank + 1 - (1 << level)
        signs = tuple(1 if (offset >> (level - 1 - i)) & 1 else -1 for i in range(level))
        return cls(signs)

    def token(self) -> str:
        return "." if not self.signs else "".join("+" if s > 0 else "-" for s in self.signs)

    @classmethod
    def from_token(cls, token: str) -> "MultiIndex":
        if token == ".":
            return cls(())
        return cls(tuple(1 if c == "+" else -1 for c in token))

    def __repr__(self) -> str:
        return f"MultiIndex({self.token()!r})"


def natural_order(max_level: int) -> list[MultiIndex]:
    """All multi-indices with level <= max_level, in the natural order."""
    if max_level < 0:
        raise ValueError("max_level must be >= 0")
    out = []
    for n in range(max_level + 1):
        out.extend(MultiIndex(signs) for signs in product((-1, 1), repeat=n))
    return out


@dataclass(frozen=True, eq=False)
class SubsetTree:
    """Binary tree of subsets on a base set; children split parents in half.

    Nodes exist for all levels 0..max_level. Every node at level n has an atom
    count divisible by 2^(max_level - n), so all splits stay exact.
    """

    base: AtomSet
    max_level: int
    nodes: dict[MultiIndex, AtomSet]

    def __post_init__(self):
        if self.max_level < 1:
            raise ValueError("max_level must be >= 1")
        root = self.nodes.get(MultiIndex())
        if root is None or not np.array_equal(root.indices, self.base.indices):
            raise ValueError("root node must equal the base set")
        for alpha in natural_order(self.max_level):
            node = self.nodes.get(alpha)
            if node is None:
                raise ValueError(f"missing node {alpha.token()}")
            if node.count % (1 << (self.max_level - alpha.level)):
                raise ValueError(f"node {alpha.token()} has indivisible atom count {node.count}")
            if alpha.level < self.max_level:
                left = self.nodes[alpha.child(-1)]
                right = self.nodes[alpha.child(1)]
                if left.count != right.count:
                    raise ValueError(f"children of {alpha.token()} have unequal measure")
                merged = np.sort(np.concatenate([left.indices, right.indices]))
                if not np.array_equal(merged, node.indices):
                    raise ValueError(f"children of {alpha.token()} do not partition it")

    def node(self, alpha: MultiIndex) -> AtomSet:
        return self.nodes[alpha]

    def leaves(self) -> list[AtomSet]:
        return [self.nodes[a] for a in natural_order(self.max_level) if a.level == self.max_level]

    def leaf_partition(self) -> Partition:
        return Partition(self.base, tuple(self.leaves()))


def build_tree(A: AtomSet, max_level: int, split="interval") -> SubsetTree:
    """Tree of subsets on A.

    split="interval" halves each node's sorted atom list, the first half going
    to the -1 child. split may instead be a mapping {MultiIndex: indices} for
    all nodes at levels 1..max_level (validated).
    """
    if max_level < 1:
        raise ValueError("max_level must be >= 1")
    if A.count % (1 << max_level):
        raise ValueError(f"|A| = {A.count} not divisible by 2^{max_level}")
    nodes: dict[MultiIndex, AtomSet] = {MultiIndex(): A}
    if split == "interval":
        for alpha in natural_order(max_level - 1):
            left, right = nodes[alpha].split_in_half()
            nodes[alpha.child(-1)] = left
            nodes[alpha.child(1)] = right
    else:
        for alpha in natural_order(max_level):
            if alpha.level == 0:
                continue
            try:
                spec = split[alpha]
            except KeyError:
                raise ValueError(f"explicit split missing node {alpha.token()}") from None
            nodes[alpha] = spec if isinstance(spec, AtomSet) else AtomSet(A.space, spec)
    return SubsetTree(A, max_level, nodes)


def haar_norm_formula(p: float, base_measure: float, level: int) -> float:
    """L_p norm of a Haar-like function at the given level: (2^-n mu(A))^(1/p)."""
    return (base_measure / (1 << level)) ** (1.0 / p)


@dataclass(frozen=True, eq=False)
class HaarLikeSystem:
    """The functions h_alpha = chi(A_{alpha,1}) - chi(A_{alpha,-1}) of a tree.

    Functions exist for levels 0..max_level-1 (a node needs children to carry
    a function). In the natural order they form a monotone Schauder basis of
    the mean-zero functions that are constant on the tree's leaves.
    """

    tree: SubsetTree
    functions: dict[MultiIndex, SimpleFunction]

    @property
    def base(self) -> AtomSet:
        return self.tree.base

    @property
    def space(self) -> Space:
        return self.tree.base.space

    @property
    def max_level(self) -> int:
        return self.tree.max_level

    def indices(self) -> list[MultiIndex]:
        return natural_order(self.max_level - 1)

    def function(self, alpha: MultiIndex) -> SimpleFunction:
        return self.functions[alpha]

    def function_matrix(self) -> np.ndarray:
        """Columns are the h_alpha values, natural order."""
        return np.column_stack([self.functions[a].values for a in self.indices()])

    def norm(self, alpha: MultiIndex) -> float:
        return haar_norm_formula(self.space.p, self.base.measure, alpha.level)

    def leaf_partition(self) -> Partition:
        return self.tree.leaf_partition()

    def coefficient_matrix(self) -> np.ndarray:
        """Matrix C with C[k, j] = coefficient of h_k for the j-th leaf indicator.

        For leaf values u, the expansion coefficients of the mean-zero part of
        sum_j u_j chi(leaf_j) are C @ u; constants are annihilated.
        """
        leaves = self.tree.leaves()
        mu = self.space.atom_measure
        order = self.indices()
        C = np.zeros((len(order), len(leaves)))
        for k, alpha in enumerate(order):
            h = self.functions[alpha].values
            sq = self.norm_sq_l2(alpha)
            for j, leaf in enumerate(leaves):
                C[k, j] = h[leaf.indices[0]] * leaf.count * mu / sq
        return C

    def norm_sq_l2(self, alpha: MultiIndex) -> float:
        return self.base.measure / (1 << alpha.level)


def haar_system(tree: SubsetTree) -> HaarLikeSystem:
    functions = {}
    for alpha in natural_order(tree.max_level - 1):
        v = np.zeros(tree.base.space.atoms)
        v[tree.nodes[alpha.child(1)].indices] = 1.0
        v[tree.nodes[alpha.child(-1)].indices] = -1.0
        functions[alpha] = SimpleFunction(tree.base.space, v)
    return HaarLikeSystem(tree, functions)


def _check_expandable(f: SimpleFunction, sys: HaarLikeSystem, tol: float):
    scale = max(1.0, float(np.max(np.abs(f.values))))
    off = np.ones(f.space.atoms, dtype=bool)
    off[sys.base.indices] = False
    if np.any(np.abs(f.values[off]) > tol * scale):
        raise ValueError("function is not supported on the system's base set")
    if abs(f.integral()) > tol * scale * sys.base.measure:
        raise ValueError("function is not mean-zero")
    for leaf in sys.tree.leaves():
        vals = f.values[leaf.indices]
        if np.any(np.abs(vals - vals[0]) > tol * scale):
            raise ValueError("function is not constant on the tree's leaves")


def expand(f: SimpleFunction, sys: HaarLikeSystem, tol: float = 1e-12) -> dict[MultiIndex, float]:
    """Coefficients {a_alpha} with f = sum a_alpha h_alpha.

    Extraction uses the L2 inner product, which is exact for the expansion
    regardless of the ambient exponent because the h_alpha are orthogonal.
    Requires f mean-zero, supported on the base, constant on leaves.
    """
    _check_expandable(f, sys, tol)
    mu = sys.space.atom_measure
    return {
        alpha: float(np.dot(f.values, sys.functions[alpha].values) * mu / sys.norm_sq_l2(alpha))
        for alpha in sys.indices()
    }


def reconstruct(coeffs: dict[MultiIndex, float], sys: HaarLikeSystem) -> SimpleFunction:
    v = np.zeros(sys.space.atoms)
    for alpha, a in coeffs.items():
        v += a * sys.functions[alpha].values
    return SimpleFunction(sys.space, v)


def telescope(sys: HaarLikeSystem, alpha: MultiIndex) -> SimpleFunction:
    """The weighted branch sum a1*h_root + 2*a2*h_(a1) + ... along alpha.

    Equals 2^n chi(A_alpha) - chi(A_root) exactly; the identity is asserted
    atomwise before returning. Level 0 gives the zero function.
    """
    n = alpha.level
    if n > sys.max_level:
        raise ValueError(f"{alpha.token()} is below the tree's deepest functions")
    v = np.zeros(sys.space.atoms)
    for k in range(n):
        v += (1 << k) * alpha.signs[k] * sys.functions[alpha.prefix(k)].values
    if n == 0:
        return SimpleFunction(sys.space, v)
    expect = np.zeros(sys.space.atoms)
    expect[sys.tree.nodes[alpha].indices] = float(1 << n)
    expect[sys.base.indices] -= 1.0
    if not np.array_equal(v, expect):
        raise AssertionError(f"telescoping identity failed at {alpha.token()}")
    return SimpleFunction(sys.space, v)


def tree_to_text(tree: SubsetTree) -> str:
    """Deterministic text form: header plus one `node <token>: indices` line
    per node in natural order."""
    sp = tree.base.space
    lines = [
        "narrowops-tree v1",
        f"space atoms={sp.atoms} measure={float(sp.total_measure)!r} p={float(sp.p)!r}",
        f"maxlevel {tree.max_level}",
        "base " + " ".join(map(str, tree.base.indices)),
    ]
    for alpha in natural_order(tree.max_level):
        idx = " ".join(map(str, tree.nodes[alpha].indices))
        lines.append(f"node {alpha.token()}: {idx}")
    return "\n".join(lines) + "\n"


def tree_from_text(text: str) -> SubsetTree:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != "narrowops-tree v1":
        raise ValueError("not a narrowops tree file")
    fields = dict(kv.split("=", 1) for kv in lines[1].split()[1:])
    space = Space(int(fields["atoms"]), json.loads(fields["measure"]), json.loads(fields["p"]))
    max_level = int(lines[2].split()[1])
    base = AtomSet(space, [int(t) for t in lines[3].split()[1:]])
    nodes = {}
    for ln in lines[4:]:
        head, idx = ln.split(":", 1)
        token = head.split()[1]
        nodes[MultiIndex.from_token(token)] = AtomSet(space, [int(t) for t in idx.split()])
    return SubsetTree(base, max_level, nodes)
