import numpy as np
import pytest

from narrowops import MultiIndex, SubsetTree, build_tree


def random_tree(A, levels, rng) -> SubsetTree:
    """Tree with uniformly random equal splits at every node."""
    splits = {}

    def rec(alpha, indices):
        if alpha.level == levels:
            return
        perm = rng.permutation(indices)
        half = len(indices) // 2
        left = np.sort(perm[:half])
        right = np.sort(perm[half:])
        splits[alpha.child(-1)] = left
        splits[alpha.child(1)] = right
        rec(alpha.child(-1), left)
        rec(alpha.child(1), right)

    rec(MultiIndex(), A.indices)
    return build_tree(A, levels, splits)


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
