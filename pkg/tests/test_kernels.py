"""Backend equivalence and oracle checks for the search kernels."""

from itertools import combinations

import numpy as np
import pytest

from narrowops import kernels
from narrowops.kernels import _pure

BACKENDS = kernels.available_backends()


def brute_balanced_min(images, w, q):
    n = images.shape[0]
    best = np.inf
    for comb in combinations(range(1, n), n // 2 - 1):
        s = -np.ones(n)
        s[0] = 1.0
        s[list(comb)] = 1.0
        y = s @ images
        if q == 1.0:
            val = float(np.sum(w * np.abs(y)))
        else:
            val = float(np.sum(w * np.abs(y) ** q) ** (1.0 / q))
        best = min(best, val)
    return best


def brute_signed_max(blocks, w, q):
    N = blocks.shape[0]
    best = -np.inf
    for k in range(1 << (N - 1)):
        eps = np.ones(N)
        for j in range(N - 1):
            if (k >> j) & 1:
                eps[j + 1] = -1.0
        y = eps @ blocks
        val = float(np.sum(w * np.abs(y) ** q) ** (1.0 / q))
        best = max(best, val)
    return best


@pytest.mark.parametrize("q", [1.0, 2.0, 3.0])
def test_balanced_min_matches_bruteforce(q, rng):
    for _ in range(8):
        n = int(rng.choice([6, 8, 10]))
        m = int(rng.integers(2, 6))
        images = rng.standard_normal((n, m))
        w = rng.uniform(0.5, 2.0, m)
        val, signs, evals = _pure.balanced_min(images, w, q)
        assert val == pytest.approx(brute_balanced_min(images, w, q), rel=1e-12, abs=1e-12)
        assert signs[0] == 1 and int(np.sum(signs == 1)) == n // 2


@pytest.mark.parametrize("q", [1.0, 2.0, 2.5])
def test_signed_max_matches_bruteforce(q, rng):
    for _ in range(8):
        N = int(rng.integers(2, 7))
        m = int(rng.integers(1, 5))
        blocks = rng.standard_normal((N, m))
        w = rng.uniform(0.5, 2.0, m)
        val, k, evals = _pure.signed_max(blocks, w, q)
        assert val == pytest.approx(brute_signed_max(blocks, w, q), rel=1e-12)
        assert evals == 1 << (N - 1)


@pytest.mark.skipif("compiled" not in BACKENDS, reason="compiled backend unavailable")
class TestBackendEquivalence:
    @pytest.mark.parametrize("q", [1.0, 2.0, 3.0])
    def test_balanced_min(self, q, rng):
        fast = BACKENDS["compiled"]
        for _ in range(6):
            n = int(rng.choice([6, 10, 12, 14]))
            images = rng.standard_normal((n, 5))
            w = rng.uniform(0.5, 2.0, 5)
            v1, s1, e1 = _pure.balanced_min(images, w, q)
            v2, s2, e2 = fast.balanced_min(images, w, q)
            assert v1 == pytest.approx(v2, rel=1e-11, abs=1e-12)
            assert e1 == e2

    @pytest.mark.parametrize("q", [1.0, 2.0, 2.5])
    def test_signed_max(self, q, rng):
        fast = BACKENDS["compiled"]
        for _ in range(6):
            N = int(rng.integers(2, 9))
            blocks = rng.standard_normal((N, 4))
            w = rng.uniform(0.5, 2.0, 4)
            v1, k1, e1 = _pure.signed_max(blocks, w, q)
            v2, k2, e2 = fast.signed_max(blocks, w, q)
            assert v1 == pytest.approx(v2, rel=1e-11, abs=1e-12)
            assert e1 == e2

    @pytest.mark.parametrize("q", [1.0, 2.0])
    def test_swap_descent(self, q, rng):
        fast = BACKENDS["compiled"]
        for _ in range(6):
            n = 16
            images = rng.standard_normal((n, 4))
            w = np.ones(4)
            s0 = -np.ones(n, dtype=np.int8)
            s0[rng.permutation(n)[: n // 2]] = 1
            v1, out1, _ = _pure.swap_descent(images, w, q, s0)
            v2, out2, _ = fast.swap_descent(images, w, q, s0)
            assert v1 == pytest.approx(v2, rel=1e-11, abs=1e-12)
            # both end balanced and no single swap improves either result
            assert int(np.sum(out1 == 1)) == n // 2
            assert int(np.sum(out2 == 1)) == n // 2


def test_swap_descent_never_worsens(rng):
    images = rng.standard_normal((12, 3))
    w = np.ones(3)
    s0 = -np.ones(12, dtype=np.int8)
    s0[:6] = 1
    y0 = s0.astype(float) @ images
    start = float(np.sum(np.abs(y0)))
    val, s, _ = _pure.swap_descent(images, w, 1.0, s0)
    assert val <= start + 1e-12


def test_dispatcher_exposes_backend():
    assert kernels.get_backend() in ("pure", "compiled")
    assert "pure" in BACKENDS
