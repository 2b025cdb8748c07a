"""Numpy implementations of the search kernels.

Semantics (iteration order, tie-breaking, accept thresholds) are shared with
the compiled backend in `_fast.pyx`; equivalence is covered by tests. All
three kernels work on flat weighted q-norms: ||y|| = (sum w |y|^q)^(1/q).
"""

from __future__ import annotations

import itertools

import numpy as np

CHUNK = 4096
IMPROVE = 1e-12  # relative improvement required to accept a swap


def _row_norms(Y: np.ndarray, w: np.ndarray, q: float) -> np.ndarray:
    if q == 1.0:
        return np.abs(Y) @ w
    if q == 2.0:
        return np.sqrt((Y * Y) @ w)
    return (np.abs(Y) ** q @ w) ** (1.0 / q)


def _comb_chunks(n: int, k: int, chunk: int):
    if k == 0:
        yield np.empty((1, 0), dtype=np.int64)
        return
    it = itertools.combinations(range(n), k)
    while True:
        block = list(itertools.islice(it, chunk))
        if not block:
            return
        yield np.asarray(block, dtype=np.int64)


def balanced_min(images: np.ndarray, w: np.ndarray, q: float):
    """Minimize ||sum_i s_i images_i|| over balanced signs s with s[0] = +1.

    images: (n, m) with n even. Enumerates all C(n-1, n/2-1) balanced
    bipartitions in lexicographic order of the +1 companion set; ties keep the
    first minimizer. Returns (value, signs as int8 array, evaluations).
    """
    n, m = images.shape
    half = n // 2
    total = -images.sum(axis=0)  # all -1 baseline
    best_val = np.inf
    best_combo = None
    evals = 0
    for combos in _comb_chunks(n - 1, half - 1, CHUNK):
        plus = np.zeros((combos.shape[0], n))
        plus[:, 0] = 1.0
        np.put_along_axis(plus, combos + 1, 1.0, axis=1)
        Y = total + 2.0 * (plus @ images)
        vals = _row_norms(Y, w, q)
        evals += vals.size
        i = int(np.argmin(vals))
        if vals[i] < best_val:
            best_val = float(vals[i])
            best_combo = combos[i].copy()
    signs = -np.ones(n, dtype=np.int8)
    signs[0] = 1
    if best_combo is not None and best_combo.size:
        signs[best_combo + 1] = 1
    y = signs.astype(np.float64) @ images
    return float(_row_norms(y[None, :], w, q)[0]), signs, evals


def swap_descent(images: np.ndarray, w: np.ndarray, q: float, signs: np.ndarray, max_passes: int = 60):
    """Improve a balanced sign vector by (+,-) pair swaps, steepest first.

    Per pass all plus/minus swaps are scored; the best one is taken if it
    improves the value by a relative margin. Returns (value, signs, evals).
    """
    s = np.asarray(signs, dtype=np.int8).copy()
    n, m = images.shape
    evals = 0
    y = s.astype(np.float64) @ images
    cur = float(_row_norms(y[None, :], w, q)[0])
    for _ in range(max_passes):
        plus = np.flatnonzero(s == 1)
        minus = np.flatnonzero(s == -1)
        cand = y[None, None, :] - 2.0 * images[plus][:, None, :] + 2.0 * images[minus][None, :, :]
        vals = _row_norms(cand.reshape(-1, m), w, q)
        evals += vals.size
        k = int(np.argmin(vals))
        if not vals[k] < cur * (1.0 - IMPROVE):
            break
        i, j = divmod(k, minus.size)
        s[plus[i]] = -1
        s[minus[j]] = 1
        y = s.astype(np.float64) @ images
        cur = float(_row_norms(y[None, :], w, q)[0])
    return cur, s, evals


def signed_max(blocks: np.ndarray, w: np.ndarray, q: float):
    """Maximize ||sum_n eps_n blocks_n|| over patterns eps with eps[0] = +1.

    blocks: (N, m). Pattern k sets eps[j+1] = +1 when bit j of k is 0.
    Ties keep the smallest k. Returns (value, pattern index, evaluations).
    """
    N, m = blocks.shape
    K = 1 << (N - 1)
    best_val = -np.inf
    best_k = 0
    evals = 0
    rest = blocks[1:]
    for start in range(0, K, CHUNK):
        ks = np.arange(start, min(start + CHUNK, K), dtype=np.int64)
        bits = (ks[:, None] >> np.arange(N - 1)) & 1
        eps = 1.0 - 2.0 * bits
        Y = blocks[0] + eps @ rest
        vals = _row_norms(Y, w, q)
        evals += vals.size
        i = int(np.argmax(vals))
        if vals[i] > best_val:
            best_val = float(vals[i])
            best_k = int(ks[i])
    return best_val, best_k, evals
