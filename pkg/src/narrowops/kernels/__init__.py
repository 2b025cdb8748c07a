"""Hot search kernels with backend selection at import time.

The compiled Cython backend is used when present; `NARROWOPS_PURE=1` in the
environment forces the numpy fallback. Both backends expose the same three
functions with identical iteration order and tie-breaking.
"""

from __future__ import annotations

import os

from . import _pure

BACKEND = "pure"
_impl = _pure

if not os.environ.get("NARROWOPS_PURE"):
    try:
        from . import _fast

        _impl = _fast
        BACKEND = "compiled"
    except ImportError:
        _fast = None
else:  # forced fallback
    _fast = None


def balanced_min(images, w, q):
    return _impl.balanced_min(images, w, q)


def swap_descent(images, w, q, signs, max_passes=60):
    return _impl.swap_descent(images, w, q, signs, max_passes)


def signed_max(blocks, w, q):
    return _impl.signed_max(blocks, w, q)


def get_backend() -> str:
    return BACKEND


def available_backends() -> dict:
    out = {"pure": _pure}
    if _fast is not None:
        out["compiled"] = _fast
    return out
