"""Batch auction kernels with a compiled fast path.

The compiled module (Cython) is used when importable; otherwise the numpy
fallback takes over transparently.  SEGAUCTION_KERNELS=compiled|fallback
forces a backend (forcing `compiled` raises if the extension is missing).
Both backends implement the same contract and produce identical winners;
prices agree to floating-point rounding of exp().
"""

import os

import numpy as np

from . import _fallback

__all__ = [
    "BACKEND",
    "single_outcomes",
    "topk_outcomes",
    "session_without_replacement",
    "rival_kth_logscore",
    "argmax_scores",
]

_forced = os.environ.get("SEGAUCTION_KERNELS", "auto").strip().lower()
if _forced in ("", "auto"):
    try:
        from . import _speedups as _impl
        BACKEND = "compiled"
    except ImportError:
        _impl = _fallback
        BACKEND = "fallback"
elif _forced == "compiled":
    from . import _speedups as _impl
    BACKEND = "compiled"
elif _forced == "fallback":
    _impl = _fallback
    BACKEND = "fallback"
else:
    raise ImportError(
        f"SEGAUCTION_KERNELS={_forced!r}: expected 'auto', 'compiled' or 'fallback'"
    )


def _c1(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def single_outcomes(logw, b, eps):
    return _impl.single_outcomes(_c1(logw), _c1(b), _c1(eps))


def topk_outcomes(logw, b, eps, k):
    return _impl.topk_outcomes(_c1(logw), _c1(b), _c1(eps), int(k))


def session_without_replacement(logw, eps, b):
    return _impl.session_without_replacement(_c1(logw), _c1(eps), _c1(b))


def rival_kth_logscore(logw, eps, i, k):
    return _impl.rival_kth_logscore(_c1(logw), _c1(eps), int(i), int(k))


def argmax_scores(logw, eps):
    return _impl.argmax_scores(_c1(logw), _c1(eps))
