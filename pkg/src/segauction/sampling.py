"""Randomness: named substreams and Gumbel perturbations.

Every random quantity in the package flows through a counter-based Philox
generator derived from (root seed, path).  The convention is trial-major:
the auction in trial j, segment t draws from stream(seed, j, t).  Streams
for different paths are statistically independent and reproducible across
platforms and process boundaries, which is what makes parallel experiment
runs byte-identical to serial ones.
"""

from __future__ import annotations

import numpy as np

__all__ = ["stream", "RngStream", "gumbel_draw", "gumbel_matrix", "perturbed_scores"]

#: Smallest positive normal double; uniforms are clamped here before the
#: double log so a draw of u == 0 cannot produce an infinite Gumbel value.
_TINY = float(np.finfo(np.float64).tiny)


def stream(seed: int, *path: int) -> np.random.Generator:
    """A fresh generator for the given derivation path.

    stream(seed) is the root; stream(seed, j, t) is trial j, segment t.
    """

    ss = np.random.SeedSequence(seed, spawn_key=tuple(path))
    return np.random.Generator(np.random.Philox(ss))


class RngStream:
    """Convenience wrapper remembering the root seed.

    >>> rs = RngStream(7)
    >>> g = rs.segment(trial=0, segment=2)
    """

    def __init__(self, seed: int):
        self.seed = int(seed)

    def root(self) -> np.random.Generator:
        return stream(self.seed)

    def segment(self, trial: int, segment: int) -> np.random.Generator:
        return stream(self.seed, trial, segment)

    def named(self, *path: int) -> np.random.Generator:
        return stream(self.seed, *path)


def gumbel_draw(rng: np.random.Generator, size=None) -> np.ndarray | float:
    """Standard Gumbel(0, 1) noise via the inverse CDF, always finite.

    Computed as -log(-log u) with u uniform on [tiny, 1), so the result
    lies in roughly [-6.6, 36.8] and never overflows downstream exp calls.
    """

    u = rng.random(size)
    u = np.maximum(u, _TINY)
    return -np.log(-np.log(u))


def gumbel_matrix(rng: np.random.Generator, draws: int, n: int) -> np.ndarray:
    """(draws, n) matrix of independent Gumbel(0, 1) perturbations."""

    return gumbel_draw(rng, (draws, n))


def perturbed_scores(q: np.ndarray, b: np.ndarray, eps: np.ndarray) -> np.ndarray:
    """Linear-domain perturbed scores q * b * exp(eps).

    Zero-weight candidates score exactly 0 regardless of their noise; they
    can win only if nothing has positive weight, which callers treat as an
    error.  Comparisons elsewhere happen in the log domain; this form exists
    for records and display.
    """

    q = np.asarray(q, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    w = q * b
    out = np.zeros(np.broadcast(w, eps).shape, dtype=np.float64)
    np.multiply(w, np.exp(eps), out=out, where=w > 0)
    return out


def log_weights(q: np.ndarray, b: np.ndarray) -> np.ndarray:
    """log(q * b) with -inf for zero-weight candidates."""

    w = np.asarray(q, dtype=np.float64) * np.asarray(b, dtype=np.float64)
    with np.errstate(divide="ignore"):
        return np.log(w)
