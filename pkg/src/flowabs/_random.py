"""Seed derivation and sampling primitives.

All randomness comes from :class:`numpy.random.Philox`, a 64-bit
counter-based generator (Philox4x64-10). A root seed is split into
independent streams with :class:`numpy.random.SeedSequence`, using the
task labels as the spawn key. String labels are mapped to integers with
CRC-32 so the derivation is stable across processes and platforms.
"""
import zlib

import numpy as np
from scipy.stats import qmc


def _label_to_int(label):
    if isinstance(label, (int, np.integer)):
        return int(label) & 0xFFFFFFFF
    if isinstance(label, float):
        return zlib.crc32(repr(label).encode())
    if isinstance(label, tuple):
        return zlib.crc32(repr(label).encode())
    return zlib.crc32(str(label).encode())


def derive_seed(root, *labels):
    """Return a :class:`SeedSequence` for the stream named by ``labels``."""
    return np.random.SeedSequence(int(root), spawn_key=tuple(_label_to_int(l) for l in labels))


def make_rng(root, *labels):
    """Philox-backed generator for the stream ``(root, *labels)``."""
    return np.random.Generator(np.random.Philox(derive_seed(root, *labels)))


def quasi_uniform(n, lower, upper, rng):
    """``n`` points in the box ``[lower, upper]``.

    The first half comes from a scrambled Halton sequence, the second half
    from uniform draws, both driven by ``rng``.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    d = lower.size
    n_qmc = (n + 1) // 2
    halton = qmc.Halton(d=d, scramble=True, seed=rng)
    unit = np.vstack([halton.random(n_qmc), rng.random((n - n_qmc, d))])
    return lower + unit * (upper - lower)


def unit_ball(n, d, rng):
    """Uniform samples in the open Euclidean unit ball of dimension ``d``."""
    g = rng.standard_normal((n, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = rng.random(n) ** (1.0 / d)
    return g * r[:, None]
