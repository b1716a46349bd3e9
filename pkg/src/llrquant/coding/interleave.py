"""Seeded random-but-fixed bit interleaver."""

import numpy as np


def permutation(length: int, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).permutation(length)


def interleave(bits: np.ndarray, seed: int) -> np.ndarray:
    """Permute the last axis of ``bits`` with a permutation fixed by ``seed``."""
    bits = np.asarray(bits)
    return bits[..., permutation(bits.shape[-1], seed)]


def deinterleave(values: np.ndarray, seed: int) -> np.ndarray:
    """Inverse of :func:`interleave` (works on bits or L-values)."""
    values = np.asarray(values)
    perm = permutation(values.shape[-1], seed)
    out = np.empty_like(values)
    out[..., perm] = values
    return out
