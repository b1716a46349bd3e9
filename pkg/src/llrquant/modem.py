"""Gray-coded square QAM mapping and soft demapping.

L-values follow the convention ``L = log P(y | b=1) / P(y | b=0)``, so a
positive value favours bit 1. Bits ``0 .. K/2-1`` label the in-phase PAM
coordinate (MSB first, binary reflected Gray code) and bits ``K/2 .. K-1``
the quadrature coordinate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

L_MAX = 40.0
SOFT_BIT_DELTA = 1e-12

# rows per chunk when evaluating distance tables
_CHUNK = 1 << 15


def gray_code(m: int) -> np.ndarray:
    """Binary reflected Gray code sequence of length ``2**m``."""
    i = np.arange(1 << m, dtype=np.int64)
    return i ^ (i >> 1)


def _int_to_bits(values: np.ndarray, width: int) -> np.ndarray:
    shifts = np.arange(width - 1, -1, -1)
    return ((np.asarray(values)[..., None] >> shifts) & 1).astype(np.int8)


@dataclass(frozen=True, eq=False)
class Constellation:
    """Square Gray-labelled QAM constellation with unit average energy.

    ``points[s]`` is the symbol whose label, read MSB first, is the integer
    ``s``; ``labels[s]`` holds those ``K`` bits.
    """

    K: int
    points: np.ndarray
    labels: np.ndarray
    pam_levels: np.ndarray
    pam_labels: np.ndarray

    @property
    def M(self) -> int:
        return 1 << self.K

    @property
    def half(self) -> int:
        return self.K // 2


def build_constellation(K: int) -> Constellation:
    """Build the ``2**K``-QAM constellation as a product of two BRGC PAMs.

    Raises:
        ValueError: if ``K`` is odd or outside ``[2, 12]``.
    """
    if isinstance(K, bool) or int(K) != K or K % 2 or not 2 <= K <= 12:
        raise ValueError(f"K must be an even integer in [2, 12], got {K!r}")
    K = int(K)
    m = K // 2
    n_levels = 1 << m
    # amplitude index i (ascending) carries the Gray label gray(i)
    amp = np.arange(-(n_levels - 1), n_levels, 2, dtype=float)
    scale = np.sqrt(2.0 * (n_levels**2 - 1) / 3.0)
    pam_levels = amp / scale
    pam_labels = _int_to_bits(gray_code(m), m)

    # inverse map: PAM label integer -> amplitude index
    inv = np.empty(n_levels, dtype=np.int64)
    inv[gray_code(m)] = np.arange(n_levels)

    s = np.arange(1 << K)
    re_idx = inv[s >> m]
    im_idx = inv[s & (n_levels - 1)]
    points = pam_levels[re_idx] + 1j * pam_levels[im_idx]
    labels = _int_to_bits(s, K)
    for arr in (points, labels, pam_levels, pam_labels):
        arr.setflags(write=False)
    return Constellation(K, points, labels, pam_levels, pam_labels)


def bits_to_indices(bits: np.ndarray, K: int) -> np.ndarray:
    bits = np.asarray(bits)
    if bits.shape[-1] != K:
        raise ValueError(f"expected trailing dimension {K}, got {bits.shape[-1]}")
    weights = 1 << np.arange(K - 1, -1, -1)
    return (bits.astype(np.int64) * weights).sum(axis=-1)


def map_bits(bits: np.ndarray, c: Constellation) -> np.ndarray:
    """Map bit vectors (trailing dimension ``K``) to complex symbols."""
    return c.points[bits_to_indices(bits, c.K)]


def demap_hard(y: np.ndarray, c: Constellation) -> np.ndarray:
    """Nearest-point hard decision, returned as bit vectors."""
    y = np.asarray(y, dtype=complex)
    idx = np.argmin(np.abs(y[..., None] - c.points), axis=-1)
    return c.labels[idx]


def sufficient_stats(y, h, sigma2):
    """Return ``(G, y_r, y_i)`` with ``G = |h|^2 / sigma2`` and ``y/h`` split.

    Raises:
        ValueError: if any ``h`` is zero or ``sigma2`` is not positive.
    """
    y = np.asarray(y, dtype=complex)
    h = np.asarray(h, dtype=complex)
    sigma2 = np.asarray(sigma2, dtype=float)
    if np.any(h == 0):
        raise ValueError("channel coefficient h must be nonzero")
    if np.any(~(sigma2 > 0)):
        raise ValueError("noise variance sigma2 must be positive")
    G = np.abs(h) ** 2 / sigma2
    yeq = y / h
    return G, yeq.real, yeq.imag


def _axis_llr(G: np.ndarray, coord: np.ndarray, c: Constellation, maxlog: bool) -> np.ndarray:
    # For square QAM the metric separates per axis, so the terms of the
    # other axis are common to numerator and denominator and cancel.
    out = np.empty(coord.shape + (c.half,))
    ones = c.pam_labels.astype(bool)
    for start in range(0, coord.shape[0], _CHUNK):
        sl = slice(start, start + _CHUNK)
        metric = -G[sl, None] * (coord[sl, None] - c.pam_levels) ** 2
        for k in range(c.half):
            num = metric[:, ones[:, k]]
            den = metric[:, ~ones[:, k]]
            if maxlog:
                out[sl, k] = num.max(axis=1) - den.max(axis=1)
            else:
                nmax = num.max(axis=1)
                dmax = den.max(axis=1)
                out[sl, k] = (
                    nmax
                    + np.log(np.exp(num - nmax[:, None]).sum(axis=1))
                    - dmax
                    - np.log(np.exp(den - dmax[:, None]).sum(axis=1))
                )
    return out


def llr_from_stats(G, y_r, y_i, c: Constellation, maxlog: bool = False) -> np.ndarray:
    """L-values from the sufficient statistics; output shape ``(..., K)``."""
    G, y_r, y_i = np.broadcast_arrays(
        np.asarray(G, dtype=float), np.asarray(y_r, dtype=float), np.asarray(y_i, dtype=float)
    )
    if np.any(G < 0):
        raise ValueError("G must be nonnegative")
    shape = G.shape
    G, y_r, y_i = G.ravel(), y_r.ravel(), y_i.ravel()
    llr = np.concatenate(
        [_axis_llr(G, y_r, c, maxlog), _axis_llr(G, y_i, c, maxlog)], axis=-1
    )
    np.clip(llr, -L_MAX, L_MAX, out=llr)
    return llr.reshape(shape + (c.K,))


def llr_exact(y, h, sigma2, c: Constellation) -> np.ndarray:
    """Exact L-values of every bit of ``y = h x + n``, clipped to ``±L_MAX``.

    Args:
        y: received symbols, any shape.
        h: channel coefficients, broadcastable against ``y``.
        sigma2: noise variance ``E|n|^2``, broadcastable against ``y``.
        c: constellation used at the transmitter.

    Returns:
        Array of shape ``y.shape + (K,)``.
    """
    return llr_from_stats(*sufficient_stats(y, h, sigma2), c)


def llr_maxlog(y, h, sigma2, c: Constellation) -> np.ndarray:
    """Max-log approximation of :func:`llr_exact`."""
    return llr_from_stats(*sufficient_stats(y, h, sigma2), c, maxlog=True)


def to_soft_bits(L) -> np.ndarray:
    """``tanh(L/2)``, kept strictly inside ``(-1, 1)``."""
    bound = 1.0 - SOFT_BIT_DELTA
    return np.clip(np.tanh(np.asarray(L, dtype=float) / 2.0), -bound, bound)


def from_soft_bits(soft) -> np.ndarray:
    bound = 1.0 - SOFT_BIT_DELTA
    return 2.0 * np.arctanh(np.clip(np.asarray(soft, dtype=float), -bound, bound))
