"""Polar codes: Bhattacharyya construction, Arikan encoding, SC-list decoding.

The transform is ``x = u F^{(x)n}`` with ``F = [[1, 0], [1, 1]]`` in natural
(non bit-reversed) order. The decoder is vectorised over a batch of
codewords and over the list dimension.
"""

from __future__ import annotations

import numpy as np


class PolarCode:
    """Polar code of length ``n`` with a given frozen set.

    Attributes:
        n: block length (power of two).
        frozen: sorted frozen positions of ``u``.
        info_positions: sorted non-frozen positions of ``u``.
        k: message length.
    """

    def __init__(self, n: int, frozen_set):
        if n < 2 or n & (n - 1):
            raise ValueError(f"n must be a power of two >= 2, got {n}")
        frozen = np.unique(np.asarray(list(frozen_set), dtype=np.int64))
        if frozen.size and (frozen[0] < 0 or frozen[-1] >= n):
            raise ValueError("frozen index out of range")
        self.n = n
        self.frozen = frozen
        self.frozen_mask = np.zeros(n, dtype=bool)
        self.frozen_mask[frozen] = True
        self.info_positions = np.nonzero(~self.frozen_mask)[0]
        self.k = self.info_positions.size

    @property
    def rate(self) -> float:
        return self.k / self.n

    def encode(self, msg: np.ndarray) -> np.ndarray:
        msg = np.asarray(msg)
        if msg.shape[-1] != self.k:
            raise ValueError(f"message length must be {self.k}, got {msg.shape[-1]}")
        u = np.zeros(msg.shape[:-1] + (self.n,), dtype=np.int8)
        u[..., self.info_positions] = msg
        return polar_transform(u)

    def decode(self, llr: np.ndarray, list_size: int = 8) -> np.ndarray:
        """Decode L-values (positive favours bit 1) into message bits.

        ``list_size=1`` is plain successive cancellation. No CRC is used, so
        the surviving path with the best metric is returned.
        """
        llr = np.asarray(llr, dtype=float)
        if llr.shape[-1] != self.n:
            raise ValueError(f"decoder input length must be {self.n}, got {llr.shape[-1]}")
        single = llr.ndim == 1
        u = _SclDecoder(self.frozen_mask, list_size).run(-llr.reshape(-1, self.n))
        msg = u[:, self.info_positions]
        return msg[0] if single else msg


def polar_transform(u: np.ndarray) -> np.ndarray:
    x = np.array(u, dtype=np.int8, copy=True)
    n = x.shape[-1]
    lead = x.shape[:-1]
    half = 1
    while half < n:
        v = x.reshape(lead + (n // (2 * half), 2, half))
        v[..., 0, :] ^= v[..., 1, :]
        half *= 2
    return x


def polar_construct(n: int, k: int, design_snr_db: float = 3.0) -> PolarCode:
    """Freeze the ``n - k`` least reliable positions.

    Raises:
        ValueError: if ``k > n`` or ``k < 0``.
    """
    if not 0 <= k <= n:
        raise ValueError(f"need 0 <= k <= n, got k={k}, n={n}")
    logz = bhattacharyya_log_z(n, design_snr_db)
    order = np.argsort(-logz, kind="stable")  # least reliable first
    return PolarCode(n, np.sort(order[: n - k]))


def bhattacharyya_log_z(n: int, design_snr_db: float) -> np.ndarray:
    """Log-Bhattacharyya parameter of each bit channel (smaller is more reliable).

    The mother channel is BPSK over AWGN at ``Es/N0 = design_snr_db``. Under
    the natural-order transform the first half of ``u`` sees the degraded
    channel ``2Z - Z^2`` and the second half the upgraded channel ``Z^2``.
    """
    if n < 1 or n & (n - 1):
        raise ValueError(f"n must be a power of two, got {n}")

    def rec(logz: float, size: int) -> np.ndarray:
        if size == 1:
            return np.array([logz])
        worse = np.log(2.0) + logz + np.log1p(-np.exp(logz) / 2.0)
        better = 2.0 * logz
        return np.concatenate([rec(worse, size // 2), rec(better, size // 2)])

    return rec(-(10.0 ** (design_snr_db / 10.0)), n)


def read_frozen_set(text: str) -> list[int]:
    return [int(tok) for tok in text.split()]


def format_frozen_set(frozen) -> str:
    return "".join(f"{int(i)}\n" for i in frozen)


def _boxplus_minsum(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.sign(a) * np.sign(b) * np.minimum(np.abs(a), np.abs(b))


class _SclDecoder:
    """One decoding pass over a batch; ``alpha`` LLRs are log P(0)/P(1)."""

    def __init__(self, frozen_mask: np.ndarray, list_size: int):
        if list_size < 1:
            raise ValueError("list_size must be >= 1")
        self.frozen = frozen_mask
        self.L = list_size

    def run(self, alpha: np.ndarray) -> np.ndarray:
        B, n = alpha.shape
        L = self.L
        self.pm = np.full((B, L), np.inf)
        self.pm[:, 0] = 0.0
        self.u = np.zeros((B, L, n), dtype=np.int8)
        self.rows = np.arange(B)[:, None]
        root = np.broadcast_to(alpha[:, None, :], (B, L, n))
        self._node(root, 0)
        best = np.argmin(self.pm, axis=1)
        return self.u[np.arange(B), best]

    def _gather(self, arr: np.ndarray, perm: np.ndarray) -> np.ndarray:
        return arr[self.rows, perm]

    def _node(self, alpha: np.ndarray, offset: int):
        """Decode the subtree rooted at ``alpha``; returns ``(beta, perm)``."""
        N = alpha.shape[-1]
        if N == 1:
            return self._leaf(alpha[..., 0], offset)
        h = N // 2
        a, b = alpha[..., :h], alpha[..., h:]
        beta_l, perm1 = self._node(_boxplus_minsum(a, b), offset)
        if perm1 is not None:
            a, b = self._gather(a, perm1), self._gather(b, perm1)
        beta_r, perm2 = self._node(b + (1 - 2 * beta_l) * a, offset + h)
        if perm2 is not None:
            beta_l = self._gather(beta_l, perm2)
        beta = np.concatenate([beta_l ^ beta_r, beta_r], axis=-1)
        if perm1 is None:
            perm = perm2
        elif perm2 is None:
            perm = perm1
        else:
            perm = self._gather(perm1, perm2)
        return beta, perm

    def _leaf(self, alpha: np.ndarray, i: int):
        B, L = alpha.shape
        if self.frozen[i]:
            self.pm = self.pm + np.logaddexp(0.0, -alpha)
            return np.zeros((B, L, 1), dtype=np.int8), None
        pen0 = np.logaddexp(0.0, -alpha)
        pen1 = np.logaddexp(0.0, alpha)
        cand = np.stack([self.pm + pen0, self.pm + pen1], axis=-1).reshape(B, 2 * L)
        chosen = np.argsort(cand, axis=1, kind="stable")[:, :L]
        parent = chosen // 2
        bit = (chosen % 2).astype(np.int8)
        self.pm = np.take_along_axis(cand, chosen, axis=1)
        self.u = self._gather(self.u, parent)
        self.u[:, :, i] = bit
        return bit[..., None], parent
