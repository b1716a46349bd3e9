"""Binary LDPC codes: alist I/O, systematic encoding and sum-product decoding.

Decoder inputs use the package-wide convention that a positive L-value
favours bit 1.
"""

from __future__ import annotations

from importlib import resources

import numpy as np
from numba import njit

from ..modem import L_MAX


class AlistError(ValueError):
    """Malformed alist text."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


# IEEE 802.11n, n = 648, R = 1/2, Z = 27 (-1 marks an all-zero block)
WIFI_648_R12_BASE = np.array([
    [0, -1, -1, -1, 0, 0, -1, -1, 0, -1, -1, 0, 1, 0, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [22, 0, -1, -1, 17, -1, 0, 0, 12, -1, -1, -1, -1, 0, 0, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [6, -1, 0, -1, 10, -1, -1, -1, 24, -1, 0, -1, -1, -1, 0, 0, -1, -1, -1, -1, -1, -1, -1, -1],
    [2, -1, -1, 0, 20, -1, -1, -1, 25, 0, -1, -1, -1, -1, -1, 0, 0, -1, -1, -1, -1, -1, -1, -1],
    [23, -1, -1, -1, 3, -1, -1, -1, 0, -1, 9, 11, -1, -1, -1, -1, 0, 0, -1, -1, -1, -1, -1, -1],
    [24, -1, 23, 1, 17, -1, 3, -1, 10, -1, -1, -1, -1, -1, -1, -1, -1, 0, 0, -1, -1, -1, -1, -1],
    [25, -1, -1, -1, 8, -1, -1, -1, 7, 18, -1, -1, 0, -1, -1, -1, -1, -1, 0, 0, -1, -1, -1, -1],
    [13, 24, -1, -1, 0, -1, 8, -1, 6, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, 0, 0, -1, -1, -1],
    [7, 20, -1, 16, 22, 10, -1, -1, 23, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, 0, 0, -1, -1],
    [11, -1, -1, -1, 19, -1, -1, -1, 13, -1, 3, 17, -1, -1, -1, -1, -1, -1, -1, -1, -1, 0, 0, -1],
    [25, -1, 8, -1, 23, 18, -1, 14, 9, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, 0, 0],
    [3, -1, -1, -1, 16, -1, -1, 2, 25, 5, -1, -1, 1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, 0],
])


def expand_base_matrix(base: np.ndarray, z: int) -> np.ndarray:
    """Expand a quasi-cyclic base matrix into a dense 0/1 parity-check matrix."""
    mb, nb = base.shape
    H = np.zeros((mb * z, nb * z), dtype=np.uint8)
    eye = np.eye(z, dtype=np.uint8)
    for i in range(mb):
        for j in range(nb):
            s = base[i, j]
            if s >= 0:
                H[i * z:(i + 1) * z, j * z:(j + 1) * z] = np.roll(eye, s, axis=1)
    return H


def gf2_rref(A: np.ndarray):
    """Reduced row echelon form over GF(2); returns ``(R, pivot_columns)``."""
    R = A.astype(np.uint8).copy()
    rows, cols = R.shape
    pivots = []
    r = 0
    for c in range(cols):
        if r == rows:
            break
        hits = np.nonzero(R[r:, c])[0]
        if hits.size == 0:
            continue
        p = r + hits[0]
        if p != r:
            R[[r, p]] = R[[p, r]]
        mask = R[:, c].astype(bool)
        mask[r] = False
        R[mask] ^= R[r]
        pivots.append(c)
        r += 1
    return R[:r], np.array(pivots, dtype=np.int64)


class LdpcCode:
    """LDPC code defined by a sparse parity-check matrix.

    Attributes:
        H: dense ``(m, n)`` uint8 parity-check matrix.
        n: codeword length.
        k: message length, ``n - rank(H)``.
        info_positions: codeword positions carrying the message, in order.
    """

    def __init__(self, H: np.ndarray):
        H = np.asarray(H, dtype=np.uint8)
        if H.ndim != 2 or not np.all((H == 0) | (H == 1)):
            raise ValueError("H must be a 0/1 matrix")
        self.H = H
        self.m, self.n = H.shape
        # eliminate from the right so standard codes keep message bits first
        R, piv = gf2_rref(H[:, ::-1])
        R = R[:, ::-1]
        pivots = np.sort(self.n - 1 - piv)
        order = np.argsort(self.n - 1 - piv)
        R = R[order]
        self.parity_positions = pivots
        self.info_positions = np.setdiff1d(np.arange(self.n), pivots)
        self.k = self.info_positions.size
        # parity[j] = sum_i R[j, info_i] * msg_i  (R restricted to pivots is I)
        self._parity_map = R[:, self.info_positions].T.astype(np.int64)

        checks, vars_ = np.nonzero(H)  # row-major: sorted by check
        self.edge_check = checks
        self.edge_var = vars_
        self._check_degrees = np.bincount(checks, minlength=self.m)
        self._check_starts = np.r_[0, np.cumsum(self._check_degrees)[:-1]]
        self._var_order = np.argsort(vars_, kind="stable")
        var_counts = np.bincount(vars_, minlength=self.n)
        self._var_starts = np.r_[0, np.cumsum(var_counts)[:-1]]
        self._var_ptr = np.r_[0, np.cumsum(var_counts)].astype(np.int64)
        self._check_ptr = np.r_[0, np.cumsum(self._check_degrees)].astype(np.int64)
        if np.any(var_counts == 0) or np.any(np.bincount(checks, minlength=self.m) == 0):
            raise ValueError("H has an empty row or column")

    @property
    def rate(self) -> float:
        return self.k / self.n

    def encode(self, msg: np.ndarray) -> np.ndarray:
        """Systematic encoding of ``(k,)`` or ``(B, k)`` message bits."""
        msg = np.asarray(msg)
        if msg.shape[-1] != self.k:
            raise ValueError(f"message length must be {self.k}, got {msg.shape[-1]}")
        lead = msg.shape[:-1]
        msg2 = msg.reshape(-1, self.k).astype(np.int64)
        cw = np.zeros((msg2.shape[0], self.n), dtype=np.int8)
        cw[:, self.info_positions] = msg2
        cw[:, self.parity_positions] = (msg2 @ self._parity_map) & 1
        return cw.reshape(lead + (self.n,))

    def extract_message(self, codeword: np.ndarray) -> np.ndarray:
        return np.asarray(codeword)[..., self.info_positions]

    def syndrome(self, codeword: np.ndarray) -> np.ndarray:
        cw = np.asarray(codeword).astype(np.int64)
        return (cw @ self.H.T.astype(np.int64)) & 1

    def decode_bp(self, llr: np.ndarray, max_iter: int = 50):
        """Sum-product belief propagation with syndrome-based early stopping.

        Args:
            llr: channel L-values, shape ``(n,)`` or ``(B, n)``; positive
                values favour bit 1.
            max_iter: maximum number of flooding iterations.

        Returns:
            ``(bits, converged)`` hard decisions and per-codeword flags telling
            whether the final decisions satisfy every parity check.
        """
        llr = np.asarray(llr, dtype=float)
        if llr.shape[-1] != self.n:
            raise ValueError(f"decoder input length must be {self.n}, got {llr.shape[-1]}")
        single = llr.ndim == 1
        # the kernel works on log P(0)/P(1)
        ch = np.ascontiguousarray(-llr.reshape(-1, self.n))
        bits, converged = _bp_kernel(
            ch, self._check_ptr, self.edge_var, self._var_ptr, self._var_order, int(max_iter), L_MAX
        )
        if single:
            return bits[0], bool(converged[0])
        return bits, converged

    def decode_bp_vectorized(self, llr: np.ndarray, max_iter: int = 50):
        """Same decoder as :meth:`decode_bp`, vectorised over the batch in numpy.

        Slower; kept as an independent cross-check of the compiled kernel.
        """
        llr = np.asarray(llr, dtype=float)
        if llr.shape[-1] != self.n:
            raise ValueError(f"decoder input length must be {self.n}, got {llr.shape[-1]}")
        single = llr.ndim == 1
        # internal messages use log P(0)/P(1); edge-major layout (E, B)
        ch = -np.clip(llr.reshape(-1, self.n), -L_MAX, L_MAX)
        bits = (ch < 0).astype(np.int8)
        converged = ~self.syndrome(bits).any(axis=1)
        active = np.nonzero(~converged)[0]
        ch_t = np.ascontiguousarray(ch[active].T)
        c2v = np.zeros((self.edge_var.size, active.size))
        it = 0
        while active.size and it < max_iter:
            it += 1
            v2c = (ch_t + self._var_sum(c2v))[self.edge_var] - c2v
            c2v = self._check_update(v2c)
            post = ch_t + self._var_sum(c2v)
            hard = (post.T < 0).astype(np.int8)
            bits[active] = hard
            ok = ~self.syndrome(hard).any(axis=1)
            converged[active[ok]] = True
            if ok.any():
                keep = ~ok
                active = active[keep]
                ch_t = np.ascontiguousarray(ch_t[:, keep])
                c2v = np.ascontiguousarray(c2v[:, keep])
        if single:
            return bits[0], bool(converged[0])
        return bits, converged

    def _var_sum(self, msgs: np.ndarray) -> np.ndarray:
        return np.add.reduceat(msgs[self._var_order], self._var_starts, axis=0)

    def _check_update(self, v2c: np.ndarray) -> np.ndarray:
        t = np.tanh(np.clip(v2c, -L_MAX, L_MAX) / 2.0)
        neg = t < 0
        logmag = np.log(np.maximum(np.abs(t), 1e-300))
        row_log = np.add.reduceat(logmag, self._check_starts, axis=0)
        row_neg = np.add.reduceat(neg.view(np.int8), self._check_starts, axis=0, dtype=np.int64)
        ext_log = np.repeat(row_log, self._check_degrees, axis=0) - logmag
        flip = ((np.repeat(row_neg, self._check_degrees, axis=0) - neg) & 1).astype(bool)
        out = 2.0 * np.arctanh(np.minimum(np.exp(ext_log), 1.0 - 1e-15))
        np.negative(out, out=out, where=flip)
        return np.clip(out, -L_MAX, L_MAX, out=out)


def parse_alist(text: str) -> np.ndarray:
    """Parse alist text into a dense parity-check matrix.

    Raises:
        AlistError: with the offending (1-based) line number.
    """
    lines = [(i + 1, ln.split()) for i, ln in enumerate(text.splitlines())]
    lines = [(no, toks) for no, toks in lines if toks]
    pos = 0

    def ints(expected=None):
        nonlocal pos
        if pos >= len(lines):
            raise AlistError("unexpected end of file", (lines[-1][0] + 1) if lines else 1)
        no, toks = lines[pos]
        pos += 1
        try:
            vals = [int(t) for t in toks]
        except ValueError:
            raise AlistError(f"non-integer token in {' '.join(toks)!r}", no) from None
        if expected is not None and len(vals) < expected:
            raise AlistError(f"expected {expected} integers, got {len(vals)}", no)
        return no, vals

    no, hdr = ints(2)
    n, m = hdr[0], hdr[1]
    if n <= 0 or m <= 0:
        raise AlistError("dimensions must be positive", no)
    ints(2)  # max column / row weights
    _, col_w = ints(n)
    _, row_w = ints(m)
    H = np.zeros((m, n), dtype=np.uint8)
    for j in range(n):
        no, vals = ints()
        nz = [v for v in vals if v != 0]
        if len(nz) != col_w[j]:
            raise AlistError(f"column {j + 1} lists {len(nz)} entries, weight says {col_w[j]}", no)
        for v in nz:
            if not 1 <= v <= m:
                raise AlistError(f"row index {v} out of range", no)
            H[v - 1, j] = 1
    for i in range(m):
        no, vals = ints()
        nz = [v for v in vals if v != 0]
        if len(nz) != row_w[i]:
            raise AlistError(f"row {i + 1} lists {len(nz)} entries, weight says {row_w[i]}", no)
        if sorted(np.nonzero(H[i])[0] + 1) != sorted(nz):
            raise AlistError(f"row {i + 1} disagrees with column lists", no)
    return H


def format_alist(H: np.ndarray) -> str:
    H = np.asarray(H)
    m, n = H.shape
    cols = [np.nonzero(H[:, j])[0] + 1 for j in range(n)]
    rows = [np.nonzero(H[i])[0] + 1 for i in range(m)]
    out = [f"{n} {m}", f"{max(map(len, cols))} {max(map(len, rows))}"]
    out.append(" ".join(str(len(c)) for c in cols))
    out.append(" ".join(str(len(r)) for r in rows))
    out += [" ".join(map(str, c)) for c in cols]
    out += [" ".join(map(str, r)) for r in rows]
    return "\n".join(out) + "\n"


def ldpc_load(alist_text: str) -> LdpcCode:
    return LdpcCode(parse_alist(alist_text))


def wifi_648_r12() -> LdpcCode:
    """The IEEE 802.11n (648, 324) code shipped with the package."""
    text = resources.files("llrquant.coding").joinpath("data/wifi_648_r12.alist").read_text()
    return ldpc_load(text)


@njit(cache=True)
def _parity_ok(bits, check_ptr, edge_var):
    for c in range(check_ptr.size - 1):
        s = 0
        for e in range(check_ptr[c], check_ptr[c + 1]):
            s ^= bits[edge_var[e]]
        if s:
            return False
    return True


@njit(cache=True)
def _bp_kernel(ch_all, check_ptr, edge_var, var_ptr, var_edges, max_iter, l_max):
    # Flooding sum-product; edges are ordered by check, var_edges lists each
    # variable's edges. Check update uses forward/backward tanh products.
    B, n = ch_all.shape
    E = edge_var.size
    m = check_ptr.size - 1
    bits = np.zeros((B, n), np.int8)
    converged = np.zeros(B, np.bool_)
    c2v = np.zeros(E)
    v2c = np.zeros(E)
    t = np.zeros(E)
    deg_max = 0
    for c in range(m):
        deg_max = max(deg_max, check_ptr[c + 1] - check_ptr[c])
    fw = np.zeros(deg_max)
    bw = np.zeros(deg_max)
    q_max = 1.0 - 1e-15
    for b in range(B):
        ch = ch_all[b]
        for v in range(n):
            x = min(max(ch[v], -l_max), l_max)
            ch[v] = x
            bits[b, v] = 1 if x < 0 else 0
        for e in range(E):
            c2v[e] = 0.0
            v2c[e] = ch[edge_var[e]]
        ok = _parity_ok(bits[b], check_ptr, edge_var)
        it = 0
        while not ok and it < max_iter:
            it += 1
            for c in range(m):
                a = check_ptr[c]
                d = check_ptr[c + 1] - a
                p = 1.0
                for j in range(d):
                    x = min(max(v2c[a + j], -l_max), l_max)
                    ex = np.exp(-abs(x))
                    tv = (1.0 - ex) / (1.0 + ex)  # tanh(|x|/2)
                    t[a + j] = tv if x >= 0 else -tv
                    fw[j] = p
                    p *= t[a + j]
                p = 1.0
                for j in range(d - 1, -1, -1):
                    bw[j] = p
                    p *= t[a + j]
                for j in range(d):
                    q = min(max(fw[j] * bw[j], -q_max), q_max)
                    c2v[a + j] = min(max(np.log((1.0 + q) / (1.0 - q)), -l_max), l_max)
            for v in range(n):
                s = ch[v]
                for i in range(var_ptr[v], var_ptr[v + 1]):
                    s += c2v[var_edges[i]]
                bits[b, v] = 1 if s < 0 else 0
                for i in range(var_ptr[v], var_ptr[v + 1]):
                    e = var_edges[i]
                    v2c[e] = s - c2v[e]
            ok = _parity_ok(bits[b], check_ptr, edge_var)
        converged[b] = ok
    return bits, converged
