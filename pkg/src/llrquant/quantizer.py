"""Scalar codebooks for the latent space and the MMI L-value quantizer baseline."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .modem import L_MAX


@dataclass(frozen=True, eq=False)
class ScalarCodebook:
    """Sorted reconstruction levels of a ``bits``-bit scalar quantizer."""

    levels: np.ndarray
    bits: int

    def __post_init__(self):
        levels = np.asarray(self.levels, dtype=float)
        if levels.ndim != 1 or levels.size != 1 << self.bits:
            raise ValueError(f"expected {1 << self.bits} levels, got {levels.size}")
        if np.any(np.diff(levels) <= 0):
            raise ValueError("codebook levels must be strictly increasing")
        object.__setattr__(self, "levels", levels)

    @property
    def boundaries(self) -> np.ndarray:
        return (self.levels[:-1] + self.levels[1:]) / 2.0

    def indices(self, x) -> np.ndarray:
        """Nearest-level indices; exact midpoints go to the lower level."""
        return np.searchsorted(self.boundaries, np.asarray(x, dtype=float), side="left")

    def quantize(self, x) -> np.ndarray:
        return self.levels[self.indices(x)]

    def distortion(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(np.mean((x - self.quantize(x)) ** 2))


@dataclass
class KMeansResult:
    codebook: ScalarCodebook
    refine_distortion: list = field(default_factory=list)


def _kmeanspp_1d(x, k, rng):
    centers = [x[rng.integers(x.size)]]
    d2 = (x - centers[0]) ** 2
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            break
        c = x[rng.choice(x.size, p=d2 / total)]
        centers.append(c)
        d2 = np.minimum(d2, (x - c) ** 2)
    return np.sort(np.array(centers))


def _assign(x, centers):
    mids = (centers[:-1] + centers[1:]) / 2.0
    return np.searchsorted(mids, x, side="left")


def kmeans_fit(samples, bits: int, minibatch_size: int = 4096, iterations: int = 200,
               refine_passes: int = 10, seed: int = 0, init_sample: int = 20000) -> KMeansResult:
    """Fit a ``2**bits``-level scalar codebook with mini-batch k-means.

    Centres start from k-means++ seeding on a random subsample, follow
    ``iterations`` mini-batch updates with per-centre ``1/count`` learning
    rates, then ``refine_passes`` full-batch Lloyd passes. The mean squared
    distortion after each Lloyd pass is returned in ``refine_distortion``.

    Raises:
        ValueError: if the samples hold fewer than ``2**bits`` distinct values.
    """
    x = np.asarray(samples, dtype=float).ravel()
    k = 1 << bits
    if bits < 0:
        raise ValueError("bits must be nonnegative")
    distinct = np.unique(x)
    if distinct.size < k:
        raise ValueError(f"need at least {k} distinct samples, got {distinct.size}")
    if k == 1:
        cb = ScalarCodebook(np.array([x.mean()]), 0)
        return KMeansResult(cb, [cb.distortion(x)])
    if distinct.size == k:
        cb = ScalarCodebook(distinct, bits)
        return KMeansResult(cb, [cb.distortion(x)])

    rng = np.random.default_rng(seed)
    pool = x if x.size <= init_sample else x[rng.choice(x.size, init_sample, replace=False)]
    centers = _kmeanspp_1d(pool, k, rng)
    if centers.size < k:
        # degenerate subsample; fall back to spread quantiles of the distinct values
        centers = distinct[np.linspace(0, distinct.size - 1, k).round().astype(int)]
    counts = np.zeros(k)
    for _ in range(iterations):
        batch = x[rng.integers(0, x.size, minibatch_size)]
        idx = _assign(batch, centers)
        n = np.bincount(idx, minlength=k)
        s = np.bincount(idx, weights=batch, minlength=k)
        hit = n > 0
        centers[hit] = (counts[hit] * centers[hit] + s[hit]) / (counts[hit] + n[hit])
        counts += n
        centers = np.sort(centers)

    history = []
    for _ in range(refine_passes):
        idx = _assign(x, centers)
        n = np.bincount(idx, minlength=k)
        s = np.bincount(idx, weights=x, minlength=k)
        hit = n > 0
        centers = centers.copy()
        centers[hit] = s[hit] / n[hit]
        centers = np.sort(centers)
        history.append(float(np.mean((x - centers[_assign(x, centers)]) ** 2)))
    centers = _separate(centers, distinct)
    return KMeansResult(ScalarCodebook(centers, bits), history)


def _separate(centers, distinct):
    # merged centres can only arise from empty clusters; move duplicates to
    # unused data values so the codebook stays strictly increasing
    uniq = np.unique(centers)
    if uniq.size == centers.size:
        return centers
    spare = np.setdiff1d(distinct, uniq)
    need = centers.size - uniq.size
    return np.sort(np.concatenate([uniq, spare[np.linspace(0, spare.size - 1, need).astype(int)]]))


@dataclass(frozen=True, eq=False)
class LatentQuantizer:
    """Product quantizer built from one scalar codebook per latent component."""

    codebooks: tuple

    @property
    def allocation(self) -> tuple:
        return tuple(cb.bits for cb in self.codebooks)

    @property
    def total_bits(self) -> int:
        return sum(self.allocation)

    def quantize(self, z):
        """Return ``(z_hat, indices)`` for latents of shape ``(..., 3)``."""
        z = np.asarray(z, dtype=float)
        if z.shape[-1] != len(self.codebooks):
            raise ValueError(f"expected {len(self.codebooks)} latent components")
        idx = np.stack([cb.indices(z[..., i]) for i, cb in enumerate(self.codebooks)], axis=-1)
        zq = np.stack([cb.levels[idx[..., i]] for i, cb in enumerate(self.codebooks)], axis=-1)
        return zq, idx

    def pack(self, idx) -> np.ndarray:
        """Concatenate per-component indices into one ``total_bits``-bit integer."""
        idx = np.asarray(idx, dtype=np.int64)
        code = np.zeros(idx.shape[:-1], dtype=np.int64)
        for i, b in enumerate(self.allocation):
            code = (code << b) | idx[..., i]
        return code


def quantize_latent(z, q: LatentQuantizer):
    return q.quantize(z)


def fit_latent_quantizer(z, allocation=(5, 5, 5), **kmeans_kw) -> LatentQuantizer:
    z = np.asarray(z, dtype=float)
    seed = kmeans_kw.pop("seed", 0)
    cbs = tuple(
        kmeans_fit(z[:, i], b, seed=seed + i, **kmeans_kw).codebook for i, b in enumerate(allocation)
    )
    return LatentQuantizer(cbs)


# -- maximum mutual information quantizer ------------------------------------

def _plogp_ratio(nb, n_cell, prior):
    # sum over classes of p(b, cell) log(p(b, cell) / (p(b) p(cell))) with counts
    with np.errstate(divide="ignore", invalid="ignore"):
        t = nb * np.log(nb / (n_cell * prior))
    return np.where(nb > 0, t, 0.0)


def mutual_information(n0, n1) -> float:
    """``I(bit; cell)`` in bits from per-cell class counts."""
    n0 = np.asarray(n0, dtype=float)
    n1 = np.asarray(n1, dtype=float)
    N = n0.sum() + n1.sum()
    cell = n0 + n1
    p0, p1 = n0.sum() / N, n1.sum() / N
    mi = _plogp_ratio(n0, cell, p0).sum() + _plogp_ratio(n1, cell, p1).sum()
    return float(mi / N / np.log(2.0))


@dataclass(frozen=True, eq=False)
class BitQuantizer:
    thresholds: np.ndarray
    representatives: np.ndarray
    mutual_information: float = float("nan")

    def quantize(self, L) -> np.ndarray:
        return self.representatives[np.searchsorted(self.thresholds, L, side="right")]


@dataclass(frozen=True, eq=False)
class MmiQuantizer:
    """Per-bit-position scalar L-value quantizers."""

    bits: int
    per_bit: tuple

    def quantize(self, L, k: int):
        return self.per_bit[k].quantize(np.asarray(L, dtype=float))

    def quantize_all(self, L) -> np.ndarray:
        """Quantize ``(..., K)`` L-values, bit position along the last axis."""
        L = np.asarray(L, dtype=float)
        return np.stack([self.quantize(L[..., k], k) for k in range(L.shape[-1])], axis=-1)


def mmi_quantize(L, k: int, q: MmiQuantizer):
    return q.quantize(L, k)


def mmi_fit_bit(llr, bits, b: int, n_bins: int = 2000, llr_range=(-L_MAX, L_MAX),
                threshold_range=None) -> BitQuantizer:
    """MI-optimal contiguous ``2**b``-cell quantizer for one bit position.

    Builds the joint histogram of (transmitted bit, L-value) over ``n_bins``
    uniform bins and places cell boundaries on bin edges by dynamic
    programming, which finds the global optimum among contiguous partitions.
    ``threshold_range`` optionally confines the thresholds to an interval.

    Raises:
        ValueError: if only one bit value occurs in the samples.
    """
    llr = np.asarray(llr, dtype=float).ravel()
    bits = np.asarray(bits).ravel().astype(bool)
    if b < 1:
        raise ValueError("b must be >= 1")
    if bits.all() or not bits.any():
        raise ValueError("samples of both bit values are required")
    edges = np.linspace(llr_range[0], llr_range[1], n_bins + 1)
    pos = np.clip(np.searchsorted(edges, llr, side="right") - 1, 0, n_bins - 1)
    n1 = np.bincount(pos[bits], minlength=n_bins).astype(float)
    n0 = np.bincount(pos[~bits], minlength=n_bins).astype(float)

    # only edges between occupied bins matter; drop the rest
    occupied = np.nonzero(n0 + n1)[0]
    n0, n1 = n0[occupied], n1[occupied]
    cand = edges[occupied[1:]]  # boundary between consecutive occupied bins
    allowed = np.ones(cand.size, dtype=bool)
    if threshold_range is not None:
        allowed = (cand >= threshold_range[0]) & (cand <= threshold_range[1])

    n_cells = 1 << b
    m = n0.size
    c0 = np.r_[0.0, np.cumsum(n0)]
    c1 = np.r_[0.0, np.cumsum(n1)]
    N = c0[-1] + c1[-1]
    p0, p1 = c0[-1] / N, c1[-1] / N
    # F[i, j]: contribution of a cell covering occupied bins i..j-1
    a0 = c0[None, :] - c0[:, None]
    a1 = c1[None, :] - c1[:, None]
    F = _plogp_ratio(a0, a0 + a1, p0) + _plogp_ratio(a1, a0 + a1, p1)
    F[np.tril_indices(m + 1)] = -np.inf
    # boundary positions 1..m-1 correspond to cand[pos-1]
    ok_pos = np.r_[True, allowed, True]

    best = F[0].copy()  # one cell covering bins 0..j-1
    back = []
    used = 1
    for _ in range(1, min(n_cells, m)):
        start = np.where(ok_pos, best, -np.inf)
        tot = start[:, None] + F
        arg = np.argmax(tot, axis=0)
        new = tot[arg, np.arange(m + 1)]
        if not new[m] > best[m] + 1e-15 * abs(best[m]):
            break  # more cells cannot increase MI on this data
        back.append(arg)
        best = new
        used += 1
    # backtrack boundaries for `used` cells ending at m
    bounds = [m]
    j = m
    for arg in reversed(back):
        j = arg[j]
        bounds.append(j)
    bounds = bounds[::-1]
    if bounds[0] != 0:
        bounds = [0] + bounds
    bounds = np.array(bounds)
    cell_n0 = np.diff(c0[bounds])
    cell_n1 = np.diff(c1[bounds])
    thresholds = cand[bounds[1:-1] - 1]
    with np.errstate(divide="ignore"):
        reps = np.log(cell_n1 / N) - np.log(cell_n0 / N)
    reps = np.clip(reps, -L_MAX, L_MAX)
    mi = float(best[m] / N / np.log(2.0))
    return BitQuantizer(thresholds, reps, mi)


def mmi_fit(llrs, bits, b: int, n_bins: int = 2000, threshold_range=None) -> MmiQuantizer:
    """Fit one MMI quantizer per bit position from ``(N, K)`` L-values and bits."""
    llrs = np.asarray(llrs, dtype=float)
    bits = np.asarray(bits)
    if llrs.shape != bits.shape or llrs.ndim != 2:
        raise ValueError("llrs and bits must be matching (N, K) arrays")
    per_bit = tuple(
        mmi_fit_bit(llrs[:, k], bits[:, k], b, n_bins, threshold_range=threshold_range)
        for k in range(llrs.shape[1])
    )
    return MmiQuantizer(b, per_bit)


# -- text formats --------------------------------------------------------------

def format_latent_quantizer(q: LatentQuantizer) -> str:
    out = ["# llrquant latent codebook v1"]
    for i, cb in enumerate(q.codebooks):
        out.append(f"[component {i + 1}]")
        out.append(f"bits = {cb.bits}")
        out += [repr(float(v)) for v in cb.levels]
    return "\n".join(out) + "\n"


def parse_latent_quantizer(text: str) -> LatentQuantizer:
    sections = _sections(text)
    cbs = []
    for name, lines in sections:
        if not name.startswith("component"):
            raise ValueError(f"unexpected section [{name}]")
        bits = int(lines[0].split("=")[1])
        cbs.append(ScalarCodebook(np.array([float(v) for v in lines[1:]]), bits))
    return LatentQuantizer(tuple(cbs))


def format_mmi_quantizer(q: MmiQuantizer) -> str:
    out = ["# llrquant mmi quantizer v1", f"bits = {q.bits}"]
    for k, bq in enumerate(q.per_bit):
        out.append(f"[bit {k + 1}]")
        out.append("thresholds = " + " ".join(repr(float(t)) for t in bq.thresholds))
        out.append("representatives = " + " ".join(repr(float(r)) for r in bq.representatives))
    return "\n".join(out) + "\n"


def parse_mmi_quantizer(text: str) -> MmiQuantizer:
    head = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    bits = int(head[0].split("=")[1])
    per_bit = []
    for name, lines in _sections(text):
        vals = {}
        for ln in lines:
            key, _, rest = ln.partition("=")
            vals[key.strip()] = np.array([float(v) for v in rest.split()])
        per_bit.append(BitQuantizer(vals["thresholds"], vals["representatives"]))
    return MmiQuantizer(bits, tuple(per_bit))


def _sections(text):
    sections = []
    for ln in text.splitlines():
        ln = ln.strip()
        if not ln or ln.startswith("#"):
            continue
        if ln.startswith("[") and ln.endswith("]"):
            sections.append((ln[1:-1].strip(), []))
        elif sections:
            sections[-1][1].append(ln)
    return sections
