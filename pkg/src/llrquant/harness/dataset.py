"""Training-data generation and the binary soft-bit matrix format.

File layout (little-endian, 72-byte header then the matrix):

    offset  size  field
    0       8     magic ``LLRQDATA``
    8       4     u32 format version (1)
    12      4     u32 K, columns per row
    16      8     u64 N, rows
    24      8     u64 master seed
    32      1     u8 element size in bytes (4 = float32, 8 = float64)
    33      7     zero padding
    40      32    SHA-256 of the data-relevant config settings
    72      ...   N*K elements, row-major
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..channel import transmit
from ..modem import build_constellation, llr_exact, to_soft_bits

DATA_MAGIC = b"LLRQDATA"
DATA_VERSION = 1
_HEADER = struct.Struct("<8sIIQQB7x32s")
_ELEM = {4: np.dtype("<f4"), 8: np.dtype("<f8")}

# stream ids for np.random.default_rng([seed, stream, ...])
STREAM_DATA, STREAM_SHUFFLE, STREAM_EVAL, STREAM_MMI, STREAM_INTERLEAVER = 1, 2, 3, 4, 5


@dataclass(frozen=True)
class DatasetHeader:
    K: int
    N: int
    seed: int
    elem_bytes: int
    config_hash: bytes


def snr_key(snr_db: float) -> int:
    """Integer label of an SNR value used to derive its random stream."""
    return int(round(snr_db * 1000)) & 0xFFFFFFFF


def simulate_llrs(cfg, code, channel: str, snr_db: float, n_codewords: int, rng: np.random.Generator,
                  interleaver=None):
    """Random messages through encoder, channel and exact demapper.

    Returns:
        ``(messages, codewords, llr)`` with ``llr`` shaped ``(B, n)`` in
        transmitted (interleaved) bit order.
    """
    c = build_constellation(cfg.K)
    msg = rng.integers(0, 2, (n_codewords, code.k), dtype=np.int8)
    cw = code.encode(msg)
    tx = cw if interleaver is None else cw[:, interleaver]
    cu = transmit(tx, c, channel, np.inf if cfg.noiseless else snr_db, rng)
    llr = llr_exact(cu.y, cu.h, cu.sigma2, c).reshape(n_codewords, -1)
    return msg, cw, llr


def generate_dataset(cfg, code) -> np.ndarray:
    """Soft-bit training matrix ``(N, K)``, rows shuffled with the master seed."""
    parts = []
    for snr in cfg.data_snr_db:
        rng = np.random.default_rng([cfg.seed, STREAM_DATA, snr_key(snr)])
        _, _, llr = simulate_llrs(cfg, code, cfg.data_channel, snr, cfg.codewords_per_snr, rng)
        parts.append(to_soft_bits(llr.reshape(-1, cfg.K)))
    soft = np.concatenate(parts)
    order = np.random.default_rng([cfg.seed, STREAM_SHUFFLE]).permutation(soft.shape[0])
    return soft[order]


def write_dataset(path, soft: np.ndarray, seed: int, config_hash: bytes, elem_bytes: int = 4) -> None:
    """Store soft bits; float32 values are pulled strictly inside (-1, 1)."""
    soft = np.asarray(soft, dtype=float)
    N, K = soft.shape
    dt = _ELEM[elem_bytes]
    arr = soft.astype(dt)
    edge = np.nextafter(dt.type(1), dt.type(0))
    np.clip(arr, -edge, edge, out=arr)
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(DATA_MAGIC, DATA_VERSION, K, N, seed & (2**64 - 1), elem_bytes,
                                  config_hash.ljust(32, b"\0")[:32]))
            fh.write(np.ascontiguousarray(arr).tobytes())
    except OSError as exc:
        raise OSError(f"cannot write dataset {path}: {exc}") from exc


def read_dataset_header(path) -> DatasetHeader:
    try:
        with open(path, "rb") as fh:
            head = fh.read(_HEADER.size)
    except OSError as exc:
        raise OSError(f"cannot read dataset {path}: {exc}") from exc
    if len(head) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, version, K, N, seed, elem, digest = _HEADER.unpack(head)
    if magic != DATA_MAGIC:
        raise ValueError(f"{path}: not a dataset file")
    if version != DATA_VERSION:
        raise ValueError(f"{path}: unsupported dataset version {version}")
    if elem not in _ELEM:
        raise ValueError(f"{path}: unsupported element size {elem}")
    return DatasetHeader(K, N, seed, elem, digest)


def read_dataset(path) -> tuple[np.ndarray, DatasetHeader]:
    hdr = read_dataset_header(path)
    data = np.fromfile(path, dtype=_ELEM[hdr.elem_bytes], offset=_HEADER.size)
    if data.size != hdr.N * hdr.K:
        raise ValueError(f"{path}: expected {hdr.N * hdr.K} values, found {data.size}")
    return data.reshape(hdr.N, hdr.K), hdr
