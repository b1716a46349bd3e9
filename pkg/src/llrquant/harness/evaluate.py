"""Monte-Carlo block-error-rate evaluation of the L-value compression schemes."""

from __future__ import annotations

import re
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..autonet import BranchedAutoencoder, load_model
from ..coding import PolarCode, ldpc_load, polar_construct, read_frozen_set, wifi_648_r12
from ..coding.interleave import permutation
from ..modem import from_soft_bits, to_soft_bits
from ..quantizer import LatentQuantizer, MmiQuantizer, parse_latent_quantizer, parse_mmi_quantizer
from .dataset import STREAM_EVAL, STREAM_INTERLEAVER, simulate_llrs, snr_key


class MissingAssetError(RuntimeError):
    """A scheme needs a trained network or quantizer that is not available."""


@dataclass(frozen=True)
class BlerRecord:
    scheme: str
    snr_db: float
    codewords: int
    errors: int
    wall_time: float = 0.0

    def __post_init__(self):
        if not 0 <= self.errors <= self.codewords:
            raise ValueError("errors must lie in [0, codewords]")

    @property
    def bler(self) -> float:
        return self.errors / self.codewords if self.codewords else float("nan")


_AE = re.compile(r"ae-(\d+)$")
_MMI = re.compile(r"mmi-(\d+)(?:bit)?$")


def parse_scheme(name: str) -> tuple:
    """``("unquantized",)``, ``("ae-full",)``, ``("ae", Nb)`` or ``("mmi", b)``."""
    if name in ("unquantized", "ae-full"):
        return (name,)
    m = _AE.match(name)
    if m:
        return ("ae", int(m.group(1)))
    m = _MMI.match(name)
    if m:
        return ("mmi", int(m.group(1)))
    raise ValueError(f"unknown scheme {name!r}")


def build_code(cfg):
    """Channel code named by the config."""
    if cfg.code == "ldpc":
        return ldpc_load(Path(cfg.alist).read_text()) if cfg.alist else wifi_648_r12()
    if cfg.polar_frozen:
        return PolarCode(cfg.polar_n, read_frozen_set(Path(cfg.polar_frozen).read_text()))
    return polar_construct(cfg.polar_n, cfg.polar_k, cfg.polar_design_snr_db)


def decode_messages(cfg, code, llr: np.ndarray) -> np.ndarray:
    if isinstance(code, PolarCode):
        return code.decode(llr, cfg.polar_list_size)
    bits, _ = code.decode_bp(llr, cfg.bp_iterations)
    return code.extract_message(bits)


def codebook_name(allocation) -> str:
    return "codebook-" + "-".join(str(b) for b in allocation) + ".txt"


@dataclass
class Assets:
    net: BranchedAutoencoder | None = None
    latent: dict | None = None  # total bits -> LatentQuantizer
    mmi: dict | None = None  # bits -> MmiQuantizer

    @classmethod
    def load(cls, cfg, schemes) -> "Assets":
        kinds = [parse_scheme(s) for s in schemes]
        out = cls(latent={}, mmi={})
        if any(k[0] in ("ae-full", "ae") for k in kinds):
            path = cfg.path("model.bin")
            if not path.is_file():
                raise MissingAssetError(f"model file {path} not found; run 'train' first")
            out.net = load_model(path)
        for k in kinds:
            if k[0] == "ae":
                alloc = [a for a in cfg.allocations if sum(a) == k[1]]
                if not alloc:
                    raise MissingAssetError(f"no bit allocation with {k[1]} bits in the config")
                path = cfg.path(codebook_name(alloc[0]))
                if not path.is_file():
                    raise MissingAssetError(f"codebook {path} not found; run 'fit-codebook' first")
                out.latent[k[1]] = parse_latent_quantizer(path.read_text())
            elif k[0] == "mmi":
                path = cfg.path(f"mmi-{k[1]}bit.txt")
                if not path.is_file():
                    raise MissingAssetError(f"MMI quantizer {path} not found; run 'fit-mmi' first")
                out.mmi[k[1]] = parse_mmi_quantizer(path.read_text())
        return out


def apply_scheme(name: str, llr: np.ndarray, K: int, assets: Assets) -> np.ndarray:
    """Transform L-values ``(B, n)`` as the named compression scheme would."""
    kind = parse_scheme(name)
    if kind[0] == "unquantized":
        return llr
    if kind[0] == "mmi":
        q: MmiQuantizer = assets.mmi[kind[1]]
        return q.quantize_all(llr.reshape(-1, K)).reshape(llr.shape)
    net = assets.net
    if net is None:
        raise MissingAssetError(f"scheme {name} needs a trained network")
    soft = to_soft_bits(llr.reshape(-1, K))
    z = net.encode(soft)
    if kind[0] == "ae":
        lq: LatentQuantizer = assets.latent[kind[1]]
        z, _ = lq.quantize(z)
    return from_soft_bits(net.decode(z)).reshape(llr.shape)


def interleaver_for(cfg, n: int):
    if not cfg.use_interleaver:
        return None
    return permutation(n, int(np.random.default_rng([cfg.seed, STREAM_INTERLEAVER]).integers(2**63)))


def evaluate_bler(cfg, schemes, assets: Assets | None = None, code=None, progress=None) -> list:
    """Block error counts for every scheme at every evaluation SNR.

    All schemes at one SNR see the same messages and channel realisations:
    the random stream of a chunk depends only on the master seed, the SNR
    and the chunk index, never on the scheme list.
    """
    schemes = list(dict.fromkeys(schemes))  # repeated names are evaluated once
    for s in schemes:
        parse_scheme(s)
    code = code or build_code(cfg)
    assets = assets or Assets.load(cfg, schemes)
    perm = interleaver_for(cfg, code.n)
    say = progress or (lambda msg: None)
    records = []
    for snr in cfg.eval_snr_db:
        errors = dict.fromkeys(schemes, 0)
        spent = dict.fromkeys(schemes, 0.0)
        done = 0
        chunk_id = 0
        while done < cfg.eval_codewords:
            B = min(cfg.eval_chunk, cfg.eval_codewords - done)
            rng = np.random.default_rng([cfg.seed, STREAM_EVAL, snr_key(snr), chunk_id])
            msg, _, llr = simulate_llrs(cfg, code, cfg.eval_channel, snr, B, rng, perm)
            for s in schemes:
                t0 = time.perf_counter()
                L = apply_scheme(s, llr, cfg.K, assets)
                if perm is not None:
                    back = np.empty_like(L)
                    back[:, perm] = L
                    L = back
                dec = decode_messages(cfg, code, L)
                errors[s] += int(np.count_nonzero((dec != msg).any(axis=1)))
                spent[s] += time.perf_counter() - t0
            done += B
            chunk_id += 1
        for s in schemes:
            records.append(BlerRecord(s, float(snr), cfg.eval_codewords, errors[s], spent[s]))
            say(f"{s:>12s} {snr:6.2f} dB  BLER {errors[s] / cfg.eval_codewords:.4f}")
    return records
