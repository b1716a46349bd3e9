"""Command-line entry point: ``llrquant <subcommand> --config <path|preset> --seed <n>``."""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from ..autonet import load_model, save_model, train, write_history_csv
from ..quantizer import fit_latent_quantizer, format_latent_quantizer, format_mmi_quantizer, mmi_fit
from .config import SCHEME_HELP, load_config
from .dataset import (
    STREAM_MMI,
    generate_dataset,
    read_dataset,
    simulate_llrs,
    snr_key,
    write_dataset,
)
from .evaluate import Assets, MissingAssetError, build_code, codebook_name, evaluate_bler, parse_scheme
from .results import emit_results, parse_csv

log = logging.getLogger("llrquant")


def _config(args):
    cfg = load_config(args.config, args.set, args.seed)
    cfg.workdir.mkdir(parents=True, exist_ok=True)
    return cfg


def cmd_gen_data(args) -> int:
    cfg = _config(args)
    t0 = time.perf_counter()
    soft = generate_dataset(cfg, build_code(cfg))
    path = cfg.path("dataset.bin")
    write_dataset(path, soft, cfg.seed, cfg.data_hash())
    print(f"wrote {soft.shape[0]} x {soft.shape[1]} soft bits to {path} ({time.perf_counter() - t0:.1f} s)")
    return 0


def _load_training_data(cfg):
    path = cfg.path("dataset.bin")
    if not path.is_file():
        raise MissingAssetError(f"dataset {path} not found; run 'gen-data' first")
    soft, hdr = read_dataset(path)
    if hdr.config_hash != cfg.data_hash():
        log.warning("dataset %s was generated with different settings than the current config", path)
    return soft


def cmd_train(args) -> int:
    cfg = _config(args)
    soft = _load_training_data(cfg)
    t0 = time.perf_counter()
    res = train(soft, cfg.train, progress=print if args.verbose else None)
    save_model(res.net, cfg.path("model.bin"))
    write_history_csv(res.history, cfg.path("history.csv"))
    w = np.round(res.weight_history[-1], 4)
    print(f"trained on {soft.shape[0]} rows in {time.perf_counter() - t0:.1f} s; final bit weights {w}")
    print(f"model written to {cfg.path('model.bin')}")
    return 0


def cmd_fit_codebook(args) -> int:
    cfg = _config(args)
    soft = _load_training_data(cfg)
    model = cfg.path("model.bin")
    if not model.is_file():
        raise MissingAssetError(f"model file {model} not found; run 'train' first")
    z = load_model(model).encode(soft)
    for alloc in cfg.allocations:
        q = fit_latent_quantizer(z, alloc, seed=cfg.seed, **cfg.kmeans)
        path = cfg.path(codebook_name(alloc))
        path.write_text(format_latent_quantizer(q))
        print(f"{sum(alloc)}-bit codebook {alloc} ({sum(alloc) / cfg.K:.3f} bits per L-value) -> {path}")
    return 0


def cmd_fit_mmi(args) -> int:
    cfg = _config(args)
    code = build_code(cfg)
    llrs, bits = [], []
    for snr in cfg.data_snr_db:
        rng = np.random.default_rng([cfg.seed, STREAM_MMI, snr_key(snr)])
        _, cw, llr = simulate_llrs(cfg, code, cfg.data_channel, snr, cfg.mmi_codewords_per_snr, rng)
        llrs.append(llr.reshape(-1, cfg.K))
        bits.append(cw.reshape(-1, cfg.K))
    q = mmi_fit(np.concatenate(llrs), np.concatenate(bits), cfg.mmi_bits, cfg.mmi_bins,
                threshold_range=cfg.mmi_threshold_range)
    path = cfg.path(f"mmi-{cfg.mmi_bits}bit.txt")
    path.write_text(format_mmi_quantizer(q))
    mi = ", ".join(f"{bq.mutual_information:.4f}" for bq in q.per_bit)
    print(f"{cfg.mmi_bits}-bit MMI quantizer -> {path}; I(bit; cell) per position: {mi}")
    return 0


def _bits_per_llr(cfg, schemes):
    out = {}
    for s in schemes:
        kind = parse_scheme(s)
        if kind[0] == "ae":
            out[s] = kind[1] / cfg.K
        elif kind[0] == "mmi":
            out[s] = float(kind[1])
    return out


def cmd_eval(args) -> int:
    cfg = _config(args)
    schemes = args.scheme or list(cfg.schemes)
    assets = Assets.load(cfg, schemes)
    say = print if args.verbose else None
    records = evaluate_bler(cfg, schemes, assets, progress=say)
    out = args.output or cfg.path("results.csv")
    print(emit_results(records, out, _bits_per_llr(cfg, schemes)))
    print(f"results written to {out}")
    return 0


def cmd_report(args) -> int:
    cfg = _config(args)
    path = Path(args.output) if args.output else cfg.path("results.csv")
    if not path.is_file():
        raise MissingAssetError(f"results file {path} not found; run 'eval' first")
    records = parse_csv(path.read_text())
    print(emit_results(records, None, _bits_per_llr(cfg, {r.scheme for r in records})))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="llrquant", description="L-value compression experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    commands = {
        "gen-data": (cmd_gen_data, "simulate the channel and write the soft-bit training set"),
        "train": (cmd_train, "train the branched autoencoder on the dataset"),
        "fit-codebook": (cmd_fit_codebook, "fit the latent scalar codebooks"),
        "fit-mmi": (cmd_fit_mmi, "fit the per-bit MMI L-value quantizer baseline"),
        "eval": (cmd_eval, "Monte-Carlo BLER of the compression schemes"),
        "report": (cmd_report, "summarise a results CSV"),
    }
    for name, (fn, text) in commands.items():
        s = sub.add_parser(name, help=text, description=text)
        s.add_argument("--config", default="desk", help="config file or preset name (desk, full)")
        s.add_argument("--seed", type=int, default=None, help="master seed (overrides the config)")
        s.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override one config value; repeatable")
        s.add_argument("-v", "--verbose", action="store_true")
        if name == "eval":
            s.add_argument("--scheme", action="append", default=None, help=f"repeatable; one of {SCHEME_HELP}")
        if name in ("eval", "report"):
            s.add_argument("--output", default=None, help="results CSV path (default: <workdir>/results.csv)")
        s.set_defaults(func=fn)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (ValueError, OSError, MissingAssetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
