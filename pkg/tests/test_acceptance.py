"""Acceptance suite: one test per criterion, each printing a pass/fail line.

The end-to-end criteria (5 to 7) share one desk-preset pipeline run: data
generation, training, codebook and MMI fitting on flat Rayleigh with LDPC,
then evaluation in three settings. That fixture takes tens of minutes on one
core. Losses are SNR differences to the unquantized curve at BLER 0.1, read
off by log-linear interpolation between grid points.
"""

import csv
import time

import numpy as np
import pytest

from llrquant.autonet import BranchedAutoencoder, backward, forward, total_loss
from llrquant.channel import transmit
from llrquant.coding import polar_construct, wifi_648_r12
from llrquant.harness.cli import main
from llrquant.harness.config import load_config
from llrquant.harness.evaluate import Assets, evaluate_bler
from llrquant.harness.results import db_losses, parse_csv
from llrquant.modem import L_MAX, build_constellation, llr_exact, sufficient_stats, to_soft_bits
from llrquant.quantizer import LatentQuantizer, ScalarCodebook, kmeans_fit, mmi_fit_bit, quantize_latent

TARGET_BLER = 0.1
AE_FULL_MAX_DB = 0.3
AE_15_MAX_DB = 0.5

# evaluation grids that bracket BLER 0.1 for each setting
FLAT_LDPC_SNR = "15, 15.5, 16, 16.5, 17, 17.5, 18, 18.5, 19, 19.5, 20"
ETU_LDPC_SNR = "19, 19.5, 20, 20.5, 21, 21.5, 22, 22.5, 23, 23.5, 24"
FLAT_POLAR_SNR = "19, 19.5, 20, 20.5, 21, 21.5, 22, 22.5, 23"


# ---------------------------------------------------------------- criterion 1

def test_c1_soft_bit_magnitude_ordering(criterion):
    t0 = time.perf_counter()
    c = build_constellation(8)
    rng = np.random.default_rng(2024)
    n = 100_000
    bits = rng.integers(0, 2, (n, 8))
    cu = transmit(bits.reshape(-1), c, "flat", 18.0, rng)
    mag = np.abs(to_soft_bits(llr_exact(cu.y, cu.h, cu.sigma2, c).reshape(n, 8)))
    mean = mag.mean(0)
    se = mag.std(0, ddof=1) / np.sqrt(n)
    gaps, ok = [], True
    for group in ((0, 1, 2, 3), (4, 5, 6, 7)):
        for a, b in zip(group[:-1], group[1:]):
            gap = mean[a] - mean[b]
            z = gap / np.hypot(se[a], se[b])
            gaps.append(z)
            ok &= bool(z > 3)
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 60
    criterion(1, ok, f"E|soft| = {np.round(mean, 4).tolist()}, smallest gap {min(gaps):.1f} SE, {elapsed:.1f} s")


# ---------------------------------------------------------------- criterion 2

def test_c2_gradients_match_finite_differences(criterion):
    rng = np.random.default_rng(0)
    net = BranchedAutoencoder.create(2, rng, hidden=4)
    for k in net.params:
        net.params[k] += 0.1 * rng.standard_normal(net.params[k].shape)
    x = rng.uniform(-0.95, 0.95, (16, 2))
    w = np.array([0.3, 0.7])
    eps = 1e-2
    _, _, cache = forward(net, x)
    grads = backward(net, cache, x, w, eps)
    keys = list(net.params)
    h = 1e-5
    errs = []
    for _ in range(200):
        key = keys[rng.integers(len(keys))]
        flat = net.params[key].reshape(-1)
        j = rng.integers(flat.size)
        old = flat[j]
        flat[j] = old + h
        up = total_loss(forward(net, x)[1], x, w, eps)
        flat[j] = old - h
        down = total_loss(forward(net, x)[1], x, w, eps)
        flat[j] = old
        num = (up - down) / (2 * h)
        ana = grads[key].reshape(-1)[j]
        errs.append(abs(num - ana) / max(abs(num), abs(ana), 1e-8))
    worst = max(errs)
    criterion(2, worst < 1e-4, f"max relative error {worst:.2e} over 200 probes")


# ---------------------------------------------------------------- criterion 3

def direct_sum_llr(y, h, sigma2, c):
    """Log-ratio of likelihood sums over all constellation points."""
    metric = -np.abs(y - h * c.points) ** 2 / sigma2
    out = np.empty(c.K)
    for k in range(c.K):
        one = c.labels[:, k] == 1
        a, b = metric[one], metric[~one]
        out[k] = (a.max() + np.log(np.exp(a - a.max()).sum())) - (b.max() + np.log(np.exp(b - b.max()).sum()))
    return np.clip(out, -L_MAX, L_MAX)


def test_c3_llr_oracles(criterion):
    rng = np.random.default_rng(3)
    qpsk = build_constellation(2)
    n = 10_000
    y = rng.normal(size=n) + 1j * rng.normal(size=n)
    h = rng.normal(size=n) + 1j * rng.normal(size=n)
    s2 = rng.uniform(0.2, 3.0, n)
    G, yr, yi = sufficient_stats(y, h, s2)
    closed = np.clip(np.stack([2 * np.sqrt(2) * G * yr, 2 * np.sqrt(2) * G * yi], -1), -L_MAX, L_MAX)
    err4 = np.max(np.abs(llr_exact(y, h, s2, qpsk) - closed))

    c = build_constellation(8)
    worst = 0.0
    for _ in range(300):
        hh = complex(rng.normal(), rng.normal()) / np.sqrt(2)
        var = 10 ** (-rng.uniform(5, 25) / 10)
        yy = hh * c.points[rng.integers(256)] + np.sqrt(var / 2) * complex(rng.normal(), rng.normal())
        ref = direct_sum_llr(yy, hh, var, c)
        got = llr_exact(yy, hh, var, c)
        worst = max(worst, float(np.max(np.abs(got - ref) / np.maximum(np.abs(ref), 1.0))))
    criterion(3, err4 < 1e-10 and worst < 1e-9,
              f"4-QAM max abs error {err4:.1e}; 256-QAM max relative error {worst:.1e}")


# ---------------------------------------------------------------- criterion 4

def test_c4_decoder_sanity(criterion, tmp_path):
    rng = np.random.default_rng(4)
    ldpc = wifi_648_r12()
    msg = rng.integers(0, 2, (100, ldpc.k))
    cw = ldpc.encode(msg)
    bits, _ = ldpc.decode_bp(L_MAX * (2.0 * cw - 1))
    ldpc_ok = np.array_equal(ldpc.extract_message(bits), msg)
    polar = polar_construct(256, 128, 3.0)
    pm = rng.integers(0, 2, (100, 128))
    polar_ok = np.array_equal(polar.decode(L_MAX * (2.0 * polar.encode(pm) - 1)), pm)

    cfg = load_config("desk", [f"experiment.workdir={tmp_path}", "eval.snr_db=16, 17, 18, 19", "eval.codewords=2000"])
    bler = [r.bler for r in evaluate_bler(cfg, ["unquantized"], Assets())]
    falling = all(a > b for a, b in zip(bler[:-1], bler[1:]))
    criterion(4, ldpc_ok and polar_ok and falling,
              f"noiseless LDPC {ldpc_ok}, Polar {polar_ok}; LDPC BLER at 16..19 dB {bler}")


# ------------------------------------------------------------ criteria 5 to 7

def run(*argv):
    code = main(list(argv))
    assert code == 0, f"llrquant {' '.join(argv)} exited with {code}"


@pytest.fixture(scope="session")
def desk_results(tmp_path_factory):
    """Desk-preset pipeline on flat LDPC, evaluated in three settings.

    Returns the per-setting records plus the workdir under key ``"workdir"``.
    """
    work = tmp_path_factory.mktemp("desk")
    base = ["--config", "desk", "--set", f"experiment.workdir={work}"]
    for cmd in ("gen-data", "train", "fit-codebook", "fit-mmi"):
        run(cmd, *base)
    settings = {
        "flat-ldpc": (["eval.channel=flat", f"eval.snr_db={FLAT_LDPC_SNR}"], ["ae-18", "mmi-2bit"]),
        "etu-ldpc": (["eval.channel=etu", f"eval.snr_db={ETU_LDPC_SNR}"], []),
        "flat-polar": (["code.name=polar", "eval.channel=flat", f"eval.snr_db={FLAT_POLAR_SNR}"], []),
    }
    out = {}
    for name, (sets, extra) in settings.items():
        path = work / f"results-{name}.csv"
        args = ["eval", *base, "--output", str(path)]
        for s in sets:
            args += ["--set", s]
        for scheme in ["unquantized", "ae-full", "ae-15", *extra]:
            args += ["--scheme", scheme]
        run(*args)
        out[name] = parse_csv(path.read_text())
    out["workdir"] = work
    return out


def loss_check(records):
    losses = db_losses(records, TARGET_BLER)
    full, q15 = losses.get("ae-full"), losses.get("ae-15")
    ok = full is not None and q15 is not None and full <= AE_FULL_MAX_DB and q15 <= AE_15_MAX_DB
    fmt = lambda v: "n/a" if v is None else f"{v:+.3f} dB"
    return ok, f"ae-full {fmt(full)} (<= {AE_FULL_MAX_DB}), ae-15 {fmt(q15)} (<= {AE_15_MAX_DB})"


def test_c5_desk_end_to_end(criterion, desk_results):
    ok, text = loss_check(desk_results["flat-ldpc"])
    criterion(5, ok, f"flat Rayleigh + LDPC at BLER {TARGET_BLER}: {text}")


def test_c6_mmi_baseline_ordering(criterion, desk_results):
    recs = desk_results["flat-ldpc"]
    base = {r.snr_db: r.bler for r in recs if r.scheme == "unquantized"}
    snr = min(base, key=lambda s: abs(np.log10(max(base[s], 1e-9)) - np.log10(TARGET_BLER)))
    at = {r.scheme: r for r in recs if r.snr_db == snr}
    mmi, ae = at["mmi-2bit"], at["ae-15"]
    criterion(6, mmi.bler > ae.bler,
              f"at {snr} dB (unquantized BLER {base[snr]:.4f}): mmi-2bit {mmi.bler:.4f} vs ae-15 {ae.bler:.4f}")


def test_c7_generalization(criterion, desk_results):
    ok_e, text_e = loss_check(desk_results["etu-ldpc"])
    ok_p, text_p = loss_check(desk_results["flat-polar"])
    criterion(7, ok_e and ok_p, f"ETU + LDPC: {text_e}; Rayleigh + Polar: {text_p}")


# ---------------------------------------------------------------- criterion 8

def test_c8_quantizer_properties(criterion):
    rng = np.random.default_rng(8)
    x = np.concatenate([rng.normal(-0.5, 0.1, 4000), rng.uniform(-1, 1, 4000), rng.normal(0.6, 0.05, 2000)])
    d = np.array(kmeans_fit(x, 5, iterations=5, refine_passes=20, seed=8).refine_distortion)
    lloyd_ok = bool(np.all(np.diff(d) <= 1e-15))

    nn_ok = True
    for alloc in ((1, 1, 1), (3, 2, 3), (5, 5, 5)):
        cbs = tuple(ScalarCodebook(np.sort(rng.choice(np.linspace(-1, 1, 4001), 1 << b, replace=False)), b)
                    for b in alloc)
        q = LatentQuantizer(cbs)
        z = rng.uniform(-1, 1, (1000, 3))
        zq, _ = quantize_latent(z, q)
        grid = np.stack(np.meshgrid(*[cb.levels for cb in cbs], indexing="ij"), -1).reshape(-1, 3)
        brute = grid[np.argmin(((z[:, None] - grid[None]) ** 2).sum(-1), 1)]
        nn_ok &= bool(np.array_equal(zq, brute))

    bits = rng.integers(0, 2, 200_000)
    llr = (2 * bits - 1) * 2.0 + 2.0 * rng.standard_normal(bits.size)
    mis = [mmi_fit_bit(llr, bits, b).mutual_information for b in (1, 2, 3, 4)]
    mi_ok = bool(np.all(np.diff(mis) >= -1e-12))
    criterion(8, lloyd_ok and nn_ok and mi_ok,
              f"Lloyd monotone {lloyd_ok}; product NN = brute force {nn_ok}; "
              f"MMI bits 1..4 -> {np.round(mis, 4).tolist()}")


# ---------------------------------------------------------------- criterion 9

def test_c9_determinism(criterion, tmp_path):
    def pipeline(work):
        base = ["--config", "desk", "--seed", "7", "--set", f"experiment.workdir={work}"]
        for s in ("data.codewords_per_snr=40", "train.batch_size=512", "train.rounds=1",
                  "train.epochs_stage1=2", "train.epochs_stage2=1", "eval.codewords=100", "eval.chunk=50",
                  "eval.snr_db=17, 18"):
            base += ["--set", s]
        run("gen-data", *base)
        run("train", *base)
        run("eval", *base, "--scheme", "unquantized", "--scheme", "ae-full")
        return (work / "results.csv").read_bytes()

    a = pipeline(tmp_path / "a")
    b = pipeline(tmp_path / "b")
    criterion(9, a == b and len(a) > 0, f"results CSVs byte-identical: {a == b} ({len(a)} bytes)")


# ------------------------------------------- further desk-scale checks

def test_desk_final_bit_weights_ordered(desk_results):
    with open(desk_results["workdir"] / "history.csv") as fh:
        last = list(csv.DictReader(fh))[-1]
    w = np.array([float(last[f"w{k}"]) for k in range(1, 9)])
    # weights grow with the bit index inside each axis, as the errors do
    assert np.all(np.diff(w[:4]) > 0) and np.all(np.diff(w[4:]) > 0), w


def test_desk_coarser_quantization_never_better(desk_results):
    recs = desk_results["flat-ldpc"]
    table = {(r.scheme, r.snr_db): r for r in recs}
    chain = ["ae-15", "ae-18", "ae-full", "unquantized"]
    for snr in sorted({r.snr_db for r in recs}):
        for coarse, fine in zip(chain[:-1], chain[1:]):
            a, b = table[(coarse, snr)], table[(fine, snr)]
            # three binomial standard errors of the finer scheme's count
            slack = 3 * np.sqrt(b.errors * (1 - b.bler) + 1)
            assert a.errors >= b.errors - slack, (snr, coarse, a.errors, fine, b.errors)
