"""Results CSV and the dB-loss summary against the unquantized baseline."""

from __future__ import annotations

import csv
import io
from collections import defaultdict

import numpy as np

from .evaluate import BlerRecord

CSV_FIELDS = ("scheme", "snr_db", "codewords", "errors", "bler")
BASELINE = "unquantized"
TARGETS = (0.1, 0.01)


def format_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for r in records:
        w.writerow([r.scheme, repr(float(r.snr_db)), r.codewords, r.errors, repr(float(r.bler))])
    return buf.getvalue()


def parse_csv(text: str) -> list:
    rows = list(csv.DictReader(io.StringIO(text)))
    if rows and tuple(rows[0].keys()) != CSV_FIELDS:
        raise ValueError(f"unexpected CSV columns {tuple(rows[0].keys())}")
    return [BlerRecord(r["scheme"], float(r["snr_db"]), int(r["codewords"]), int(r["errors"])) for r in rows]


def snr_at_bler(snr, bler, target: float):
    """SNR where the curve crosses ``target``, interpolating log10(BLER) linearly.

    Returns None when the measured points do not bracket the target. Zero
    error counts are skipped since their logarithm is undefined.
    """
    snr = np.asarray(snr, dtype=float)
    bler = np.asarray(bler, dtype=float)
    order = np.argsort(snr)
    snr, bler = snr[order], bler[order]
    keep = bler > 0
    snr, lb = snr[keep], np.log10(bler[keep])
    lt = np.log10(target)
    for i in range(len(snr) - 1):
        a, b = lb[i], lb[i + 1]
        if a == lt:
            return float(snr[i])
        if (a - lt) * (b - lt) < 0:
            return float(snr[i] + (lt - a) / (b - a) * (snr[i + 1] - snr[i]))
    if len(snr) and lb[-1] == lt:
        return float(snr[-1])
    return None


def db_losses(records, target: float, baseline: str = BASELINE) -> dict:
    """``scheme -> SNR(scheme) - SNR(baseline)`` at BLER ``target`` (None if not bracketed)."""
    curves = defaultdict(list)
    for r in records:
        curves[r.scheme].append((r.snr_db, r.bler))
    if baseline not in curves:
        return {}
    ref = snr_at_bler(*zip(*curves[baseline]), target)
    out = {}
    for scheme, pts in curves.items():
        at = snr_at_bler(*zip(*pts), target)
        out[scheme] = None if at is None or ref is None else at - ref
    return out


def summary(records, bits_per_llr: dict | None = None) -> str:
    """Plain-text table of BLER per SNR and dB loss at BLER 0.1 and 0.01."""
    if not records:
        raise ValueError("no records to summarise")
    schemes = list(dict.fromkeys(r.scheme for r in records))
    snrs = sorted({r.snr_db for r in records})
    table = {(r.scheme, r.snr_db): r.bler for r in records}
    losses = {t: db_losses(records, t) for t in TARGETS}
    head = f"{'scheme':>12s} {'bits/L':>7s} " + " ".join(f"{s:>7.2f}" for s in snrs)
    head += "".join(f" {'loss@' + format(t, 'g'):>10s}" for t in TARGETS)
    lines = [head]
    for s in schemes:
        bpl = (bits_per_llr or {}).get(s)
        row = f"{s:>12s} {('-' if bpl is None else format(bpl, '.3f')):>7s} "
        row += " ".join(f"{table[(s, x)]:7.4f}" if (s, x) in table else f"{'':>7s}" for x in snrs)
        for t in TARGETS:
            v = losses[t].get(s)
            row += f" {('n/a' if v is None else format(v, '+.2f') + ' dB'):>10s}"
        lines.append(row)
    return "\n".join(lines)


def emit_results(records, path=None, bits_per_llr: dict | None = None) -> str:
    """Write the CSV (when ``path`` is given) and return the console summary."""
    if not records:
        raise ValueError("no records to emit")
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(format_csv(records))
    return summary(records, bits_per_llr)
