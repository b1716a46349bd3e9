"""Block error rate of the two channel codes with unquantized L-values.

Sweeps SNR for the (648, 324) LDPC code and the (256, 128) Polar code over
flat Rayleigh fading, and for LDPC over the ETU channel with a bit
interleaver. Takes about a minute on one core.
"""

# %% configuration through the harness
from llrquant.harness.config import load_config
from llrquant.harness.evaluate import Assets, evaluate_bler

settings = {
    "LDPC, flat Rayleigh": ["code.name=ldpc", "eval.channel=flat", "eval.snr_db=16, 17, 18, 19, 20"],
    "Polar, flat Rayleigh": ["code.name=polar", "eval.channel=flat", "eval.snr_db=19, 20, 21, 22, 23"],
    "LDPC, ETU + interleaver": ["code.name=ldpc", "eval.channel=etu", "eval.snr_db=19, 20, 21, 22, 23"],
}

# %% sweep
for title, sets in settings.items():
    cfg = load_config("desk", ["experiment.workdir=runs/demo", "eval.codewords=500", *sets])
    recs = evaluate_bler(cfg, ["unquantized"], Assets())
    print(title)
    for r in recs:
        print(f"  {r.snr_db:5.1f} dB  BLER {r.bler:.3f}  ({r.errors}/{r.codewords})")

# With 256-QAM, flat Rayleigh (independent fade per symbol) gives the most
# diversity, so LDPC reaches BLER 0.1 near 18 dB. The ETU codeword spans
# only 81 correlated subcarriers and the shorter Polar code spans 32 symbols,
# so both need roughly 3 dB more.
