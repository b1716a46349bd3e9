"""Experiment configuration: INI-style ``key = value`` text with sections.

A config file only needs to list what differs from the defaults below. The
two shipped presets (``desk`` and ``full``) live in ``harness/presets`` and
can be named on the command line instead of a path.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

from ..autonet import TrainConfig

SCHEME_HELP = "unquantized, ae-full, ae-<Nb>, mmi-<b>bit"

DEFAULTS = {
    "experiment": {
        "K": "8",
        "seed": "1",
        "workdir": "runs/default",
    },
    "code": {
        "name": "ldpc",  # ldpc | polar
        "alist": "",  # empty: built-in 802.11n (648, 324)
        "bp_iterations": "50",
        "polar_n": "256",
        "polar_k": "128",
        "polar_design_snr_db": "3.0",
        "polar_frozen": "",  # optional frozen-set file, one index per line
        "polar_list_size": "8",
    },
    "data": {
        "channel": "flat",
        "snr_db": "16, 17, 18, 19",
        "codewords_per_snr": "2000",
    },
    "train": {
        "batch_size": "65536",
        "learning_rate": "0.001",
        "beta1": "0.9",
        "beta2": "0.999",
        "adam_eps": "1e-8",
        "latent_noise_sigma": "0.001",
        "epochs_stage1": "10",
        "rounds": "4",
        "epochs_stage2": "10",
        "stage2_mode": "equal",
        "weight_mode": "adaptive",
        "loss_eps": "1e-6",
        "lr_schedule": "constant",
        "lr_final_fraction": "0.01",
        "stage2_learning_rate": "",  # empty: same as learning_rate
        "dtype": "float64",
    },
    "quantizer": {
        "allocations": "5,5,5; 6,6,6",
        "kmeans_minibatch": "4096",
        "kmeans_iterations": "200",
        "refine_passes": "10",
        "init_sample": "20000",
        "mmi_bits": "2",
        "mmi_bins": "2000",
        "mmi_threshold_range": "",  # e.g. "-3, 3"; empty means unconstrained
        "mmi_codewords_per_snr": "2000",
    },
    "eval": {
        "channel": "flat",
        "snr_db": "15, 16, 17, 18, 19, 20",
        "codewords": "2000",
        "chunk": "250",
        "schemes": "unquantized, ae-full, ae-15, ae-18, mmi-2bit",
        "interleave": "auto",  # auto: on for etu, off for flat
        "noiseless": "false",
    },
}

PRESETS = ("desk", "full")


def _floats(text: str) -> tuple:
    return tuple(float(t) for t in text.replace(",", " ").split())


def _allocations(text: str) -> tuple:
    out = []
    for part in text.split(";"):
        part = part.strip()
        if part:
            out.append(tuple(int(t) for t in part.replace(",", " ").split()))
    return tuple(out)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one experiment needs; see ``DEFAULTS`` for the keys."""

    K: int
    seed: int
    workdir: Path
    code: str
    alist: str
    bp_iterations: int
    polar_n: int
    polar_k: int
    polar_design_snr_db: float
    polar_frozen: str
    polar_list_size: int
    data_channel: str
    data_snr_db: tuple
    codewords_per_snr: int
    train: TrainConfig
    allocations: tuple
    kmeans: dict
    mmi_bits: int
    mmi_bins: int
    mmi_threshold_range: tuple | None
    mmi_codewords_per_snr: int
    eval_channel: str
    eval_snr_db: tuple
    eval_codewords: int
    eval_chunk: int
    schemes: tuple
    interleave: str
    noiseless: bool
    source: str = ""
    raw: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.code not in ("ldpc", "polar"):
            raise ValueError(f"unknown code {self.code!r}")
        for ch in (self.data_channel, self.eval_channel):
            if ch not in ("flat", "etu"):
                raise ValueError(f"unknown channel mode {ch!r}")
        if not self.data_snr_db or not self.eval_snr_db:
            raise ValueError("SNR lists must be nonempty")
        if self.interleave not in ("auto", "on", "off"):
            raise ValueError("interleave must be auto, on or off")
        for a in self.allocations:
            if len(a) != 3:
                raise ValueError(f"bit allocation {a} needs three components")
        if self.alist and not Path(self.alist).is_file():
            raise ValueError(f"alist file {self.alist} does not exist")
        if self.polar_frozen and not Path(self.polar_frozen).is_file():
            raise ValueError(f"frozen-set file {self.polar_frozen} does not exist")

    @property
    def use_interleaver(self) -> bool:
        if self.interleave == "auto":
            return self.eval_channel == "etu"
        return self.interleave == "on"

    def path(self, name: str) -> Path:
        return self.workdir / name

    def data_hash(self) -> bytes:
        """SHA-256 over every setting that influences the training data."""
        keys = ["experiment.K", "code.name", "code.alist", "code.polar_n", "code.polar_k",
                "code.polar_design_snr_db", "code.polar_frozen",
                "data.channel", "data.snr_db", "data.codewords_per_snr"]
        text = "\n".join(f"{k}={self.raw.get(k, '')}" for k in keys) + f"\nseed={self.seed}"
        return hashlib.sha256(text.encode()).digest()


def _read_preset(name: str) -> str:
    return resources.files("llrquant.harness").joinpath(f"presets/{name}.ini").read_text()


def load_config(source: str | Path | None = None, overrides=(), seed: int | None = None) -> ExperimentConfig:
    """Read a config file (or preset name) on top of the defaults.

    Args:
        source: path to an INI file, a preset name, or None for defaults.
        overrides: ``"section.key=value"`` strings applied last.
        seed: replaces ``experiment.seed`` when given.

    Raises:
        ValueError: on unknown sections or keys and on invalid values.
    """
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str
    cp.read_dict(DEFAULTS)
    label = "defaults"
    if source is not None:
        if str(source) in PRESETS:
            text = _read_preset(str(source))
            label = f"preset:{source}"
        else:
            p = Path(source)
            try:
                text = p.read_text()
            except OSError as exc:
                raise ValueError(f"cannot read config {p}: {exc}") from exc
            label = str(p)
        extra = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
        extra.optionxform = str
        try:
            extra.read_string(text, source=label)
        except configparser.Error as exc:
            raise ValueError(str(exc)) from exc
        _merge(cp, extra, label)
    for item in overrides:
        key, sep, value = item.partition("=")
        section, dot, name = key.strip().partition(".")
        if not sep or not dot:
            raise ValueError(f"override {item!r} must look like section.key=value")
        _check_key(section, name, "override")
        cp[section][name] = value.strip()
    if seed is not None:
        cp["experiment"]["seed"] = str(seed)
    return _build(cp, label)


def _check_key(section, name, where):
    if section not in DEFAULTS:
        raise ValueError(f"{where}: unknown section [{section}]")
    if name not in DEFAULTS[section]:
        raise ValueError(f"{where}: unknown key {name!r} in [{section}]")


def _merge(cp, extra, label):
    for section in extra.sections():
        for name, value in extra[section].items():
            _check_key(section, name, label)
            cp[section][name] = value


def _build(cp, label) -> ExperimentConfig:
    e, c, d, t, q, v = (cp[s] for s in ("experiment", "code", "data", "train", "quantizer", "eval"))
    tkw = {}
    for f in fields(TrainConfig):
        if f.name in ("seed", "hidden"):
            continue
        text = t[f.name].strip()
        if f.name in ("stage2_mode", "weight_mode", "lr_schedule", "dtype"):
            tkw[f.name] = text
        elif f.name in ("batch_size", "epochs_stage1", "rounds", "epochs_stage2"):
            tkw[f.name] = int(text)
        elif f.name == "stage2_learning_rate":
            tkw[f.name] = float(text) if text else None
        else:
            tkw[f.name] = float(text)
    seed = int(e["seed"])
    tkw["seed"] = seed
    train = TrainConfig(**tkw)
    rng_text = q["mmi_threshold_range"].strip()
    raw = {f"{s}.{k}": cp[s][k] for s in DEFAULTS for k in DEFAULTS[s]}
    return ExperimentConfig(
        K=e.getint("K"),
        seed=seed,
        workdir=Path(e["workdir"]),
        code=c["name"],
        alist=c["alist"].strip(),
        bp_iterations=c.getint("bp_iterations"),
        polar_n=c.getint("polar_n"),
        polar_k=c.getint("polar_k"),
        polar_design_snr_db=c.getfloat("polar_design_snr_db"),
        polar_frozen=c["polar_frozen"].strip(),
        polar_list_size=c.getint("polar_list_size"),
        data_channel=d["channel"],
        data_snr_db=_floats(d["snr_db"]),
        codewords_per_snr=d.getint("codewords_per_snr"),
        train=train,
        allocations=_allocations(q["allocations"]),
        kmeans={
            "minibatch_size": q.getint("kmeans_minibatch"),
            "iterations": q.getint("kmeans_iterations"),
            "refine_passes": q.getint("refine_passes"),
            "init_sample": q.getint("init_sample"),
        },
        mmi_bits=q.getint("mmi_bits"),
        mmi_bins=q.getint("mmi_bins"),
        mmi_threshold_range=_floats(rng_text) if rng_text else None,
        mmi_codewords_per_snr=q.getint("mmi_codewords_per_snr"),
        eval_channel=v["channel"],
        eval_snr_db=_floats(v["snr_db"]),
        eval_codewords=v.getint("codewords"),
        eval_chunk=v.getint("chunk"),
        schemes=tuple(s.strip() for s in v["schemes"].split(",") if s.strip()),
        interleave=v["interleave"],
        noiseless=v.getboolean("noiseless"),
        source=label,
        raw=raw,
    )
