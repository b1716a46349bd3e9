"""Branched autoencoder for soft-bit vectors, trained with hand-written backprop.

One encoder maps ``K`` soft bits to a 3-dimensional latent vector in
``[-1, 1]^3``; ``K`` independent decoders each reconstruct one soft bit from
that latent vector. Decoder parameters are stored stacked along a leading
axis of length ``K`` so all branches run in one batched matmul, but each
slice is an independent network.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

LATENT_DIM = 3
RELU, TANH = "relu", "tanh"
_ACT_CODES = {RELU: 0, TANH: 1}


class StaleCacheError(RuntimeError):
    """Backward pass requested with a cache from an older parameter state."""


@dataclass
class DenseLayer:
    """``y = act(W x + b)`` with ``W`` of shape ``(out, in)``."""

    W: np.ndarray
    b: np.ndarray
    activation: str

    def __post_init__(self):
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],):
            raise ValueError(f"inconsistent layer shapes {self.W.shape} / {self.b.shape}")
        if self.activation not in _ACT_CODES:
            raise ValueError(f"unknown activation {self.activation!r}")


def _act(x, kind):
    return np.maximum(x, 0.0) if kind == RELU else np.tanh(x)


def _act_grad(a, kind):
    # derivative expressed through the activation output
    return (a > 0).astype(a.dtype) if kind == RELU else 1.0 - a * a


def _init_weight(rng, shape, kind):
    fan_out, fan_in = shape[-2], shape[-1]
    if kind == RELU:
        limit = np.sqrt(6.0 / fan_in)
    else:
        limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class BranchedAutoencoder:
    """Encoder ``K -> h -> h -> h -> 3`` and ``K`` decoders ``3 -> h -> h -> h -> 1``.

    Hidden layers use ReLU; the latent and the outputs use tanh. ``params``
    maps names to arrays: ``enc{i}.W``/``enc{i}.b`` for encoder layer ``i``
    and ``dec{i}.W``/``dec{i}.b`` for decoder layer ``i`` with a leading
    axis indexing the decoder.
    """

    def __init__(self, params: dict, K: int, activations_enc, activations_dec):
        self.params = params
        self.K = K
        self.enc_acts = tuple(activations_enc)
        self.dec_acts = tuple(activations_dec)
        self.version = 0
        self._check()

    @classmethod
    def create(cls, K: int, rng: np.random.Generator, hidden: int | None = None, n_hidden: int = 3):
        """Randomly initialised network; ``hidden`` defaults to ``4 K``."""
        if K < 1:
            raise ValueError("K must be positive")
        h = 4 * K if hidden is None else hidden
        enc_dims = [K] + [h] * n_hidden + [LATENT_DIM]
        dec_dims = [LATENT_DIM] + [h] * n_hidden + [1]
        enc_acts = [RELU] * n_hidden + [TANH]
        dec_acts = [RELU] * n_hidden + [TANH]
        params = {}
        for i, act in enumerate(enc_acts):
            params[f"enc{i}.W"] = _init_weight(rng, (enc_dims[i + 1], enc_dims[i]), act)
            params[f"enc{i}.b"] = np.zeros(enc_dims[i + 1])
        for i, act in enumerate(dec_acts):
            params[f"dec{i}.W"] = _init_weight(rng, (K, dec_dims[i + 1], dec_dims[i]), act)
            params[f"dec{i}.b"] = np.zeros((K, dec_dims[i + 1]))
        return cls(params, K, enc_acts, dec_acts)

    def _check(self):
        prev = self.K
        for i in range(len(self.enc_acts)):
            W, b = self.params[f"enc{i}.W"], self.params[f"enc{i}.b"]
            if W.shape[1] != prev or b.shape != (W.shape[0],):
                raise ValueError(f"encoder layer {i} has inconsistent shape {W.shape}")
            prev = W.shape[0]
        if prev != LATENT_DIM:
            raise ValueError(f"latent dimension must be {LATENT_DIM}, got {prev}")
        for i in range(len(self.dec_acts)):
            W, b = self.params[f"dec{i}.W"], self.params[f"dec{i}.b"]
            if W.shape[0] != self.K or W.shape[2] != prev or b.shape != W.shape[:2]:
                raise ValueError(f"decoder layer {i} has inconsistent shape {W.shape}")
            prev = W.shape[1]
        if prev != 1:
            raise ValueError("decoders must output a scalar")

    @property
    def encoder(self) -> list[DenseLayer]:
        return [
            DenseLayer(self.params[f"enc{i}.W"], self.params[f"enc{i}.b"], act)
            for i, act in enumerate(self.enc_acts)
        ]

    def decoder(self, k: int) -> list[DenseLayer]:
        """Layers of decoder ``k`` (views into the stacked parameters)."""
        return [
            DenseLayer(self.params[f"dec{i}.W"][k], self.params[f"dec{i}.b"][k], act)
            for i, act in enumerate(self.dec_acts)
        ]

    @property
    def dtype(self):
        return self.params["enc0.W"].dtype

    def astype(self, dtype) -> "BranchedAutoencoder":
        return BranchedAutoencoder(
            {k: v.astype(dtype) for k, v in self.params.items()}, self.K, self.enc_acts, self.dec_acts
        )

    def encoder_keys(self):
        return [k for k in self.params if k.startswith("enc")]

    def decoder_keys(self):
        return [k for k in self.params if k.startswith("dec")]

    def n_parameters(self) -> int:
        return sum(p.size for p in self.params.values())

    def copy(self) -> "BranchedAutoencoder":
        return BranchedAutoencoder(
            {k: v.copy() for k, v in self.params.items()}, self.K, self.enc_acts, self.dec_acts
        )

    def touch(self):
        """Mark parameters as modified (invalidates forward caches)."""
        self.version += 1

    # -- inference helpers -------------------------------------------------

    def encode(self, soft: np.ndarray, chunk: int = 1 << 16) -> np.ndarray:
        soft = np.asarray(soft, dtype=self.dtype)
        out = np.empty((soft.shape[0], LATENT_DIM), dtype=self.dtype)
        for s in range(0, soft.shape[0], chunk):
            a = soft[s:s + chunk]
            for i, act in enumerate(self.enc_acts):
                a = _act(a @ self.params[f"enc{i}.W"].T + self.params[f"enc{i}.b"], act)
            out[s:s + chunk] = a
        return out

    def decode(self, z: np.ndarray, chunk: int = 1 << 16) -> np.ndarray:
        z = np.asarray(z, dtype=self.dtype)
        out = np.empty((z.shape[0], self.K), dtype=self.dtype)
        for s in range(0, z.shape[0], chunk):
            out[s:s + chunk] = self._decode_batch(z[s:s + chunk])[-1][..., 0].T
        return out

    def reconstruct(self, soft: np.ndarray) -> np.ndarray:
        return self.decode(self.encode(soft))

    def _decode_batch(self, z):
        acts = []
        a = np.matmul(z[None], np.swapaxes(self.params["dec0.W"], 1, 2))
        a = _act(a + self.params["dec0.b"][:, None, :], self.dec_acts[0])
        acts.append(a)
        for i in range(1, len(self.dec_acts)):
            W, b = self.params[f"dec{i}.W"], self.params[f"dec{i}.b"]
            a = _act(np.matmul(a, np.swapaxes(W, 1, 2)) + b[:, None, :], self.dec_acts[i])
            acts.append(a)
        return acts


@dataclass
class ForwardCache:
    version: int
    inputs: np.ndarray
    enc_acts: list
    z_in: np.ndarray
    dec_acts: list
    net_id: int = 0


def forward(net: BranchedAutoencoder, soft: np.ndarray, train_noise: bool = False,
            rng: np.random.Generator | None = None, noise_sigma: float = 1e-3):
    """Forward pass on a batch ``(B, K)``.

    Returns:
        ``(z, recon, cache)`` where ``z`` is the clean latent batch ``(B, 3)``,
        ``recon`` the reconstructed soft bits ``(B, K)`` computed from the
        (optionally noise-perturbed) latent, and ``cache`` the activations
        needed by :func:`backward`.
    """
    soft = np.asarray(soft, dtype=net.dtype)
    if soft.ndim != 2 or soft.shape[1] != net.K:
        raise ValueError(f"expected input of shape (B, {net.K}), got {soft.shape}")
    enc = []
    a = soft
    for i, act in enumerate(net.enc_acts):
        a = _act(a @ net.params[f"enc{i}.W"].T + net.params[f"enc{i}.b"], act)
        enc.append(a)
    z = a
    z_in = z
    if train_noise:
        if rng is None:
            raise ValueError("train_noise requires an rng")
        z_in = z + (noise_sigma * rng.standard_normal(z.shape)).astype(z.dtype)
    dec = net._decode_batch(z_in)
    recon = dec[-1][..., 0].T
    return z, recon, ForwardCache(net.version, soft, enc, z_in, dec, id(net))


def sample_loss(recon, target, eps: float = 1e-6):
    """Relative squared error ``|recon - target|^2 / (|target| + eps)``."""
    recon = np.asarray(recon, dtype=float)
    target = np.asarray(target, dtype=float)
    return (recon - target) ** 2 / (np.abs(target) + eps)


def check_bit_weights(w, K: int | None = None) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.ndim != 1 or (K is not None and w.size != K):
        raise ValueError("bit weights must be a vector of length K")
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
        raise ValueError(f"bit weights must be nonnegative and sum to 1, got sum {w.sum()!r}")
    return w


def per_bit_loss(recon, target, eps: float = 1e-6) -> np.ndarray:
    """Batch mean of :func:`sample_loss` for every bit position."""
    return sample_loss(recon, target, eps).mean(axis=0)


def total_loss(recon, target, w, eps: float = 1e-6) -> float:
    """``sum_k w_k * mean_i sample_loss(recon[i, k], target[i, k])``.

    Raises:
        ValueError: if ``w`` is negative somewhere or does not sum to one.
    """
    w = check_bit_weights(w, np.shape(target)[-1])
    return float(per_bit_loss(recon, target, eps) @ w)


def backward(net: BranchedAutoencoder, cache: ForwardCache, target, w, eps: float = 1e-6,
             encoder: bool = True) -> dict:
    """Exact gradients of :func:`total_loss` w.r.t. every parameter.

    Args:
        cache: result of :func:`forward` on the same batch.
        target: soft bits the reconstruction is compared with, ``(B, K)``.
        w: per-bit weights of the total loss.
        encoder: when False, the encoder gradients are skipped (frozen).

    Raises:
        StaleCacheError: if parameters changed since the forward pass or the
            target batch does not match the cached one.
    """
    if cache.version != net.version or cache.net_id != id(net):
        raise StaleCacheError("forward cache does not belong to the current parameters")
    target = np.asarray(target, dtype=net.dtype)
    recon = cache.dec_acts[-1][..., 0].T
    if target.shape != recon.shape:
        raise StaleCacheError(f"target shape {target.shape} does not match cached batch {recon.shape}")
    w = check_bit_weights(w, net.K)
    B = target.shape[0]
    grads = {}

    # dL/drecon, laid out (K, B, 1) like the decoder activations
    scale = (w / B).astype(net.dtype)
    d = (2 * (recon - target) / (np.abs(target) + net.dtype.type(eps)) * scale).T[..., None]
    for i in range(len(net.dec_acts) - 1, -1, -1):
        a = cache.dec_acts[i]
        d = d * _act_grad(a, net.dec_acts[i])
        prev = cache.dec_acts[i - 1] if i > 0 else None
        if prev is None:
            grads[f"dec{i}.W"] = np.matmul(np.swapaxes(d, 1, 2), cache.z_in[None])
        else:
            grads[f"dec{i}.W"] = np.matmul(np.swapaxes(d, 1, 2), prev)
        grads[f"dec{i}.b"] = d.sum(axis=1)
        if i > 0:
            d = np.matmul(d, net.params[f"dec{i}.W"])
        elif encoder:
            # every branch feeds back into the shared latent
            d = np.matmul(d, net.params["dec0.W"]).sum(axis=0)
    if not encoder:
        return grads

    for i in range(len(net.enc_acts) - 1, -1, -1):
        a = cache.enc_acts[i]
        d = d * _act_grad(a, net.enc_acts[i])
        prev = cache.enc_acts[i - 1] if i > 0 else cache.inputs
        grads[f"enc{i}.W"] = d.T @ prev
        grads[f"enc{i}.b"] = d.sum(axis=0)
        if i > 0:
            d = d @ net.params[f"enc{i}.W"]
    return grads


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState, mask: np.ndarray | None = None):
    """Bias-corrected Adam update applied in place to ``params``.

    Only keys present in ``grads`` are touched. ``mask`` (boolean, one entry
    per decoder) restricts stacked ``dec*`` parameters to selected slices;
    masked-out slices keep both their values and their optimiser moments,
    and their step counters do not advance.
    """
    for key, g in grads.items():
        p = params[key]
        if key not in state.m:
            state.m[key] = np.zeros_like(p)
            state.v[key] = np.zeros_like(p)
            lead = p.shape[0] if key.startswith("dec") else 1
            state.t[key] = np.zeros(lead, dtype=np.int64)
        m, v, t = state.m[key], state.v[key], state.t[key]
        if mask is not None and key.startswith("dec"):
            sel = np.asarray(mask, dtype=bool)
        else:
            sel = slice(None)
        t[sel] += 1
        m[sel] = state.beta1 * m[sel] + (1.0 - state.beta1) * g[sel]
        v[sel] = state.beta2 * v[sel] + (1.0 - state.beta2) * g[sel] ** 2
        tt = t[sel].astype(float)
        if key.startswith("dec"):
            tt = tt.reshape((-1,) + (1,) * (p.ndim - 1))
        m_hat = m[sel] / (1.0 - state.beta1 ** tt)
        v_hat = v[sel] / (1.0 - state.beta2 ** tt)
        p[sel] = p[sel] - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


def update_bit_weights(errors, previous=None) -> np.ndarray:
    """Normalise per-bit mean errors into loss weights ``e_k / sum(e)``.

    If every error is zero the previous weights are returned unchanged
    (uniform when none are given).
    """
    e = np.asarray(errors, dtype=float)
    if np.any(e < 0):
        raise ValueError("reconstruction errors must be nonnegative")
    total = e.sum()
    if total <= 0:
        logger.info("all reconstruction errors are zero; keeping previous weights")
        return np.full(e.size, 1.0 / e.size) if previous is None else np.asarray(previous, float)
    return e / total


def weights_ordered(w, K: int | None = None) -> bool:
    """Whether ``w`` is non-decreasing within each half of the bit positions."""
    w = np.asarray(w)
    h = (K or w.size) // 2
    return bool(np.all(np.diff(w[:h]) >= 0) and np.all(np.diff(w[h:]) >= 0))


@dataclass(frozen=True)
class TrainConfig:
    """Hyper-parameters of the two-stage training procedure."""

    batch_size: int = 65536
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    latent_noise_sigma: float = 1e-3
    epochs_stage1: int = 10
    rounds: int = 4
    epochs_stage2: int = 10
    stage2_mode: str = "equal"  # or "proportional" to the final bit weights
    weight_mode: str = "adaptive"  # or "inverse_mean_abs" (fixed weights)
    loss_eps: float = 1e-6
    lr_schedule: str = "constant"  # or "cosine" decay to lr_final_fraction * learning_rate
    lr_final_fraction: float = 0.01
    stage2_learning_rate: float | None = None  # defaults to learning_rate
    dtype: str = "float64"  # arithmetic precision of training; float32 halves the cost
    hidden: int | None = None
    seed: int = 0

    def __post_init__(self):
        for name in ("batch_size", "learning_rate", "latent_noise_sigma", "loss_eps", "adam_eps"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("epochs_stage1", "rounds", "epochs_stage2"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.stage2_mode not in ("equal", "proportional"):
            raise ValueError(f"unknown stage2_mode {self.stage2_mode!r}")
        if self.weight_mode not in ("adaptive", "inverse_mean_abs"):
            raise ValueError(f"unknown weight_mode {self.weight_mode!r}")
        if self.lr_schedule not in ("constant", "cosine"):
            raise ValueError(f"unknown lr_schedule {self.lr_schedule!r}")
        if not 0 < self.lr_final_fraction <= 1:
            raise ValueError("lr_final_fraction must be in (0, 1]")
        if self.stage2_learning_rate is not None and not self.stage2_learning_rate > 0:
            raise ValueError("stage2_learning_rate must be positive")
        if self.dtype not in ("float64", "float32"):
            raise ValueError("dtype must be float64 or float32")

    def with_(self, **kw) -> "TrainConfig":
        return replace(self, **kw)


@dataclass
class TrainResult:
    net: BranchedAutoencoder
    weight_history: list
    history: list  # dict rows, see HISTORY_FIELDS
    encoder_after_stage1: dict


def learning_rate_at(cfg: TrainConfig, base: float, step: int, total: int) -> float:
    """Learning rate of ``step`` out of ``total`` under the configured schedule."""
    if cfg.lr_schedule == "constant" or total <= 1:
        return base
    frac = cfg.lr_final_fraction
    return base * (frac + (1.0 - frac) * 0.5 * (1.0 + np.cos(np.pi * step / (total - 1))))


def _batches(rng, n, batch_size):
    order = rng.permutation(n)
    for s in range(0, n, batch_size):
        yield order[s:s + batch_size]


def mean_bit_errors(net: BranchedAutoencoder, soft: np.ndarray, eps: float = 1e-6,
                    chunk: int = 1 << 16) -> np.ndarray:
    """Per-bit mean reconstruction loss over a whole dataset (no latent noise)."""
    acc = np.zeros(net.K)
    for s in range(0, soft.shape[0], chunk):
        part = soft[s:s + chunk]
        acc += sample_loss(net.reconstruct(part), part, eps).sum(axis=0)
    return acc / soft.shape[0]


def stage2_epochs(cfg: TrainConfig, w: np.ndarray) -> np.ndarray:
    K = w.size
    if cfg.stage2_mode == "equal":
        return np.full(K, cfg.epochs_stage2, dtype=np.int64)
    return np.maximum(1, np.rint(cfg.epochs_stage2 * K * w)).astype(np.int64)


def train(dataset: np.ndarray, config: TrainConfig, net: BranchedAutoencoder | None = None,
          progress=None) -> TrainResult:
    """Two-stage training of a branched autoencoder on soft bits ``(N, K)``.

    Stage 1 trains everything jointly for ``rounds`` rounds of
    ``epochs_stage1`` epochs, re-deriving the per-bit loss weights from the
    mean reconstruction errors after each round. Stage 2 freezes the encoder
    and trains each decoder on its own bit for ``epochs_stage2`` epochs.

    Raises:
        ValueError: if the dataset holds fewer rows than one batch.
    """
    soft = np.asarray(dataset, dtype=config.dtype)
    if soft.ndim != 2:
        raise ValueError("dataset must be a (N, K) matrix")
    N, K = soft.shape
    if N < config.batch_size:
        raise ValueError(f"dataset has {N} rows, fewer than batch_size={config.batch_size}")
    rng = np.random.default_rng(config.seed)
    if net is None:
        net = BranchedAutoencoder.create(K, rng, hidden=config.hidden)
    elif net.K != K:
        raise ValueError("network K does not match dataset")
    net = net.astype(config.dtype)
    steps_per_epoch = -(-N // config.batch_size)
    eps = config.loss_eps
    say = progress or (lambda msg: None)

    if config.weight_mode == "inverse_mean_abs":
        inv = 1.0 / np.maximum(np.abs(soft).mean(axis=0), 1e-12)
        w = inv / inv.sum()
    else:
        w = np.full(K, 1.0 / K)
    weight_history = [w.copy()]
    history = []

    opt = AdamState(config.learning_rate, config.beta1, config.beta2, config.adam_eps)
    total = config.rounds * config.epochs_stage1 * steps_per_epoch
    step = 0
    for r in range(config.rounds):
        for ep in range(config.epochs_stage1):
            loss_sum, err_sum, count = 0.0, np.zeros(K), 0
            for idx in _batches(rng, N, config.batch_size):
                opt.lr = learning_rate_at(config, config.learning_rate, step, total)
                step += 1
                batch = soft[idx]
                _, recon, cache = forward(net, batch, True, rng, config.latent_noise_sigma)
                per_bit = per_bit_loss(recon, batch, eps)
                grads = backward(net, cache, batch, w, eps)
                adam_step(net.params, grads, opt)
                net.touch()
                loss_sum += float(per_bit @ w) * len(idx)
                err_sum += per_bit * len(idx)
                count += len(idx)
            history.append(_history_row(1, r, ep, err_sum / count, w, loss_sum / count))
            say(f"stage 1 round {r} epoch {ep}: loss {loss_sum / count:.6g}")
        if config.weight_mode == "adaptive":
            e = mean_bit_errors(net, soft, eps)
            w = update_bit_weights(e, w)
            weight_history.append(w.copy())
            if not weights_ordered(w):
                logger.warning("bit weights %s break the expected per-half ordering", np.round(w, 4))

    encoder_after_stage1 = {k: net.params[k].copy() for k in net.encoder_keys()}

    epochs = stage2_epochs(config, w)
    if epochs.max(initial=0) > 0:
        z = net.encode(soft)
        lr2 = config.stage2_learning_rate or config.learning_rate
        opt2 = AdamState(lr2, config.beta1, config.beta2, config.adam_eps)
        ones = np.full(K, 1.0 / K)
        total2 = int(epochs.max()) * steps_per_epoch
        step = 0
        for ep in range(int(epochs.max())):
            mask = ep < epochs
            err_sum, count = np.zeros(K), 0
            for idx in _batches(rng, N, config.batch_size):
                opt2.lr = learning_rate_at(config, lr2, step, total2)
                step += 1
                grads, per_bit = _decoder_step(net, z[idx], soft[idx], rng, config, ones)
                adam_step(net.params, grads, opt2, mask=mask)
                net.touch()
                err_sum += per_bit * len(idx)
                count += len(idx)
            history.append(_history_row(2, "", ep, err_sum / count, w, float((err_sum / count) @ w)))
            say(f"stage 2 epoch {ep}: per-bit loss {np.round(err_sum / count, 6)}")
    if net.dtype != np.float64:
        net = net.astype(np.float64)
        encoder_after_stage1 = {k: v.astype(np.float64) for k, v in encoder_after_stage1.items()}
    return TrainResult(net, weight_history, history, encoder_after_stage1)


def _decoder_step(net, z, target, rng, config, ones):
    z_in = z + (config.latent_noise_sigma * rng.standard_normal(z.shape)).astype(z.dtype)
    dec = net._decode_batch(z_in)
    cache = ForwardCache(net.version, target, [], z_in, dec, id(net))
    recon = dec[-1][..., 0].T
    per_bit = per_bit_loss(recon, target, config.loss_eps)
    # Uniform weights scaled by K give every decoder its own unweighted mean
    # loss; branches share no parameters once the encoder is frozen.
    grads = backward(net, cache, target, ones, config.loss_eps, encoder=False)
    grads = {k: g * net.K for k, g in grads.items()}
    return grads, per_bit


def train_decoder(net: BranchedAutoencoder, k: int, z: np.ndarray, target: np.ndarray,
                  config: TrainConfig, epochs: int, rng: np.random.Generator):
    """Train decoder ``k`` alone on ``(z, target[:, k])`` pairs; others untouched."""
    K = net.K
    mask = np.zeros(K, dtype=bool)
    mask[k] = True
    opt = AdamState(config.learning_rate, config.beta1, config.beta2, config.adam_eps)
    ones = np.full(K, 1.0 / K)
    for _ in range(epochs):
        for idx in _batches(rng, z.shape[0], config.batch_size):
            grads, _ = _decoder_step(net, z[idx], target[idx], rng, config, ones)
            adam_step(net.params, grads, opt, mask=mask)
            net.touch()


HISTORY_FIELDS = ("stage", "round", "epoch", "total_loss")


def _history_row(stage, rnd, epoch, errors, w, loss):
    row = {"stage": stage, "round": rnd, "epoch": epoch, "total_loss": loss}
    for k, e in enumerate(errors):
        row[f"e{k + 1}"] = float(e)
    for k, wk in enumerate(w):
        row[f"w{k + 1}"] = float(wk)
    return row


def write_history_csv(rows: list, path) -> None:
    import csv

    if not rows:
        raise ValueError("empty history")
    fields = list(rows[0].keys())
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


# -- serialisation ---------------------------------------------------------

MODEL_MAGIC = b"LLRQNET\0"
MODEL_VERSION = 1
_DTYPES = {8: "<f8", 4: "<f4"}


def save_model(net: BranchedAutoencoder, path, dtype_bytes: int = 8) -> None:
    """Write the network in the versioned binary model format.

    Layout (little-endian): 8-byte magic ``LLRQNET\\0``; u32 version; u32 K;
    u32 network count (1 + K; encoder first). Per network: u32 layer count,
    then per layer u32 out, u32 in, u8 activation (0 relu, 1 tanh),
    u8 element size (8 or 4), 2 pad bytes, ``out*in`` row-major weights and
    ``out`` biases in that element type.
    """
    if dtype_bytes not in _DTYPES:
        raise ValueError("dtype_bytes must be 8 (float64) or 4 (float32 export)")
    dt = _DTYPES[dtype_bytes]
    nets = [net.encoder] + [net.decoder(k) for k in range(net.K)]
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<III", MODEL_VERSION, net.K, len(nets)))
        for layers in nets:
            fh.write(struct.pack("<I", len(layers)))
            for layer in layers:
                out_dim, in_dim = layer.W.shape
                fh.write(struct.pack("<IIBBxx", out_dim, in_dim, _ACT_CODES[layer.activation], dtype_bytes))
                fh.write(np.ascontiguousarray(layer.W, dtype=dt).tobytes())
                fh.write(np.ascontiguousarray(layer.b, dtype=dt).tobytes())


def load_model(path) -> BranchedAutoencoder:
    data = Path(path).read_bytes()
    if data[:8] != MODEL_MAGIC:
        raise ValueError(f"{path}: not a model file")
    version, K, n_nets = struct.unpack_from("<III", data, 8)
    if version != MODEL_VERSION:
        raise ValueError(f"{path}: unsupported model version {version}")
    if n_nets != K + 1:
        raise ValueError(f"{path}: expected {K + 1} networks, found {n_nets}")
    pos = 20
    codes = {v: k for k, v in _ACT_CODES.items()}
    nets = []
    for _ in range(n_nets):
        (n_layers,) = struct.unpack_from("<I", data, pos)
        pos += 4
        layers = []
        for _ in range(n_layers):
            out_dim, in_dim, act, size = struct.unpack_from("<IIBBxx", data, pos)
            pos += 12
            dt = np.dtype(_DTYPES[size])
            W = np.frombuffer(data, dt, out_dim * in_dim, pos).reshape(out_dim, in_dim)
            pos += W.nbytes
            b = np.frombuffer(data, dt, out_dim, pos)
            pos += b.nbytes
            layers.append(DenseLayer(W.astype(float), b.astype(float), codes[act]))
        nets.append(layers)
    params = {}
    for i, layer in enumerate(nets[0]):
        params[f"enc{i}.W"], params[f"enc{i}.b"] = layer.W, layer.b
    for i in range(len(nets[1])):
        params[f"dec{i}.W"] = np.stack([d[i].W for d in nets[1:]])
        params[f"dec{i}.b"] = np.stack([d[i].b for d in nets[1:]])
    return BranchedAutoencoder(
        params, K, [l.activation for l in nets[0]], [l.activation for l in nets[1]]
    )
