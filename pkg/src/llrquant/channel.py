"""Fading channel realisations and noisy transmission of coded bits."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .modem import Constellation, map_bits

# LTE Extended Typical Urban profile (3GPP TS 36.104, Annex B.2)
ETU_DELAYS_NS = (0.0, 50.0, 120.0, 200.0, 230.0, 500.0, 1600.0, 2300.0, 5000.0)
ETU_POWERS_DB = (-1.0, -1.0, -1.0, 0.0, 0.0, 0.0, -3.0, -5.0, -7.0)


@dataclass(frozen=True)
class EtuProfile:
    tap_delays: tuple = ETU_DELAYS_NS
    tap_powers: tuple = ETU_POWERS_DB
    fft_size: int = 1024
    used_subcarriers: int = 600
    subcarrier_spacing: float = 15e3

    def __post_init__(self):
        if len(self.tap_delays) == 0:
            raise ValueError("ETU profile needs at least one tap")
        if len(self.tap_delays) != len(self.tap_powers):
            raise ValueError("tap_delays and tap_powers differ in length")
        if not 0 < self.used_subcarriers <= self.fft_size:
            raise ValueError("used_subcarriers must be in [1, fft_size]")


@dataclass
class ChannelUse:
    """Batch of channel uses; all arrays share one shape."""

    h: np.ndarray
    y: np.ndarray
    sigma2: np.ndarray = field(default=None)

    def __post_init__(self):
        self.sigma2 = np.broadcast_to(np.asarray(self.sigma2, dtype=float), np.shape(self.y))
        if np.any(~(self.sigma2 > 0)):
            raise ValueError("sigma2 must be positive")


def complex_normal(rng: np.random.Generator, size, var: float = 1.0) -> np.ndarray:
    """Circularly symmetric CN(0, var) samples."""
    s = np.sqrt(var / 2.0)
    return s * rng.standard_normal(size) + 1j * s * rng.standard_normal(size)


def rayleigh_flat(rng: np.random.Generator, size=None):
    """Draw ``h ~ CN(0, 1)``; returns a scalar when ``size`` is None."""
    h = complex_normal(rng, size if size is not None else 1)
    return h if size is not None else complex(h[0])


def etu_frequency_response(profile: EtuProfile, rng: np.random.Generator, n_realizations=None):
    """Per-subcarrier frequency response of one (or several) ETU draws.

    Used subcarriers are the ``used_subcarriers`` bins centred on DC
    (excluding DC itself when the count is even), spaced by
    ``subcarrier_spacing``.

    Returns:
        Array ``(used_subcarriers,)`` or ``(n_realizations, used_subcarriers)``.
    """
    delays = np.asarray(profile.tap_delays, dtype=float) * 1e-9
    powers = 10.0 ** (np.asarray(profile.tap_powers, dtype=float) / 10.0)
    powers = powers / powers.sum()
    n = 1 if n_realizations is None else n_realizations
    gains = complex_normal(rng, (n, len(delays))) * np.sqrt(powers)
    half = profile.used_subcarriers // 2
    idx = np.arange(-half, profile.used_subcarriers - half)
    if profile.used_subcarriers % 2 == 0:
        idx = np.where(idx >= 0, idx + 1, idx)
    freqs = idx * profile.subcarrier_spacing
    steering = np.exp(-2j * np.pi * np.outer(delays, freqs))
    H = gains @ steering
    return H[0] if n_realizations is None else H


def noise_variance(snr_db: float) -> float:
    """``sigma^2`` for unit symbol and channel power; ``inf`` dB gives 0."""
    if np.isposinf(snr_db):
        return 0.0
    return 10.0 ** (-snr_db / 10.0)


def transmit(
    bits: np.ndarray,
    c: Constellation,
    mode: str,
    snr_db: float,
    rng: np.random.Generator,
    profile: EtuProfile | None = None,
    noiseless_sigma2: float = 1e-6,
) -> ChannelUse:
    """Map codeword bits to symbols and pass them through the channel.

    ``bits`` has shape ``(n,)`` or ``(B, n)`` with ``n`` divisible by ``K``.
    In ``flat`` mode every symbol sees an independent ``CN(0,1)`` gain; in
    ``etu`` mode each codeword gets one ETU realisation with its symbols on
    consecutive subcarriers. ``snr_db = inf`` disables the noise; the
    returned ``sigma2`` is then ``noiseless_sigma2`` so L-values stay finite.
    """
    bits = np.asarray(bits)
    single = bits.ndim == 1
    if single:
        bits = bits[None]
    B, n = bits.shape
    if n % c.K:
        raise ValueError(f"codeword length {n} not divisible by K={c.K}")
    n_sym = n // c.K
    x = map_bits(bits.reshape(B, n_sym, c.K), c)

    if mode == "flat":
        h = complex_normal(rng, (B, n_sym))
    elif mode == "etu":
        profile = profile or EtuProfile()
        if n_sym > profile.used_subcarriers:
            raise ValueError("codeword needs more subcarriers than the profile provides")
        h = etu_frequency_response(profile, rng, B)[:, :n_sym]
    else:
        raise ValueError(f"unknown channel mode {mode!r}")

    var = noise_variance(snr_db)
    noise = complex_normal(rng, (B, n_sym), var) if var > 0 else np.zeros((B, n_sym), complex)
    y = h * x + noise
    sigma2 = var if var > 0 else noiseless_sigma2
    if single:
        h, y = h[0], y[0]
    return ChannelUse(h=h, y=y, sigma2=sigma2)
