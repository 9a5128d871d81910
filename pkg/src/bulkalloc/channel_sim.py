"""Synthetic fading-channel generator for an R-resource pool.

Each realization starts from a fresh tapped-delay-line draw (``v`` circularly
symmetric complex Gaussian taps, unit total average power).  The taps then
evolve for ``k + l`` samples by independent per-tap phase rotations drawn from
``Uniform[-delta, delta]``.  At each sample the zero-padded taps are taken to
the frequency domain and ``R`` equally spaced bins become the resources.

The first ``k`` magnitudes of every resource are the predictor input; the last
``l`` complex gains determine the achieved rate and the outage labels.

Randomness always comes from an explicit ``numpy.random.Generator``.  Use
:func:`derive_stream` to obtain one for a given (seed, experiment, epoch,
batch) tuple.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace

import numpy as np

RATE_AGGREGATIONS = ("mean", "min")

# Realizations are simulated in blocks to bound the (n, k+l, fft_size) buffer.
_BLOCK = 256


@dataclass(frozen=True)
class SimConfig:
    R: int = 16
    v: int = 32
    k: int = 100
    l: int = 10
    fft_size: int = 64
    delta: float = 0.1
    snr_db: float = 0.0
    gamma_th: float = 1.2
    rate_agg: str = "mean"
    master_seed: int = 0

    def __post_init__(self):
        if self.R < 1:
            raise ValueError(f"R must be >= 1, got {self.R}")
        if self.v < 1:
            raise ValueError(f"v must be >= 1, got {self.v}")
        if self.fft_size < self.v:
            raise ValueError(f"fft_size ({self.fft_size}) must be >= v ({self.v})")
        if self.fft_size % self.R:
            raise ValueError(f"fft_size ({self.fft_size}) must be a multiple of R ({self.R})")
        if self.k < 1 or self.l < 1:
            raise ValueError(f"k and l must be >= 1, got k={self.k}, l={self.l}")
        if self.delta < 0:
            raise ValueError(f"delta must be >= 0, got {self.delta}")
        if not self.gamma_th >= 0:
            raise ValueError(f"gamma_th must be >= 0, got {self.gamma_th}")
        if self.rate_agg not in RATE_AGGREGATIONS:
            raise ValueError(f"rate_agg must be one of {RATE_AGGREGATIONS}, got {self.rate_agg!r}")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must fit in 64 unsigned bits")

    @property
    def stride(self) -> int:
        return self.fft_size // self.R

    @property
    def snr_linear(self) -> float:
        return 10.0 ** (self.snr_db / 10.0)


@dataclass(frozen=True)
class ChannelRealization:
    """One snapshot of the resource pool.

    ``past`` is (R, k) magnitudes, ``future_gains`` is (R, l) complex gains,
    ``rates``/``y``/``g`` are length R.  ``y`` is the outage label and
    ``g = 1 - y`` the reliability label.
    """

    past: np.ndarray
    future_gains: np.ndarray
    rates: np.ndarray
    y: np.ndarray
    g: np.ndarray


@dataclass(frozen=True)
class RealizationSet:
    """``n`` independent realizations stacked along a leading axis."""

    past: np.ndarray  # (n, R, k)
    future_gains: np.ndarray  # (n, R, l)
    rates: np.ndarray  # (n, R)
    y: np.ndarray  # (n, R) int8
    g: np.ndarray  # (n, R) int8
    gamma_th: float
    snr_db: float
    rate_agg: str

    def __len__(self) -> int:
        return self.past.shape[0]

    def __getitem__(self, i: int) -> ChannelRealization:
        return ChannelRealization(
            past=self.past[i],
            future_gains=self.future_gains[i],
            rates=self.rates[i],
            y=self.y[i],
            g=self.g[i],
        )

    def relabel(self, gamma_th: float | None = None, snr_db: float | None = None) -> "RealizationSet":
        """Recompute rates and labels for a new threshold or SNR on the same channels."""
        gamma_th = self.gamma_th if gamma_th is None else gamma_th
        snr_db = self.snr_db if snr_db is None else snr_db
        rates = aggregate_rate(self.future_gains, snr_db, self.rate_agg)
        y, g = outage_labels(rates, gamma_th)
        return replace(self, rates=rates, y=y, g=g, gamma_th=gamma_th, snr_db=snr_db)

    def features(self) -> np.ndarray:
        """Predictor input: past magnitudes scaled to the set's SNR, shape (n, R, k).

        At 0 dB this is the raw magnitude sequence.
        """
        return self.past * np.sqrt(10.0 ** (self.snr_db / 10.0))


def derive_stream(master_seed: int, experiment_id, epoch: int = 0, batch: int = 0) -> np.random.Generator:
    """Independent PCG64 stream for one (seed, experiment, epoch, batch) tuple.

    The experiment id (any value with a stable ``str``) is hashed with
    BLAKE2b to a 64-bit word; that word, ``epoch`` and ``batch`` form the
    ``spawn_key`` of a ``SeedSequence`` whose entropy is ``master_seed``.
    SeedSequence hashing makes distinct tuples yield unrelated streams.
    """
    if epoch < 0 or batch < 0:
        raise ValueError("epoch and batch must be non-negative")
    digest = hashlib.blake2b(str(experiment_id).encode("utf-8"), digest_size=8).digest()
    exp_word = int.from_bytes(digest, "little")
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(exp_word, int(epoch), int(batch)))
    return np.random.Generator(np.random.PCG64(seq))


def generate_taps(cfg: SimConfig, stream: np.random.Generator) -> np.ndarray:
    """``v`` complex taps with independent N(0, 1/(2v)) real and imaginary parts."""
    parts = stream.standard_normal((cfg.v, 2))
    return (parts[:, 0] + 1j * parts[:, 1]) * np.sqrt(0.5 / cfg.v)


def evolve_taps(taps: np.ndarray, delta: float, stream: np.random.Generator) -> np.ndarray:
    """Rotate every tap by an independent phase from Uniform[-delta, delta]."""
    if delta < 0:
        raise ValueError(f"delta must be >= 0, got {delta}")
    theta = stream.uniform(-delta, delta, size=np.shape(taps))
    return taps * np.exp(1j * theta)


def frequency_response(taps: np.ndarray, cfg: SimConfig) -> np.ndarray:
    """Bins ``0, S, ..., (R-1)S`` of the ``fft_size``-point DFT, ``S = fft_size / R``.

    Works on the last axis, so stacked tap vectors are handled too.
    """
    spectrum = np.fft.fft(taps, n=cfg.fft_size, axis=-1)
    return spectrum[..., :: cfg.stride]


def achievable_rate(gain, snr_db: float):
    """Shannon rate log2(1 + snr * |gain|^2) in bits/s/Hz."""
    snr = 10.0 ** (snr_db / 10.0)
    return np.log2(1.0 + snr * np.abs(gain) ** 2)


def aggregate_rate(future_gains: np.ndarray, snr_db: float, rate_agg: str = "mean") -> np.ndarray:
    """Collapse the future window (last axis) to one rate per resource."""
    inst = achievable_rate(future_gains, snr_db)
    if rate_agg == "mean":
        return inst.mean(axis=-1)
    if rate_agg == "min":
        return inst.min(axis=-1)
    raise ValueError(f"unknown rate aggregation {rate_agg!r}")


def outage_labels(rates: np.ndarray, gamma_th: float) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(y, g)``: y = 1 where the rate misses the target, g = 1 - y."""
    y = (rates < gamma_th).astype(np.int8)
    return y, (1 - y).astype(np.int8)


def _simulate_gains(cfg: SimConfig, stream: np.random.Generator, n: int) -> np.ndarray:
    steps = cfg.k + cfg.l
    parts = stream.standard_normal((n, cfg.v, 2))
    taps0 = (parts[..., 0] + 1j * parts[..., 1]) * np.sqrt(0.5 / cfg.v)
    theta = stream.uniform(-cfg.delta, cfg.delta, size=(n, steps - 1, cfg.v))
    phase = np.concatenate([np.zeros((n, 1, cfg.v)), np.cumsum(theta, axis=1)], axis=1)
    taps = taps0[:, None, :] * np.exp(1j * phase)
    return frequency_response(taps, cfg)  # (n, steps, R)


def generate_realizations(cfg: SimConfig, stream: np.random.Generator, n: int) -> RealizationSet:
    """Simulate ``n`` independent realizations from one stream.

    For ``n == 1`` the draws are consumed in the same order as
    :func:`generate_taps` followed by ``k + l - 1`` calls to
    :func:`evolve_taps`.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    past = np.empty((n, cfg.R, cfg.k))
    future = np.empty((n, cfg.R, cfg.l), dtype=complex)
    for start in range(0, n, _BLOCK):
        stop = min(n, start + _BLOCK)
        gains = _simulate_gains(cfg, stream, stop - start).transpose(0, 2, 1)
        past[start:stop] = np.abs(gains[..., : cfg.k])
        future[start:stop] = gains[..., cfg.k :]
    rates = aggregate_rate(future, cfg.snr_db, cfg.rate_agg)
    y, g = outage_labels(rates, cfg.gamma_th)
    return RealizationSet(
        past=past,
        future_gains=future,
        rates=rates,
        y=y,
        g=g,
        gamma_th=cfg.gamma_th,
        snr_db=cfg.snr_db,
        rate_agg=cfg.rate_agg,
    )


def generate_realization(cfg: SimConfig, stream: np.random.Generator) -> ChannelRealization:
    return generate_realizations(cfg, stream, 1)[0]
