"""Synthetic stand-ins for EEG recordings."""

from __future__ import annotations

import numpy as np
from scipy.signal import lfilter

from .errors import ConfigError, InvalidKind
from .telemetry import EpochedDataset

KINDS = ("blocksparse", "ar1", "ar2mix")
BURN_IN = 500


def blocksparse(rng, N: int, count: int, k: int = 3, block: int = 24) -> np.ndarray:
    nblocks = N // block
    if k > nblocks:
        raise ConfigError(f"cannot activate {k} of {nblocks} blocks")
    out = np.zeros((count, N))
    for e in range(count):
        for b in rng.choice(nblocks, size=k, replace=False):
            out[e, b * block:(b + 1) * block] = rng.standard_normal(block)
    return out


def ar1(rng, N: int, count: int, coef: float = 0.95) -> np.ndarray:
    if not -1 < coef < 1:
        raise ConfigError(f"AR(1) coefficient must lie in (-1, 1), got {coef}")
    noise = rng.standard_normal((count, N + BURN_IN))
    return lfilter([1.0], [1.0, -coef], noise, axis=1)[:, BURN_IN:]


def ar2mix(rng, N: int, count: int, components: int = 3, radius: float = 0.97,
           background: float = 0.95) -> np.ndarray:
    """Sum of narrowband AR(2) resonators over an AR(1) background.

    Resonator frequencies are drawn once per dataset (between 1/64 and 1/8 of
    the sampling rate) so every epoch shares the same rhythms.
    """
    freqs = rng.uniform(1 / 64, 1 / 8, size=components)
    gains = rng.uniform(0.5, 1.5, size=components)
    out = ar1(rng, N, count, background)
    for f, g in zip(freqs, gains):
        a = [1.0, -2 * radius * np.cos(2 * np.pi * f), radius**2]
        noise = rng.standard_normal((count, N + BURN_IN))
        out += g * lfilter([1.0], a, noise, axis=1)[:, BURN_IN:] * (1 - radius)
    return out


def make_synthetic(kind: str, N: int, epochs: int, seed: int, channels: int = 1, **params) -> EpochedDataset:
    """Deterministic synthetic dataset of shape ``(channels, epochs, N)``.

    ``params`` go to the generator: ``k``/``block`` for blocksparse, ``coef``
    for ar1.
    """
    if kind not in KINDS:
        raise InvalidKind(f"unknown synthetic kind {kind!r} (choose from {', '.join(KINDS)})")
    if N < 32:
        raise ConfigError(f"synthetic epochs need N >= 32, got {N}")
    rng = np.random.default_rng(seed)
    gen = {"blocksparse": blocksparse, "ar1": ar1, "ar2mix": ar2mix}[kind]
    x = gen(rng, N, channels * epochs, **params)
    return EpochedDataset(x.reshape(channels, epochs, N), meta={"kind": kind, "seed": seed, **params})
