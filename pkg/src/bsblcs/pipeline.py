"""Compress datasets into packets, recover them, and benchmark recovery methods."""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .baselines import L1Options, l1_recover, rho_grid, wavelet_topk
from .bsbl import BsblOptions, default_partition, recover
from .dictionary import KIND_CODES, Dictionary, build_dictionary, compose, dictionary_from_code
from .errors import ConfigError, DimensionMismatch
from .metrics import QualityReport, nmse
from .sensing import apply_sensing, generate_sensing
from .telemetry import CompressedPacket, EpochedDataset

ALGOS = ("bsbl", "bsbl-no-dict", "l1", "topk")


@dataclass
class RecoveryConfig:
    algo: str = "bsbl"
    bsbl: BsblOptions = field(default_factory=BsblOptions)
    block_step: int = 24
    # None selects from the relative grid using the reference epoch
    rho: float | None = None
    l1_max_iters: int = 2000
    l1_tol: float = 1e-8
    # overrides the dictionary named in the packet
    dictionary: str | None = None

    def __post_init__(self):
        if self.algo not in ("bsbl", "bsbl-no-dict", "l1"):
            raise ConfigError(f"algorithm {self.algo!r} cannot recover from packets")


@lru_cache(maxsize=16)
def _sensing(M: int, N: int, s: int, seed: int):
    return generate_sensing(M, N, s, seed)


@lru_cache(maxsize=16)
def _dictionary(spec: str, N: int) -> Dictionary:
    return build_dictionary(spec, N)


@lru_cache(maxsize=16)
def _theta(M: int, N: int, s: int, seed: int, spec: str) -> np.ndarray:
    Theta = compose(_sensing(M, N, s, seed), _dictionary(spec, N))
    Theta.setflags(write=False)
    return Theta


def packet_dictionary_spec(p: CompressedPacket) -> str:
    return dictionary_from_code(p.dict_code, p.N, p.wavelet_taps, p.wavelet_levels).spec()


def compress_dataset(ds: EpochedDataset, M: int, s: int = 15, seed: int = 1,
                     dictionary: str = "dct") -> list[CompressedPacket]:
    """One packet per (channel, epoch), channel-major."""
    N = ds.epoch_length
    if ds.channels * ds.epochs_per_channel == 0:
        return []
    Phi = generate_sensing(M, N, s, seed)
    D = build_dictionary(dictionary, N) if dictionary.startswith("wavelet") else None
    code = KIND_CODES[dictionary.split(":")[0]]
    rate = int(round(ds.sample_rate * 1000))
    out = []
    for c in range(ds.channels):
        for e in range(ds.epochs_per_channel):
            y = apply_sensing(Phi, ds.samples[c, e].astype(np.float64))
            out.append(CompressedPacket(
                N, M, s, Phi.seed, code, y.astype("<f4"),
                wavelet_taps=D.taps if D else 0, wavelet_levels=D.levels if D else 0,
                channel=c, epoch_index=e, sample_rate_mHz=rate,
            ))
    return out


def recover_measurements(y, M: int, N: int, s: int, seed: int, spec: str, cfg: RecoveryConfig,
                         reference=None) -> np.ndarray:
    """Recover one epoch from its measurements with the configured algorithm."""
    y = np.asarray(y, dtype=np.float64)
    if cfg.algo == "bsbl-no-dict":
        spec = "identity"
    Theta = _theta(M, N, s, seed, spec)
    D = _dictionary(spec, N)
    if cfg.algo.startswith("bsbl"):
        part = default_partition(N, cfg.block_step)
        return recover(y, Theta, part, cfg.bsbl, dictionary=D).x
    opts = L1Options(rho=1.0, max_iters=cfg.l1_max_iters, tol=cfg.l1_tol)
    if cfg.rho is not None:
        return D.synthesize(l1_recover(y, Theta, replace(opts, rho=cfg.rho)).z)
    if reference is None:
        raise ConfigError("l1 with rho=grid needs the reference signal to pick rho")
    best, best_err = None, np.inf
    for rho in rho_grid(y, Theta):
        x = D.synthesize(l1_recover(y, Theta, replace(opts, rho=rho)).z)
        err = nmse(x, reference)
        if err < best_err:
            best, best_err = x, err
    return best


def _recover_one(args):
    p, cfg, ref = args
    spec = cfg.dictionary or packet_dictionary_spec(p)
    t0 = time.perf_counter()
    x = recover_measurements(p.payload, p.M, p.N, p.s, p.matrix_seed, spec, cfg, ref)
    return x, time.perf_counter() - t0


def _map(fn, items, jobs: int):
    if jobs <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


def recover_packets(packets: list[CompressedPacket], cfg: RecoveryConfig,
                    reference: EpochedDataset | None = None, jobs: int = 1):
    """Recover every packet; returns the dataset and per-epoch seconds, ordered by (channel, epoch)."""
    if not packets:
        return EpochedDataset(np.zeros((0, 0, 0))), np.zeros(0)
    packets = sorted(packets, key=lambda p: (p.channel, p.epoch_index))
    N = packets[0].N
    channels = sorted({p.channel for p in packets})
    epochs = sorted({p.epoch_index for p in packets})
    if len(packets) != len(channels) * len(epochs):
        raise DimensionMismatch("packet stream does not form a full channel x epoch grid")
    if any(p.N != N for p in packets):
        raise DimensionMismatch("packets disagree on the epoch length N")
    if reference is not None:
        if reference.epoch_length != N:
            raise DimensionMismatch(f"reference has N={reference.epoch_length}, packets have N={N}")
        if reference.channels < len(channels) or reference.epochs_per_channel < len(epochs):
            raise DimensionMismatch("reference dataset is smaller than the packet stream")
    refs = [None if reference is None else reference.samples[p.channel, p.epoch_index].astype(np.float64)
            for p in packets]
    results = _map(_recover_one, [(p, cfg, r) for p, r in zip(packets, refs)], jobs)
    x = np.array([r[0] for r in results]).reshape(len(channels), len(epochs), N)
    seconds = np.array([r[1] for r in results])
    rate = packets[0].sample_rate_mHz / 1000.0
    labels = reference.labels if reference is not None and reference.labels else None
    return EpochedDataset(x, labels, rate), seconds


@dataclass
class BenchConfig:
    M_grid: tuple[int, ...] = (192,)
    algos: tuple[str, ...] = ALGOS
    s: int = 15
    seed: int = 1
    dictionary: str = "dct"
    topk_dictionary: str | None = None
    topk_K: int | None = None
    recovery: RecoveryConfig = field(default_factory=RecoveryConfig)
    jobs: int = 1


def _topk_spec(cfg: BenchConfig, N: int) -> str:
    if cfg.topk_dictionary:
        return cfg.topk_dictionary
    return "wavelet" if N & (N - 1) == 0 else "dct"


def _bench_one(args):
    x, M, N, algo, cfg = args
    t0 = time.perf_counter()
    if algo == "topk":
        D = _dictionary(_topk_spec(cfg, N), N)
        xhat = wavelet_topk(x, D, cfg.topk_K or M)
    else:
        Phi = _sensing(M, N, cfg.s, cfg.seed)
        y = apply_sensing(Phi, x).astype(np.float32)
        rc = replace(cfg.recovery, algo=algo)
        xhat = recover_measurements(y, M, N, cfg.s, Phi.seed, cfg.dictionary, rc, x)
    return xhat, time.perf_counter() - t0


def bench(ds: EpochedDataset, cfg: BenchConfig) -> list[dict]:
    """Sweep algorithms and measurement counts; one record per (M, algo) cell.

    CS methods go through the same float32 measurement quantization as real
    packets.  ``topk`` keeps the ``M`` largest coefficients (or ``topk_K``),
    so it transmits as many amplitudes as CS transmits measurements.
    """
    N = ds.epoch_length
    refs = ds.samples.reshape(-1, N).astype(np.float64)
    records = []
    for M in cfg.M_grid:
        for algo in cfg.algos:
            if algo not in ALGOS:
                raise ConfigError(f"unknown algorithm {algo!r}")
            out = _map(_bench_one, [(x, M, N, algo, cfg) for x in refs], cfg.jobs)
            rep = QualityReport.compare(np.array([o[0] for o in out]), refs, [o[1] for o in out])
            if algo == "topk":
                dict_name = _topk_spec(cfg, N)
            elif algo == "bsbl-no-dict":
                dict_name = "identity"
            else:
                dict_name = cfg.dictionary
            seed = None if algo == "topk" else _sensing(M, N, cfg.s, cfg.seed).seed
            records.append(rep.record(algo=algo, dict=dict_name, M=M, N=N, seed=seed, ratio=M / N))
    return records


PLOT_COLUMNS = ("algo", "dict", "M", "N", "ratio", "nmse_mean", "nmse_std", "ssim_mean", "ssim_std",
                "seconds_per_epoch")
