"""Orthonormal synthesis dictionaries (``x = D @ z``) and the solver matrix ``Phi @ D``."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

import numpy as np

from .errors import ConfigError, DimensionMismatch, InvalidLevels, InvalidSize
from .sensing import SensingMatrix, accumulate_rows, to_dense

KIND_CODES = {"identity": 0, "dct": 1, "wavelet": 2}
DEFAULT_TAPS = 20
DEFAULT_LEVELS = 4


@dataclass(frozen=True)
class Dictionary:
    kind: str
    N: int
    D: np.ndarray = field(repr=False, compare=False)
    levels: int = 0
    taps: int = 0

    @property
    def code(self) -> int:
        return KIND_CODES[self.kind]

    def synthesize(self, z) -> np.ndarray:
        return self.D @ np.asarray(z, dtype=float)

    def analyze(self, x) -> np.ndarray:
        return self.D.T @ np.asarray(x, dtype=float)

    def spec(self) -> str:
        if self.kind == "wavelet":
            return f"wavelet:taps={self.taps}:levels={self.levels}"
        return self.kind


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def build_identity(N: int) -> Dictionary:
    if N < 1:
        raise InvalidSize(f"N must be positive, got {N}")
    return Dictionary("identity", N, _frozen(np.eye(N)))


def dct_matrix(N: int) -> np.ndarray:
    """Orthonormal DCT-II analysis matrix ``C`` (rows are frequencies)."""
    k = np.arange(N)[:, None]
    n = np.arange(N)[None, :]
    C = np.sqrt(2.0 / N) * np.cos(np.pi * (2 * n + 1) * k / (2 * N))
    C[0, :] = np.sqrt(1.0 / N)
    return C


def build_dct(N: int) -> Dictionary:
    if N < 1:
        raise InvalidSize(f"N must be positive, got {N}")
    return Dictionary("dct", N, _frozen(np.ascontiguousarray(dct_matrix(N).T)))


@lru_cache(maxsize=None)
def _filter_table() -> dict[int, tuple[float, ...]]:
    text = resources.files("bsblcs").joinpath("data/daubechies.json").read_text()
    return {int(k): tuple(v) for k, v in json.loads(text)["filters"].items()}


def daubechies_filter(taps: int) -> np.ndarray:
    """Scaling (lowpass synthesis) filter of the Daubechies family with ``taps`` taps."""
    table = _filter_table()
    if taps not in table:
        raise ConfigError(f"no Daubechies filter with {taps} taps (available: {sorted(table)})")
    return np.array(table[taps])


def _level_analysis(n: int, h: np.ndarray) -> np.ndarray:
    """One periodic analysis stage: ``n/2`` approximation rows over ``n/2`` detail rows."""
    L = len(h)
    g = h[::-1] * (-1.0) ** np.arange(L)
    W = np.zeros((n, n))
    half = n // 2
    for k in range(half):
        idx = (2 * k + np.arange(L)) % n
        # np.add.at because a long filter can wrap onto itself when n < L
        np.add.at(W[k], idx, h)
        np.add.at(W[half + k], idx, g)
    return W


def wavelet_analysis_matrix(N: int, h, levels: int) -> np.ndarray:
    h = np.asarray(h, dtype=float)
    W = np.eye(N)
    n = N
    for _ in range(levels):
        stage = np.eye(N)
        stage[:n, :n] = _level_analysis(n, h)
        W = stage @ W
        n //= 2
    return W


def build_wavelet(N: int, taps: int = DEFAULT_TAPS, levels: int = DEFAULT_LEVELS,
                  filt=None) -> Dictionary:
    """Periodic multilevel Daubechies synthesis matrix.

    ``filt`` overrides the bundled scaling filter; it must be an orthonormal
    lowpass filter of even length.
    """
    if N < 2 or N & (N - 1):
        raise InvalidSize(f"wavelet dictionary needs N a power of two, got {N}")
    if levels < 1 or N >> levels < 1:
        raise InvalidLevels(f"cannot take {levels} levels of a length-{N} signal")
    h = daubechies_filter(taps) if filt is None else np.asarray(filt, dtype=float)
    if len(h) % 2:
        raise ConfigError(f"wavelet filter length must be even, got {len(h)}")
    D = wavelet_analysis_matrix(N, h, levels).T
    err = np.abs(D.T @ D - np.eye(N)).max()
    if err > 1e-8:
        raise ConfigError(f"wavelet filter is not orthonormal (max deviation {err:.2e})")
    return Dictionary("wavelet", N, _frozen(np.ascontiguousarray(D)), levels=levels, taps=len(h))


def build_dictionary(spec: str, N: int) -> Dictionary:
    """Build from a spec string: ``identity``, ``dct`` or ``wavelet:taps=20:levels=4``."""
    kind, *opts = spec.strip().split(":")
    if kind == "identity" and not opts:
        return build_identity(N)
    if kind == "dct" and not opts:
        return build_dct(N)
    if kind == "wavelet":
        params = {"taps": DEFAULT_TAPS, "levels": DEFAULT_LEVELS}
        for opt in opts:
            key, _, value = opt.partition("=")
            if key not in params or not value.isdigit():
                raise ConfigError(f"bad wavelet option {opt!r} in {spec!r}")
            params[key] = int(value)
        return build_wavelet(N, **params)
    raise ConfigError(f"unknown dictionary spec {spec!r}")


def dictionary_from_code(code: int, N: int, taps: int = 0, levels: int = 0) -> Dictionary:
    if code == 0:
        return build_identity(N)
    if code == 1:
        return build_dct(N)
    if code == 2:
        return build_wavelet(N, taps or DEFAULT_TAPS, levels or DEFAULT_LEVELS)
    raise ConfigError(f"unknown dictionary code {code}")


def compose(Phi: SensingMatrix, dictionary: Dictionary) -> np.ndarray:
    """``Theta = Phi @ D``: each row is the sum of the dictionary rows its ones select."""
    if Phi.cols != dictionary.N:
        raise DimensionMismatch(f"sensing matrix has N={Phi.cols}, dictionary has N={dictionary.N}")
    if dictionary.kind == "identity":
        return to_dense(Phi)
    return accumulate_rows(Phi, dictionary.D)
