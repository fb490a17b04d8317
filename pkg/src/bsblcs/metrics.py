"""Recovery quality: NMSE, one-dimensional SSIM and ERP averaging."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyLabel, LengthMismatch, WindowTooLarge, ZeroRange, ZeroReference

K1 = 0.01
K2 = 0.03
SSIM_WINDOW = 100


def _pair(xhat, x):
    xhat = np.asarray(xhat, dtype=float)
    x = np.asarray(x, dtype=float)
    if xhat.shape != x.shape or x.ndim != 1:
        raise LengthMismatch(f"shapes differ: {xhat.shape} vs {x.shape}")
    return xhat, x


def nmse(xhat, x) -> float:
    """``||xhat - x||^2 / ||x||^2``."""
    xhat, x = _pair(xhat, x)
    ref = float(x @ x)
    if ref == 0:
        raise ZeroReference("reference signal has zero energy")
    d = xhat - x
    return float(d @ d) / ref


def _window_sums(v: np.ndarray, w: int) -> np.ndarray:
    c = np.concatenate(([0.0], np.cumsum(v)))
    return c[w:] - c[:-w]


def ssim_1d(xhat, x, window: int = SSIM_WINDOW) -> float:
    """Mean SSIM over all stride-1 windows of length ``window``.

    Uniform windows with 1/window normalized moments; the dynamic range is
    ``max(x) - min(x)`` of the whole reference ``x``.
    """
    xhat, x = _pair(xhat, x)
    n = len(x)
    if window < 1 or window > n:
        raise WindowTooLarge(f"window {window} does not fit a signal of length {n}")
    L = float(x.max() - x.min())
    if L == 0:
        if np.array_equal(xhat, x):
            return 1.0
        raise ZeroRange("reference is constant, SSIM is undefined")
    C1 = (K1 * L) ** 2
    C2 = (K2 * L) ** 2
    # center on the reference mean so the running sums lose less precision
    c = x.mean()
    a, b = x - c, xhat - c
    mu_a = _window_sums(a, window) / window
    mu_b = _window_sums(b, window) / window
    var_a = np.maximum(_window_sums(a * a, window) / window - mu_a**2, 0.0)
    var_b = np.maximum(_window_sums(b * b, window) / window - mu_b**2, 0.0)
    cov = _window_sums(a * b, window) / window - mu_a * mu_b
    mx, mxh = mu_a + c, mu_b + c
    num = (2 * mx * mxh + C1) * (2 * cov + C2)
    den = (mx**2 + mxh**2 + C1) * (var_a + var_b + C2)
    return float(np.mean(num / den))


def erp_average(epochs, labels) -> dict:
    """Mean epoch per label, keyed in order of first appearance."""
    epochs = np.asarray(epochs, dtype=float)
    labels = list(labels)
    if epochs.ndim != 2 or len(labels) != len(epochs):
        raise LengthMismatch(f"need one label per epoch, got {len(labels)} labels for {epochs.shape}")
    out = {}
    for lab in dict.fromkeys(labels):
        idx = [i for i, l in enumerate(labels) if l == lab]
        out[lab] = epochs[idx].mean(axis=0)
    return out


def erp_average_for(epochs, labels, wanted) -> dict:
    """Like :func:`erp_average` but insists on every label in ``wanted`` being present."""
    erps = erp_average(epochs, labels)
    missing = [w for w in wanted if w not in erps]
    if missing:
        raise EmptyLabel(f"no epochs carry label(s) {missing}")
    return {w: erps[w] for w in wanted}


@dataclass
class QualityReport:
    nmse: np.ndarray
    ssim: np.ndarray
    seconds: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @classmethod
    def compare(cls, recovered, reference, seconds=None, window: int = SSIM_WINDOW) -> "QualityReport":
        recovered = np.asarray(recovered, dtype=float).reshape(-1, np.shape(reference)[-1])
        reference = np.asarray(reference, dtype=float).reshape(recovered.shape)
        e = np.array([nmse(a, b) for a, b in zip(recovered, reference)])
        s = np.array([ssim_1d(a, b, min(window, reference.shape[1])) for a, b in zip(recovered, reference)])
        secs = np.zeros(len(e)) if seconds is None else np.asarray(seconds, dtype=float)
        return cls(e, s, secs)

    @property
    def nmse_mean(self) -> float:
        return float(np.mean(self.nmse))

    @property
    def nmse_std(self) -> float:
        return float(np.std(self.nmse))

    @property
    def ssim_mean(self) -> float:
        return float(np.mean(self.ssim))

    @property
    def ssim_std(self) -> float:
        return float(np.std(self.ssim))

    def record(self, **meta) -> dict:
        """Flat JSON-ready record; ``meta`` carries algo, dict, M, N, seed."""
        rec = dict(meta)
        rec.update(
            nmse_mean=self.nmse_mean,
            nmse_std=self.nmse_std,
            ssim_mean=self.ssim_mean,
            ssim_std=self.ssim_std,
            seconds_per_epoch=float(np.mean(self.seconds)) if len(self.seconds) else 0.0,
            epochs=int(len(self.nmse)),
            aggregation="mean and population std of per-epoch values",
        )
        return rec
