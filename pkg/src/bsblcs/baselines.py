"""Comparison methods: l1-regularized recovery and top-K wavelet compression."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidK


@dataclass
class L1Options:
    rho: float = 1e-3
    max_iters: int = 2000
    tol: float = 1e-8
    backtrack: float = 0.5
    power_iters: int = 50

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError(f"rho must be positive, got {self.rho}")


@dataclass
class L1Result:
    z: np.ndarray
    iterations: int
    converged: bool
    objective_history: list[float] = field(repr=False, default_factory=list)


def soft_threshold(v: np.ndarray, t: float) -> np.ndarray:
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def spectral_norm_sq(Theta: np.ndarray, iters: int = 50, seed: int = 0) -> float:
    """Estimate ``||Theta||_2^2`` by power iteration on ``Theta^T Theta``."""
    v = np.random.default_rng(seed).standard_normal(Theta.shape[1])
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iters):
        w = Theta.T @ (Theta @ v)
        est = np.linalg.norm(w)
        if est == 0:
            return 0.0
        v = w / est
    return float(est)


def l1_recover(y, Theta, opts: L1Options | None = None) -> L1Result:
    """Minimize ``0.5 ||y - Theta z||^2 + rho ||z||_1`` with FISTA.

    The step starts at ``1 / ||Theta||^2`` (power-iteration estimate) and
    shrinks by ``opts.backtrack`` whenever the quadratic upper bound fails.
    Momentum is reset whenever an accelerated step would raise the objective,
    which keeps the objective sequence non-increasing.
    """
    opts = opts or L1Options()
    y = np.asarray(y, dtype=float)
    Theta = np.asarray(Theta, dtype=float)
    rho = opts.rho

    def smooth(z):
        r = Theta @ z - y
        return 0.5 * (r @ r), r

    def objective(z):
        return smooth(z)[0] + rho * np.abs(z).sum()

    lip = spectral_norm_sq(Theta, opts.power_iters)
    step = 1.0 / lip if lip > 0 else 1.0
    z = np.zeros(Theta.shape[1])
    u = z.copy()
    t = 1.0
    F = objective(z)
    history = [F]
    converged = restarted = False
    it = 0
    for it in range(1, opts.max_iters + 1):
        fu, ru = smooth(u)
        grad = Theta.T @ ru
        while True:
            cand = soft_threshold(u - step * grad, step * rho)
            diff = cand - u
            fc, _ = smooth(cand)
            if fc <= fu + grad @ diff + (diff @ diff) / (2 * step) + 1e-12 * abs(fu):
                break
            step *= opts.backtrack
        Fc = fc + rho * np.abs(cand).sum()
        if Fc > F:
            if restarted:
                # a plain proximal step from z cannot make progress
                converged = True
                break
            # restart: drop momentum and retry from the last iterate
            u, t, restarted = z.copy(), 1.0, True
            continue
        restarted = False
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        u = cand + ((t - 1.0) / t_next) * (cand - z)
        z, t = cand, t_next
        F_prev, F = F, Fc
        history.append(F)
        if abs(F_prev - F) <= opts.tol * max(abs(F_prev), np.finfo(float).tiny):
            converged = True
            break
    return L1Result(z, it, converged, history)


def rho_grid(y, Theta, points=(1e-4, 1e-3, 1e-2, 1e-1, 1.0)) -> list[float]:
    """Candidate ``rho`` values scaled by ``||Theta^T y||_inf``."""
    top = float(np.abs(np.asarray(Theta).T @ np.asarray(y)).max())
    return [p * top for p in points] if top > 0 else [1.0]


def wavelet_topk(x, dictionary, K: int) -> np.ndarray:
    """Keep the ``K`` largest-magnitude analysis coefficients (ties go to the lower index)."""
    x = np.asarray(x, dtype=float)
    N = len(x)
    if not 0 <= K <= N:
        raise InvalidK(f"K must be in [0, {N}], got {K}")
    z = dictionary.analyze(x)
    keep = np.argsort(-np.abs(z), kind="stable")[:K]
    zk = np.zeros_like(z)
    zk[keep] = z[keep]
    return dictionary.synthesize(zk)
