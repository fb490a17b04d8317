"""Block sparse Bayesian learning by bound optimization (BSBL-BO).

Model: ``y = Theta @ z + v`` with a block Gaussian prior on ``z``.  Block ``i``
has covariance ``gamma_i * B_i`` where ``B_i`` is an AR(1) Toeplitz
correlation matrix shared (through one coefficient ``r``) by all blocks, and
``v`` is white noise with variance ``lambda``.  Hyperparameters are fitted by
minimizing the negative log marginal likelihood

    L = log det(Sigma_y) + y^T Sigma_y^{-1} y,
    Sigma_y = lambda * I + Theta Sigma_0 Theta^T.

Blocks are never pruned: the gamma values are floored instead, since the
signals of interest are not sparse and every block carries energy.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg as la
from scipy.linalg.blas import dsyrk

from .errors import CholeskyFailure, DimensionMismatch, InvalidStep

R_MAX = 0.99
JITTER_STEPS = (1e-12, 1e-10, 1e-8, 1e-6)


@dataclass(frozen=True)
class BlockPartition:
    starts: tuple[int, ...]
    N: int

    def __post_init__(self):
        s = self.starts
        if not s or s[0] != 0 or any(b <= a for a, b in zip(s, s[1:])) or s[-1] >= self.N:
            raise DimensionMismatch(f"invalid block starts {s} for N={self.N}")

    @property
    def sizes(self) -> tuple[int, ...]:
        ends = self.starts[1:] + (self.N,)
        return tuple(e - b for b, e in zip(self.starts, ends))

    @property
    def slices(self) -> list[slice]:
        return [slice(b, b + d) for b, d in zip(self.starts, self.sizes)]

    def __len__(self):
        return len(self.starts)


def default_partition(N: int, step: int = 24) -> BlockPartition:
    """Equal blocks of ``step`` samples; the last block is shorter when ``step`` does not divide ``N``."""
    if not 1 <= step <= N:
        raise InvalidStep(f"block step must be in [1, {N}], got {step}")
    return BlockPartition(tuple(range(0, N, step)), N)


@dataclass
class BsblOptions:
    max_iters: int = 7
    tol: float = 1e-8
    learn_B: bool = True
    learn_lambda: bool = False
    # None means 1e-10 * ||y||^2 / M
    lambda_init: float | None = None
    # relative to the mean measurement power ||y||^2 / M
    gamma_floor: float = 1e-12

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.lambda_init is not None and self.lambda_init < 0:
            raise ValueError(f"lambda_init must be nonnegative, got {self.lambda_init}")


def toeplitz_corr(r: float, d: int) -> np.ndarray:
    return la.toeplitz(r ** np.arange(d))


def sqrt_psd(A: np.ndarray, floor: float = 1e-12) -> np.ndarray:
    w, V = np.linalg.eigh(A)
    return (V * np.sqrt(np.maximum(w, floor))) @ V.T


@lru_cache(maxsize=64)
def _sqrt_corr(r: float, d: int) -> np.ndarray:
    root = sqrt_psd(toeplitz_corr(r, d))
    root.setflags(write=False)
    return root


@dataclass(frozen=True)
class _Group:
    """Blocks sharing one size ``d``: their indices and a ``(nb, d)`` column index table."""

    d: int
    blocks: np.ndarray
    cols: np.ndarray


def _groups(partition: BlockPartition) -> list[_Group]:
    by_size: dict[int, list[int]] = {}
    for i, d in enumerate(partition.sizes):
        by_size.setdefault(d, []).append(i)
    out = []
    for d, idx in by_size.items():
        starts = np.array([partition.starts[i] for i in idx])
        out.append(_Group(d, np.array(idx), starts[:, None] + np.arange(d)))
    return out


@dataclass
class BsblState:
    partition: BlockPartition
    gamma: np.ndarray
    r: float = 0.0
    lam: float = 0.0
    mu: np.ndarray | None = None
    sigma_blocks: list[np.ndarray] = field(default_factory=list)
    cost_history: list[float] = field(default_factory=list)

    def B(self, d: int) -> np.ndarray:
        return toeplitz_corr(self.r, d)

    def prior_blocks(self) -> list[np.ndarray]:
        return [g * self.B(d) for g, d in zip(self.gamma, self.partition.sizes)]

    def prior_cov(self) -> np.ndarray:
        return la.block_diag(*self.prior_blocks())


@dataclass
class RecoveredEpoch:
    z: np.ndarray
    x: np.ndarray
    iterations: int
    converged: bool
    final_cost: float
    state: BsblState = field(repr=False)


@dataclass
class Posterior:
    """Posterior of ``z`` plus the projections the hyperparameter updates need.

    Per-block arrays are stacked by size group, in the order of ``groups``.
    """

    groups: list[_Group]
    mu: np.ndarray
    sigma: list[np.ndarray]
    # Theta_i^T Sigma_y^{-1} y, shape (nb, d)
    proj_y: list[np.ndarray]
    # Theta_i^T Sigma_y^{-1} Theta_i, shape (nb, d, d)
    proj_theta: list[np.ndarray]
    cost: float

    @property
    def sigma_blocks(self) -> list[np.ndarray]:
        out: list[np.ndarray] = [np.empty(0)] * sum(len(g.blocks) for g in self.groups)
        for g, S in zip(self.groups, self.sigma):
            for i, Si in zip(g.blocks, S):
                out[i] = Si
        return out


def _factor(Sigma_y: np.ndarray, symmetrize: bool = True):
    """Cholesky factor of a symmetrized ``Sigma_y``, escalating diagonal jitter on failure.

    With ``symmetrize=False`` only the lower triangle of ``Sigma_y`` is read.
    """
    S = 0.5 * (Sigma_y + Sigma_y.T) if symmetrize else Sigma_y
    M = S.shape[0]
    scale = max(np.trace(S) / M, np.finfo(float).tiny)
    for eps in (0.0,) + JITTER_STEPS:
        try:
            return la.cho_factor(S + eps * scale * np.eye(M) if eps else S, lower=True,
                                 check_finite=False)
        except la.LinAlgError:
            continue
    raise CholeskyFailure("Sigma_y is not positive definite even with jitter; Theta or lambda is degenerate")


def _priors(state: BsblState, groups: list[_Group]) -> list[np.ndarray]:
    return [state.gamma[g.blocks][:, None, None] * state.B(g.d) for g in groups]


class _Problem:
    """Column gathers of ``Theta`` per size group, reused across iterations."""

    def __init__(self, Theta: np.ndarray, partition: BlockPartition):
        self.Theta = Theta
        self.groups = _groups(partition)
        # Theta_i^T per group laid out as (d, nb * M) so one GEMM applies B^{1/2} to every block
        self.blocks_t = [np.ascontiguousarray(Theta[:, g.cols].transpose(2, 1, 0)).reshape(g.d, -1)
                         for g in self.groups]

    def sigma_y(self, state: BsblState):
        """Lower triangle of ``lam I + Theta Sigma_0 Theta^T``, accumulated as ``A A^T`` with ``A = Theta Sigma_0^{1/2}``.

        The upper triangle is not filled in.
        """
        M = self.Theta.shape[0]
        Sy = np.asfortranarray(state.lam * np.eye(M))
        for g, Tt in zip(self.groups, self.blocks_t):
            At = (_sqrt_corr(state.r, g.d) @ Tt).reshape(g.d, -1, M) * np.sqrt(state.gamma[g.blocks])[:, None]
            # rows of At are the columns of A for this group; the transpose is Fortran-ordered for syrk
            Sy = dsyrk(1.0, At.reshape(-1, M).T, beta=1.0, c=Sy, lower=1, overwrite_c=1)
        return Sy


def _cost(L, w) -> float:
    return float(2.0 * np.log(np.diag(L)).sum() + w @ w)


def posterior(y, Theta, state: BsblState, problem: _Problem | None = None) -> Posterior:
    """Posterior mean/covariance of ``z`` under the current hyperparameters."""
    problem = problem or _Problem(Theta, state.partition)
    groups = problem.groups
    priors = _priors(state, groups)
    L = _factor(problem.sigma_y(state), symmetrize=False)[0]
    # with Sigma_y = L L^T: Theta_i^T Sigma_y^{-1} Theta_i = W_i^T W_i, W = L^{-1} Theta
    W = la.solve_triangular(L, Theta, lower=True, check_finite=False)
    w = la.solve_triangular(L, y, lower=True, check_finite=False)
    mu = np.empty(Theta.shape[1])
    sigma, proj_y, proj_theta = [], [], []
    for g, P in zip(groups, priors):
        Wg = W[:, g.cols].transpose(1, 0, 2)
        v = w @ Wg
        H = Wg.transpose(0, 2, 1) @ Wg
        mu[g.cols] = (P @ v[:, :, None])[:, :, 0]
        S = P - P @ H @ P
        sigma.append(0.5 * (S + S.transpose(0, 2, 1)))
        proj_y.append(v)
        proj_theta.append(H)
    return Posterior(groups, mu, sigma, proj_y, proj_theta, _cost(L, w))


def marginal_cost(state: BsblState, y, Theta) -> float:
    """``log det Sigma_y + y^T Sigma_y^{-1} y`` at the state's hyperparameters."""
    y = np.asarray(y, dtype=float)
    Theta = np.asarray(Theta, dtype=float)
    _check_dims(y, Theta, state.partition)
    problem = _Problem(Theta, state.partition)
    L = _factor(problem.sigma_y(state), symmetrize=False)[0]
    return _cost(L, la.solve_triangular(L, y, lower=True, check_finite=False))


def update_gamma(post: Posterior, state: BsblState, floor: float) -> np.ndarray:
    """Bound-optimization gamma rule, floored rather than pruned.

    Each gamma minimizes a majorizer of the marginal cost built from the
    tangent of the (concave) log-determinant term, which gives

        gamma_i <- gamma_i * ||B^{1/2} Theta_i^T Sigma_y^{-1} y|| / sqrt(tr(B^{1/2} Theta_i^T Sigma_y^{-1} Theta_i B^{1/2}))
    """
    new = state.gamma.copy()
    for g, v, H in zip(post.groups, post.proj_y, post.proj_theta):
        Bh = _sqrt_corr(state.r, g.d)
        num = np.linalg.norm(v @ Bh, axis=1)
        den = np.sqrt(np.maximum(np.trace(Bh @ H @ Bh, axis1=1, axis2=2), 0.0))
        ok = den > 0
        new[g.blocks[ok]] = state.gamma[g.blocks[ok]] * num[ok] / den[ok]
    return np.maximum(new, floor)


def modal_size(partition: BlockPartition) -> int:
    counts = Counter(partition.sizes)
    best = max(counts.values())
    # ties resolve to the size of the earliest block
    return next(d for d in partition.sizes if counts[d] == best)


def update_r(post: Posterior, state: BsblState) -> float:
    """Shared AR(1) coefficient from the average normalized second moment of the modal-size blocks."""
    d = modal_size(state.partition)
    if d < 2:
        return 0.0
    k = next(k for k, g in enumerate(post.groups) if g.d == d)
    g = post.groups[k]
    m = post.mu[g.cols]
    acc = (post.sigma[k] + m[:, :, None] * m[:, None, :]) / state.gamma[g.blocks][:, None, None]
    acc = acc.mean(axis=0)
    diag = np.mean(np.diag(acc))
    if diag <= 0:
        return state.r
    return float(np.clip(np.mean(np.diag(acc, 1)) / diag, -R_MAX, R_MAX))


def update_lambda(post: Posterior, y, Theta) -> float:
    resid = y - Theta @ post.mu
    spread = 0.0
    for g, S in zip(post.groups, post.sigma):
        Tg = Theta[:, g.cols].transpose(1, 0, 2)
        spread += float(np.sum((Tg @ S) * Tg))
    return float((resid @ resid + spread) / len(y))


def _check_dims(y, Theta, partition):
    if Theta.ndim != 2 or y.shape != (Theta.shape[0],):
        raise DimensionMismatch(f"y has shape {y.shape}, Theta has shape {Theta.shape}")
    if partition.N != Theta.shape[1]:
        raise DimensionMismatch(f"partition covers N={partition.N}, Theta has {Theta.shape[1]} columns")


def recover(y, Theta, partition: BlockPartition, opts: BsblOptions | None = None,
            dictionary=None) -> RecoveredEpoch:
    """Estimate coefficients ``z`` from ``y = Theta z`` and synthesize ``x = D z``.

    Internally ``y`` is normalized to unit mean power so that the unit gamma
    initialization, the gamma floor and the default noise level are all
    relative to the data; the returned state is in the caller's units.
    """
    opts = opts or BsblOptions()
    y = np.asarray(y, dtype=float)
    Theta = np.asarray(Theta, dtype=float)
    _check_dims(y, Theta, partition)
    M, N = Theta.shape

    power = float(y @ y) / M
    scale2 = power if power > 0 else 1.0
    scale = np.sqrt(scale2)
    yn = y / scale
    lam = 1e-10 * float(yn @ yn) / M if opts.lambda_init is None else opts.lambda_init / scale2

    state = BsblState(partition, np.ones(len(partition)), 0.0, lam)
    problem = _Problem(Theta, partition)
    mu_old = np.zeros(N)
    converged = False
    it = 0
    for it in range(1, opts.max_iters + 1):
        post = posterior(yn, Theta, state, problem)
        state.cost_history.append(post.cost)
        state.mu, state.sigma_blocks = post.mu, post.sigma_blocks

        new_gamma = update_gamma(post, state, opts.gamma_floor)
        if opts.learn_B:
            state.r = update_r(post, state)
        if opts.learn_lambda:
            state.lam = update_lambda(post, yn, Theta)
        state.gamma = new_gamma

        change = np.linalg.norm(post.mu - mu_old) / max(np.linalg.norm(mu_old), 1.0)
        mu_old = post.mu
        if change < opts.tol:
            converged = True
            break

    # back to caller units: gamma, lambda, Sigma scale with power; cost shifts by M log(power)
    shift = M * np.log(scale2)
    state.gamma = state.gamma * scale2
    state.lam *= scale2
    state.mu = state.mu * scale
    state.sigma_blocks = [S * scale2 for S in state.sigma_blocks]
    state.cost_history = [c + shift for c in state.cost_history]

    z = state.mu.copy()
    x = z.copy() if dictionary is None else dictionary.synthesize(z)
    return RecoveredEpoch(z, x, it, converged, state.cost_history[-1], state)


def posterior_mean_oracle(y, Theta, Sigma0, lam: float, rcond: float = 1e-10) -> np.ndarray:
    """Reference posterior mean ``(Theta^T Theta / lam + Sigma0^{-1})^{-1} Theta^T y / lam``.

    Works in the N-dimensional parameter space instead of the M-dimensional
    measurement space.  A singular ``Sigma0`` is handled by restricting to its
    range.
    """
    y = np.asarray(y, dtype=float)
    Theta = np.asarray(Theta, dtype=float)
    if lam <= 0:
        raise ValueError("the parameter-space formula needs lam > 0")
    w, U = np.linalg.eigh(0.5 * (Sigma0 + Sigma0.T))
    keep = w > rcond * max(w.max(), 0.0)
    U, w = U[:, keep], w[keep]
    A = U.T @ Theta.T
    prec = A @ A.T / lam + np.diag(1.0 / w)
    return U @ np.linalg.solve(prec, A @ y / lam)
