"""Sparse binary sensing matrices.

Every column holds exactly ``s`` ones at pseudo-random rows.  The matrix is a
pure function of ``(M, N, s, seed)`` so a receiver can regenerate it from the
four numbers carried in a packet header.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ExhaustedReseed, InvalidDimensions, LengthMismatch

MASK64 = (1 << 64) - 1
MAX_RESEEDS = 1000


class SplitMix64:
    """The splitmix64 generator (64-bit state, 64-bit output)."""

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)


@dataclass(frozen=True)
class SensingMatrix:
    rows: int
    cols: int
    ones_per_col: int
    seed: int
    col_supports: tuple[tuple[int, ...], ...] = field(repr=False)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    @property
    def row_index(self) -> np.ndarray:
        """Support rows flattened in ascending column order."""
        return np.fromiter(
            (m for col in self.col_supports for m in col),
            dtype=np.intp,
            count=self.cols * self.ones_per_col,
        )

    @cached_property
    def row_table(self) -> tuple[np.ndarray, np.ndarray]:
        """Per row, the columns holding a one in ascending order, padded to a rectangle.

        Returns ``(cols, valid)``, both of shape ``(M, max_row_degree)``.
        """
        rows = self.row_index
        col_of = np.repeat(np.arange(self.cols), self.ones_per_col)
        order = np.argsort(rows, kind="stable")
        counts = np.bincount(rows, minlength=self.rows)
        width = int(counts.max())
        valid = np.arange(width)[None, :] < counts[:, None]
        cols = np.zeros((self.rows, width), dtype=np.intp)
        cols[valid] = col_of[order]
        return cols, valid

    def to_text(self) -> str:
        return f"{self.rows} {self.cols} {self.ones_per_col} {self.seed}\n"

    @classmethod
    def from_text(cls, text: str) -> "SensingMatrix":
        parts = text.split()
        if len(parts) != 4:
            raise InvalidDimensions(f"expected 'M N s seed', got {text!r}")
        M, N, s, seed = (int(p) for p in parts)
        return generate_sensing(M, N, s, seed)


def splitmix64_stream(seed: int, count: int) -> np.ndarray:
    """The first ``count`` outputs of splitmix64, computed in closed form.

    The state after ``k`` steps is ``seed + k * golden`` mod 2**64, so the
    whole stream vectorizes; uint64 arithmetic wraps exactly as required.
    """
    k = np.arange(1, count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(seed & MASK64) + k * np.uint64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def _draw_supports(M: int, N: int, s: int, seed: int) -> np.ndarray:
    """Column supports, shape ``(N, s)``, sorted within each column.

    Column ``n`` consumes outputs ``n*s .. n*s+s-1``; at step ``k`` a partial
    Fisher-Yates shuffle of ``[0..M)`` swaps position ``k`` with
    ``k + (u mod (M - k))``.  Columns are shuffled side by side.
    """
    draws = splitmix64_stream(seed, N * s).reshape(N, s)
    pool = np.tile(np.arange(M), (N, 1))
    cols = np.arange(N)
    for k in range(s):
        j = k + (draws[:, k] % np.uint64(M - k)).astype(np.intp)
        pool[cols, k], pool[cols, j] = pool[cols, j], pool[cols, k].copy()
    return np.sort(pool[:, :s], axis=1)


def generate_sensing(M: int, N: int, s: int, seed: int, *, reseed: bool = True,
                     check_rank: bool = False) -> SensingMatrix:
    """Draw an ``M x N`` sparse binary matrix with ``s`` ones per column.

    If some row ends up empty the draw is repeated with ``seed + 1`` (and so
    on); the seed that finally succeeded is stored on the result so that
    regenerating from it reproduces the matrix without another reseed.
    """
    if not (1 <= s <= M < N):
        raise InvalidDimensions(f"need 1 <= s <= M < N, got M={M}, N={N}, s={s}")
    if not 0 <= seed <= MASK64:
        raise InvalidDimensions(f"seed must be a 64-bit unsigned integer, got {seed}")
    effective = seed
    for _ in range(MAX_RESEEDS):
        supports = _draw_supports(M, N, s, effective)
        if np.bincount(supports.ravel(), minlength=M).all():
            Phi = SensingMatrix(M, N, s, effective, tuple(map(tuple, supports.tolist())))
            if check_rank and np.linalg.matrix_rank(to_dense(Phi)) < M:
                raise InvalidDimensions(f"sensing matrix with seed {effective} is rank deficient")
            return Phi
        if not reseed:
            raise ExhaustedReseed(f"seed {effective} leaves an empty row")
        effective = (effective + 1) & MASK64
    raise ExhaustedReseed(
        f"{MAX_RESEEDS} consecutive seeds from {seed} left an empty row (M={M}, N={N}, s={s})"
    )


def apply_sensing(Phi: SensingMatrix, x) -> np.ndarray:
    """Compute ``y = Phi @ x`` by accumulating columns in ascending order."""
    x = np.asarray(x, dtype=float)
    if x.shape != (Phi.cols,):
        raise LengthMismatch(f"signal length {x.shape} does not match N={Phi.cols}")
    return accumulate_rows(Phi, x)


def accumulate_rows(Phi: SensingMatrix, X: np.ndarray) -> np.ndarray:
    """Row ``m`` of the result is the sum of ``X[n]`` over the ones of row ``m``, added in ascending ``n``."""
    cols, valid = Phi.row_table
    out = np.zeros((Phi.rows,) + X.shape[1:])
    for k in range(cols.shape[1]):
        hit = valid[:, k]
        out[hit] += X[cols[hit, k]]
    return out


def to_dense(Phi: SensingMatrix) -> np.ndarray:
    A = np.zeros((Phi.rows, Phi.cols))
    cols = np.repeat(np.arange(Phi.cols), Phi.ones_per_col)
    A[Phi.row_index, cols] = 1.0
    return A
