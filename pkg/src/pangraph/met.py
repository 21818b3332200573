"""Maximal entropy transition (MET) matrix.

The transition operator is a truncated, per-length-weighted walk series

    S = sum_{n=0}^{L} w[n] * A^n,      w[n] > 0,

normalized by the per-node partition vector Z (row sums of S). Three discrete
normalizations are supported besides the raw series:

    RandomWalk:  M = Z^{-1} S          (rows sum to 1, receiver-controlled)
    Symmetric:   M = Z^{-1/2} S Z^{-1/2}
    Sender:      M = S Z^{-1}          (columns sum to 1 on symmetric A)

The weights are stored as unconstrained parameters theta with
w[n] = exp(theta[n]), which keeps the series strictly positive on the
diagonal (the A^0 term contributes w[0] to every S_ii), so Z > 0 always holds
and no guard against division by zero is needed downstream.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .graph import CsrMatrix, spmm


class NormMode(enum.Enum):
    RANDOM_WALK = "rw"
    SYMMETRIC = "sym"
    SENDER = "sender"
    UNNORMALIZED = "unnorm"

    @classmethod
    def parse(cls, s: str) -> "NormMode":
        table = {
            "rw": cls.RANDOM_WALK, "random_walk": cls.RANDOM_WALK,
            "sym": cls.SYMMETRIC, "symmetric": cls.SYMMETRIC,
            "sender": cls.SENDER,
            "unnorm": cls.UNNORMALIZED, "unnormalized": cls.UNNORMALIZED,
        }
        key = s.strip().lower()
        if key not in table:
            raise ValueError(f"unknown normalization mode {s!r}")
        return table[key]


@dataclass
class SeriesWeights:
    """Learnable per-path-length weights, parameterized as w = exp(theta)."""

    theta: np.ndarray

    def __post_init__(self):
        self.theta = np.atleast_1d(np.asarray(self.theta, dtype=np.float64))
        if self.theta.ndim != 1 or len(self.theta) == 0:
            raise ValueError("theta must be a non-empty 1-D vector")

    @classmethod
    def uniform(cls, cutoff: int) -> "SeriesWeights":
        """All weights equal to 1 (theta = 0); the unbiased default."""
        if cutoff < 0:
            raise ValueError("cutoff must be >= 0")
        return cls(np.zeros(cutoff + 1))

    @classmethod
    def from_weights(cls, w) -> "SeriesWeights":
        w = np.asarray(w, dtype=np.float64)
        if np.any(w <= 0):
            raise ValueError("series weights must be strictly positive")
        return cls(np.log(w))

    @property
    def w(self) -> np.ndarray:
        return np.exp(self.theta)

    @property
    def cutoff(self) -> int:
        return len(self.theta) - 1


@dataclass
class MetMatrix:
    """Materialized MET matrix for one graph at a fixed cutoff.

    diag_unnorm is the diagonal of the raw series S, read off before any
    normalization is applied (pooling variants that want the unnormalized
    diagonal use it directly instead of undoing the normalization).
    """

    m: np.ndarray
    z: np.ndarray
    diag: np.ndarray
    diag_unnorm: np.ndarray
    mode: NormMode
    cutoff: int


def adjacency_powers(a: CsrMatrix, cutoff: int) -> list[np.ndarray]:
    """Dense [I, A, A^2, ..., A^cutoff] by iterated sparse-dense products."""
    if a.num_rows != a.num_cols:
        raise ValueError("adjacency must be square")
    p = np.eye(a.num_rows)
    powers = [p]
    for _ in range(cutoff):
        p = spmm(a, p)
        powers.append(p)
    return powers


def weighted_power_series(a: CsrMatrix, w: SeriesWeights) -> np.ndarray:
    """S = sum_n w[n] A^n as a dense matrix."""
    powers = adjacency_powers(a, w.cutoff)
    weights = w.w
    s = weights[0] * powers[0]
    for n in range(1, len(powers)):
        s += weights[n] * powers[n]
    return s


def partition_vector(s: np.ndarray) -> np.ndarray:
    """Per-node partition function: row sums of the series matrix."""
    s = np.asarray(s)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError("series matrix must be square")
    return s.sum(axis=1)


def met_matrix(a: CsrMatrix, w: SeriesWeights,
               mode: NormMode = NormMode.SYMMETRIC) -> MetMatrix:
    """Build the MET matrix for one adjacency under the given normalization.

    The diagonal of the normalized matrix equals S_ii / Z_i in every
    normalized mode, which is what makes it usable as a node-importance
    score independent of the normalization choice.
    """
    s = weighted_power_series(a, w)
    z = partition_vector(s)
    diag_unnorm = np.diag(s).copy()
    if mode is NormMode.RANDOM_WALK:
        m = s / z[:, None]
    elif mode is NormMode.SYMMETRIC:
        zr = 1.0 / np.sqrt(z)
        m = zr[:, None] * s * zr[None, :]
    elif mode is NormMode.SENDER:
        m = s / z[None, :]
    elif mode is NormMode.UNNORMALIZED:
        m = s
    else:  # pragma: no cover - exhaustive enum
        raise ValueError(f"unhandled mode {mode}")
    return MetMatrix(m=m, z=z, diag=np.diag(m).copy(), diag_unnorm=diag_unnorm,
                     mode=mode, cutoff=w.cutoff)


def path_count(a: CsrMatrix, i: int, j: int, n: int) -> int:
    """Number of length-n walks from i to j, i.e. the (i, j) entry of A^n.

    Computed by propagating a basis vector, so only O(n * nnz) work.
    Intended for unweighted adjacencies, where entries are exact integers.
    """
    if n < 0:
        raise ValueError("walk length must be >= 0")
    size = a.num_rows
    if not (0 <= i < size and 0 <= j < size):
        raise ValueError("node index out of range")
    v = np.zeros(size)
    v[j] = 1.0
    for _ in range(n):
        v = spmm(a, v)
    return int(round(v[i]))
