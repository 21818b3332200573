"""Classical node-importance measures.

Degree and eigenvector centrality, and subgraph centrality through two
deliberately independent routes: the truncated factorial walk series
sum_k (A^k)_ii / k!, and the spectral closed form sum_j v_j(i)^2 e^{lambda_j}
computed with a dense Jacobi eigensolver. The two routes cross-validate each
other; they must never be collapsed into one implementation.

These are the fixed-weight limits of the learnable MET diagonal: the series
route is its factorially-weighted analogue, and the eigenvector ranking is
the limit of the diag(A^n) ranking as n grows.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .graph import CsrGraph, CsrMatrix, spmm


class CentralityError(ValueError):
    pass


class Measure(enum.Enum):
    DEGREE = "dc"
    EIGENVECTOR = "ec"
    SUBGRAPH_SERIES = "sc"
    SUBGRAPH_EXACT = "sc_exact"
    MET_DIAG = "metdiag"
    MET_DIAG_UNNORM = "metdiag_unnorm"
    HYBRID_SCORE = "hybrid"

    @classmethod
    def parse(cls, s: str) -> "Measure":
        key = s.strip().lower().replace("-", "_")
        for m in cls:
            if m.value == key:
                return m
        raise CentralityError(f"unknown centrality measure {s!r}")


@dataclass
class CentralityScores:
    measure: Measure
    values: np.ndarray


def _adjacency(g) -> CsrMatrix:
    return g.adj if isinstance(g, CsrGraph) else g


def degree_centrality(g) -> np.ndarray:
    """Neighbor counts."""
    return _adjacency(g).row_degrees().astype(np.float64)


def eigenvector_centrality(g, tol: float = 1e-13,
                           max_iter: int = 100000) -> np.ndarray:
    """Principal eigenvector of A by power iteration.

    Iterates on A + I: the shift leaves the eigenvector unchanged but makes
    the dominant eigenvalue strictly largest in magnitude even on bipartite
    graphs, whose +/-lambda pair would otherwise oscillate forever. Returns
    the l2-normalized Perron vector (entrywise nonnegative for connected
    graphs).
    """
    a = _adjacency(g)
    n = a.num_rows
    v = np.full(n, 1.0 / math.sqrt(n))
    for _ in range(max_iter):
        av = spmm(a, v)
        nxt = av + v
        nxt /= np.linalg.norm(nxt)
        # Require both a small step and a small Rayleigh residual; the step
        # criterion alone can trigger early on small-spectral-gap graphs.
        if np.max(np.abs(nxt - v)) < tol:
            lam = v @ av
            if np.max(np.abs(av - lam * v)) < 5.0 * tol:
                return v
        v = nxt
    raise CentralityError(f"power iteration did not converge in {max_iter} iterations")


def subgraph_centrality_series(g, k_trunc: int = 30) -> np.ndarray:
    """values[i] = sum_{k=0}^{K} (A^k)_ii / k!, by iterated products.

    Each term is accumulated as T_k = A T_{k-1} / k, so the running matrix
    stays bounded even when A^k alone would overflow.
    """
    if k_trunc < 0:
        raise CentralityError("truncation order must be >= 0")
    a = _adjacency(g)
    term = np.eye(a.num_rows)
    total = np.diag(term).copy()
    for k in range(1, k_trunc + 1):
        term = spmm(a, term) / k
        total += np.diag(term)
    return total


def subgraph_centrality_exact(g, tol: float = 1e-12) -> np.ndarray:
    """values[i] = sum_j v_j(i)^2 e^{lambda_j} from the full spectrum of A."""
    a = _adjacency(g).to_dense()
    eigvals, eigvecs = jacobi_eigh(a, tol=tol)
    return (eigvecs * eigvecs) @ np.exp(eigvals)


def jacobi_eigh(a: np.ndarray, tol: float = 1e-12,
                max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns (eigenvalues, eigenvectors) with eigenvalues ascending and
    eigenvectors in the matching columns. O(n^3) per sweep; meant for the
    dense graphs handled here (n up to a couple thousand), not as a general
    replacement for a tuned LAPACK routine.
    """
    a = np.array(a, dtype=np.float64)
    n = a.shape[0]
    if a.ndim != 2 or a.shape[1] != n:
        raise CentralityError("matrix must be square")
    if n and np.max(np.abs(a - a.T)) > 1e-12 * max(1.0, np.max(np.abs(a))):
        raise CentralityError("matrix must be symmetric")
    v = np.eye(n)
    if n < 2:
        return np.diag(a).copy(), v
    off_diag = ~np.eye(n, dtype=bool)
    for _ in range(max_sweeps):
        # Summing only the off-diagonal squares avoids the cancellation a
        # full-Frobenius-minus-diagonal formulation hits near convergence.
        off = math.sqrt((a[off_diag] ** 2).sum())
        if off <= tol * max(1.0, np.abs(np.diag(a)).max()):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                # Rotation angle from the standard stable formulation; the
                # asymptotic branch keeps theta**2 from overflowing.
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 1.0 / (2.0 * theta)
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rot_p = c * a[:, p] - s * a[:, q]
                rot_q = s * a[:, p] + c * a[:, q]
                a[:, p], a[:, q] = rot_p, rot_q
                rot_p = c * a[p, :] - s * a[q, :]
                rot_q = s * a[p, :] + c * a[q, :]
                a[p, :], a[q, :] = rot_p, rot_q
                a[p, q] = a[q, p] = 0.0
                rot_p = c * v[:, p] - s * v[:, q]
                rot_q = s * v[:, p] + c * v[:, q]
                v[:, p], v[:, q] = rot_p, rot_q
    else:
        raise CentralityError(f"Jacobi sweep limit {max_sweeps} reached without convergence")
    eigvals = np.diag(a).copy()
    order = np.argsort(eigvals, kind="stable")
    return eigvals[order], v[:, order]


def top_fraction(values: np.ndarray, frac: float) -> np.ndarray:
    """Indices of the ceil(frac * N) highest values, ties to lower index,
    returned sorted ascending."""
    if not 0.0 < frac <= 1.0:
        raise CentralityError("fraction must lie in (0, 1]")
    values = np.asarray(values, dtype=np.float64)
    take = math.ceil(frac * len(values))
    order = np.argsort(-values, kind="stable")
    out = order[:take].astype(np.int64)
    out.sort()
    return out


def renormalized_power_diag(g, n: int) -> np.ndarray:
    """diag(A^n) up to a positive factor, with per-step sup-norm rescaling.

    The rescaling keeps entries representable for large n; rankings are
    unaffected. As n grows the ranking approaches that of the squared
    Perron-vector entries (on connected non-bipartite graphs).
    """
    if n < 0:
        raise CentralityError("power must be >= 0")
    a = _adjacency(g)
    m = np.eye(a.num_rows)
    for _ in range(n):
        m = spmm(a, m)
        peak = np.max(np.abs(m))
        if peak > 0:
            m /= peak
    return np.diag(m).copy()
