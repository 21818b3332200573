"""Immutable sparse graphs in CSR form, plus the small linear-algebra kernels
(sparse-dense products, batching, induced subgraphs) everything else builds on.

Graphs are undirected: the stored adjacency is symmetric and has no diagonal
entries. Self-contributions enter the walk series through the A^0 term, so
storing self-loops would double count them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp


class GraphError(ValueError):
    """Invalid graph construction or query."""


@dataclass(frozen=True)
class CsrMatrix:
    """Sparse matrix in canonical CSR form.

    Canonical means: row_ptr non-decreasing with row_ptr[0] == 0, column
    indices strictly increasing within each row, no explicit zeros required.
    Unweighted edges carry value 1.0.
    """

    num_rows: int
    num_cols: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray
    _scipy_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.num_rows < 0 or self.num_cols < 0:
            raise GraphError("matrix dimensions must be non-negative")
        rp = np.asarray(self.row_ptr, dtype=np.int64)
        ci = np.asarray(self.col_idx, dtype=np.int64)
        va = np.asarray(self.values, dtype=np.float64)
        if rp.shape != (self.num_rows + 1,) or rp[0] != 0 or rp[-1] != len(ci):
            raise GraphError("row_ptr inconsistent with col_idx")
        if np.any(np.diff(rp) < 0):
            raise GraphError("row_ptr must be non-decreasing")
        if len(ci) != len(va):
            raise GraphError("col_idx and values length mismatch")
        if len(ci) and (ci.min() < 0 or ci.max() >= self.num_cols):
            raise GraphError("column index out of range")
        for r in range(self.num_rows):
            cols = ci[rp[r]:rp[r + 1]]
            if len(cols) > 1 and np.any(np.diff(cols) <= 0):
                raise GraphError(f"row {r} columns not strictly increasing")
        object.__setattr__(self, "row_ptr", rp)
        object.__setattr__(self, "col_idx", ci)
        object.__setattr__(self, "values", va)

    @property
    def nnz(self) -> int:
        return len(self.col_idx)

    def to_scipy(self) -> sp.csr_matrix:
        """scipy view of this matrix; built once and cached."""
        m = self._scipy_cache.get("csr")
        if m is None:
            m = sp.csr_matrix(
                (self.values, self.col_idx, self.row_ptr),
                shape=(self.num_rows, self.num_cols),
            )
            self._scipy_cache["csr"] = m
        return m

    def transpose_scipy(self) -> sp.csr_matrix:
        m = self._scipy_cache.get("csr_t")
        if m is None:
            m = self.to_scipy().T.tocsr()
            self._scipy_cache["csr_t"] = m
        return m

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.num_rows, self.num_cols))
        for r in range(self.num_rows):
            lo, hi = self.row_ptr[r], self.row_ptr[r + 1]
            out[r, self.col_idx[lo:hi]] = self.values[lo:hi]
        return out

    def to_edge_list(self) -> list[tuple[int, int, float]]:
        """Stored entries as (row, col, value), in CSR order."""
        rows = np.repeat(np.arange(self.num_rows), np.diff(self.row_ptr))
        return [(int(i), int(j), float(w))
                for i, j, w in zip(rows, self.col_idx, self.values)]

    def row_degrees(self) -> np.ndarray:
        """Stored-entry count per row (unweighted degree)."""
        return np.diff(self.row_ptr).astype(np.int64)

    def is_symmetric(self, tol: float = 0.0) -> bool:
        d = self.to_scipy() - self.transpose_scipy()
        return len(d.data) == 0 or np.max(np.abs(d.data)) <= tol


def csr_from_edges(edges, num_nodes: int, symmetrize: bool = False,
                   num_cols: int | None = None) -> CsrMatrix:
    """Build a canonical CSR matrix from an edge list.

    Each edge is (i, j) or (i, j, w); missing weights default to 1.0.
    Duplicate entries are collapsed by summing their weights. With
    ``symmetrize`` both (i, j) and (j, i) are stored.
    """
    if num_nodes < 0:
        raise GraphError("negative num_nodes")
    if num_cols is None:
        num_cols = num_nodes
    rows, cols, vals = [], [], []
    for e in edges:
        if len(e) == 2:
            i, j = e
            w = 1.0
        else:
            i, j, w = e
        if not (0 <= i < num_nodes and 0 <= j < num_cols):
            raise GraphError(f"edge ({i}, {j}) out of range for {num_nodes} nodes")
        rows.append(i)
        cols.append(j)
        vals.append(float(w))
        if symmetrize and i != j:
            rows.append(j)
            cols.append(i)
            vals.append(float(w))
    return _csr_from_coo(np.asarray(rows, dtype=np.int64),
                         np.asarray(cols, dtype=np.int64),
                         np.asarray(vals, dtype=np.float64),
                         num_nodes, num_cols)


def _csr_from_coo(rows, cols, vals, num_rows, num_cols) -> CsrMatrix:
    """Canonicalize COO triplets: sort by (row, col), sum duplicates."""
    if len(rows) == 0:
        return CsrMatrix(num_rows, num_cols,
                         np.zeros(num_rows + 1, dtype=np.int64),
                         np.empty(0, dtype=np.int64), np.empty(0))
    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    keep = np.ones(len(rows), dtype=bool)
    keep[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
    group = np.cumsum(keep) - 1
    merged = np.zeros(group[-1] + 1)
    np.add.at(merged, group, vals)
    rows, cols = rows[keep], cols[keep]
    row_ptr = np.zeros(num_rows + 1, dtype=np.int64)
    np.add.at(row_ptr, rows + 1, 1)
    np.cumsum(row_ptr, out=row_ptr)
    return CsrMatrix(num_rows, num_cols, row_ptr, cols, merged)


def spmm(a: CsrMatrix, x: np.ndarray) -> np.ndarray:
    """Sparse-dense product a @ x, exact per-row accumulation in index order."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        if a.num_cols != x.shape[0]:
            raise GraphError(f"spmm shape mismatch: {a.num_cols} vs {x.shape}")
        return a.to_scipy() @ x
    if a.num_cols != x.shape[0]:
        raise GraphError(f"spmm shape mismatch: {a.num_cols} vs {x.shape[0]}")
    return a.to_scipy() @ x


def spmm_transpose(a: CsrMatrix, x: np.ndarray) -> np.ndarray:
    """a.T @ x without materializing a new CsrMatrix."""
    if a.num_rows != x.shape[0]:
        raise GraphError(f"spmm_transpose shape mismatch: {a.num_rows} vs {x.shape[0]}")
    return a.transpose_scipy() @ np.asarray(x, dtype=np.float64)


@dataclass(frozen=True)
class CsrGraph:
    """Undirected graph: symmetric CSR adjacency without self-loops, a dense
    node-feature matrix, and a graph-level label (class index or real target).
    """

    adj: CsrMatrix
    features: np.ndarray
    label: float | int = 0

    def __post_init__(self):
        if self.adj.num_rows != self.adj.num_cols:
            raise GraphError("adjacency must be square")
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[0] != self.adj.num_rows:
            raise GraphError("features must be node_count x d")
        rows = np.repeat(np.arange(self.adj.num_rows), np.diff(self.adj.row_ptr))
        if np.any(rows == self.adj.col_idx):
            raise GraphError("self-loops are not allowed in stored adjacency")
        if not self.adj.is_symmetric():
            raise GraphError("adjacency must be symmetric")
        object.__setattr__(self, "features", feats)

    @property
    def node_count(self) -> int:
        return self.adj.num_rows

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]


def graph_from_edges(edges, num_nodes: int, features: np.ndarray | None = None,
                     label=0, symmetrize: bool = True) -> CsrGraph:
    """Convenience constructor; strips self-loops, symmetrizes by default."""
    edges = [e for e in edges if e[0] != e[1]]
    adj = csr_from_edges(edges, num_nodes, symmetrize=symmetrize)
    if features is None:
        features = np.ones((num_nodes, 1))
    return CsrGraph(adj, features, label)


def degrees(g: CsrGraph) -> np.ndarray:
    """Number of stored neighbors per node (weights ignored)."""
    return g.adj.row_degrees()


@dataclass(frozen=True)
class BatchedGraph:
    """Disjoint union of graphs: block-diagonal adjacency, stacked features,
    and bookkeeping to map nodes back to their source graph. No edges cross
    graph boundaries by construction.
    """

    adj: CsrMatrix
    features: np.ndarray
    node_to_graph: np.ndarray
    graph_offsets: np.ndarray
    graphs: tuple[CsrGraph, ...]
    labels: np.ndarray

    @property
    def num_graphs(self) -> int:
        return len(self.graphs)

    @property
    def num_nodes(self) -> int:
        return self.adj.num_rows

    def graph_slice(self, k: int) -> slice:
        return slice(int(self.graph_offsets[k]), int(self.graph_offsets[k + 1]))

    def extract(self, k: int) -> CsrGraph:
        """Recover the k-th input graph from the batch."""
        sl = self.graph_slice(k)
        lo, hi = self.adj.row_ptr[sl.start], self.adj.row_ptr[sl.stop]
        row_ptr = self.adj.row_ptr[sl.start:sl.stop + 1] - lo
        adj = CsrMatrix(sl.stop - sl.start, sl.stop - sl.start,
                        row_ptr, self.adj.col_idx[lo:hi] - sl.start,
                        self.adj.values[lo:hi].copy())
        return CsrGraph(adj, self.features[sl].copy(), self.graphs[k].label)


def batch_graphs(graphs) -> BatchedGraph:
    """Stack graphs into one block-diagonal batch."""
    graphs = tuple(graphs)
    if not graphs:
        raise GraphError("cannot batch an empty list of graphs")
    d = graphs[0].feature_dim
    for g in graphs:
        if g.feature_dim != d:
            raise GraphError(f"feature dims differ: {g.feature_dim} vs {d}")
    sizes = np.array([g.node_count for g in graphs], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    total = int(offsets[-1])
    row_ptr = np.zeros(total + 1, dtype=np.int64)
    col_parts, val_parts = [], []
    nnz_acc = 0
    for k, g in enumerate(graphs):
        lo = offsets[k]
        row_ptr[lo + 1:lo + g.node_count + 1] = g.adj.row_ptr[1:] + nnz_acc
        col_parts.append(g.adj.col_idx + lo)
        val_parts.append(g.adj.values)
        nnz_acc += g.adj.nnz
    adj = CsrMatrix(total, total, row_ptr,
                    np.concatenate(col_parts) if col_parts else np.empty(0, np.int64),
                    np.concatenate(val_parts) if val_parts else np.empty(0))
    features = np.vstack([g.features for g in graphs])
    node_to_graph = np.repeat(np.arange(len(graphs), dtype=np.int64), sizes)
    labels = np.array([g.label for g in graphs])
    return BatchedGraph(adj, features, node_to_graph, offsets, graphs, labels)


def induced_subgraph(g: CsrGraph, kept) -> CsrGraph:
    """Restrict a graph to the sorted node subset ``kept``.

    Surviving nodes are relabeled 0..K-1 in the order given; edges with either
    endpoint outside the subset are dropped. Symmetry and the no-self-loop
    invariant are preserved.
    """
    kept = np.asarray(kept, dtype=np.int64)
    n = g.node_count
    if kept.ndim != 1:
        raise GraphError("kept must be a 1-D index list")
    if len(kept) == 0:
        raise GraphError("kept must be non-empty")
    if np.any(kept < 0) or np.any(kept >= n):
        raise GraphError("kept index out of range")
    if len(kept) > 1 and np.any(np.diff(kept) <= 0):
        raise GraphError("kept must be strictly increasing")
    relabel = np.full(n, -1, dtype=np.int64)
    relabel[kept] = np.arange(len(kept))
    rows = np.repeat(np.arange(n), np.diff(g.adj.row_ptr))
    mask = (relabel[rows] >= 0) & (relabel[g.adj.col_idx] >= 0)
    adj = _csr_from_coo(relabel[rows[mask]], relabel[g.adj.col_idx[mask]],
                        g.adj.values[mask].copy(), len(kept), len(kept))
    return CsrGraph(adj, g.features[kept].copy(), g.label)
