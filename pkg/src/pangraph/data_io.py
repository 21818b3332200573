"""Dataset parsing, serialization, and splits.

Three concerns live here:
  * the TU plain-text multi-file format (edge list + graph indicator +
    labels, optional node labels/attributes), 1-based on disk;
  * the internal single-file binary format "PANDS1" (little-endian,
    versioned, CRC-protected, with an optional per-node position chunk so
    point-pattern datasets stay plottable);
  * seeded train/val/test splits.
"""

from __future__ import annotations

import io
import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .graph import CsrGraph, CsrMatrix, csr_from_edges

MAGIC = b"PANDS1"
FORMAT_VERSION = 1

_FLAG_POSITIONS = 1
_FLAG_REGRESSION = 2


class DataError(ValueError):
    pass


@dataclass
class Dataset:
    """Immutable-by-convention list of labeled graphs with uniform features.

    num_classes is 0 for regression datasets (labels are real targets).
    positions, when present, holds one (n, 2) coordinate array per graph.
    """

    graphs: list[CsrGraph]
    name: str = "dataset"
    num_classes: int = 0
    feature_dim: int = 0
    regression: bool = False
    positions: list[np.ndarray] | None = None

    def __post_init__(self):
        if self.graphs:
            dims = {g.feature_dim for g in self.graphs}
            if len(dims) != 1:
                raise DataError(f"non-uniform feature dims {sorted(dims)}")
            self.feature_dim = dims.pop()
        if not self.regression:
            for g in self.graphs:
                label = int(g.label)
                if not 0 <= label < max(self.num_classes, 1):
                    raise DataError(f"label {g.label} outside [0, {self.num_classes})")
        if self.positions is not None:
            if len(self.positions) != len(self.graphs):
                raise DataError("positions list does not match graph count")
            for g, pos in zip(self.graphs, self.positions):
                if pos.shape != (g.node_count, 2):
                    raise DataError("positions must be node_count x 2")

    def __len__(self) -> int:
        return len(self.graphs)

    def labels(self) -> np.ndarray:
        dtype = np.float64 if self.regression else np.int64
        return np.array([g.label for g in self.graphs], dtype=dtype)


@dataclass(frozen=True)
class SplitSpec:
    fractions: tuple[float, float, float] = (0.8, 0.1, 0.1)
    seed: int = 0

    def __post_init__(self):
        if len(self.fractions) != 3 or any(f < 0 for f in self.fractions):
            raise DataError("fractions must be three nonnegative numbers")
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise DataError(f"fractions sum to {sum(self.fractions)}, not 1")


def _read_numeric_lines(path: Path, dtype) -> np.ndarray:
    """Parse a TU file: one comma-or-whitespace separated record per line."""
    rows = []
    try:
        text = path.read_text()
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}") from e
    for ln, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            rows.append([dtype(tok) for tok in line.replace(",", " ").split()])
        except ValueError as e:
            raise DataError(f"{path.name}:{ln}: non-numeric field {line!r}") from e
    if not rows:
        return np.zeros((0, 0), dtype=np.float64 if dtype is float else np.int64)
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise DataError(f"{path.name}: ragged rows")
    return np.array(rows, dtype=np.float64 if dtype is float else np.int64)


def parse_tu_dataset(directory, name: str) -> Dataset:
    """Load a TU-format dataset from ``directory``.

    Mandatory files: {name}_A.txt, {name}_graph_indicator.txt,
    {name}_graph_labels.txt. Node labels are one-hot encoded; continuous
    node attributes, when present, are appended after the one-hot block.
    Edge files are symmetrized and deduplicated; indices become 0-based;
    graph labels are remapped to a contiguous 0..C-1 range.
    """
    directory = Path(directory)
    paths = {key: directory / f"{name}_{key}.txt"
             for key in ("A", "graph_indicator", "graph_labels",
                         "node_labels", "node_attributes")}
    for key in ("A", "graph_indicator", "graph_labels"):
        if not paths[key].is_file():
            raise DataError(f"missing mandatory TU file {paths[key]}")

    edges = _read_numeric_lines(paths["A"], int)
    indicator = _read_numeric_lines(paths["graph_indicator"], int).ravel()
    graph_labels = _read_numeric_lines(paths["graph_labels"], int).ravel()

    num_nodes = len(indicator)
    num_graphs = len(graph_labels)
    if indicator.min(initial=1) < 1 or indicator.max(initial=1) > num_graphs:
        raise DataError("graph_indicator references a graph outside 1..num_graphs")
    node_graph = indicator - 1

    # Per-graph node index ranges; TU numbers nodes consecutively per graph.
    counts = np.bincount(node_graph, minlength=num_graphs)
    offsets = np.concatenate([[0], np.cumsum(counts)])
    if np.any(np.diff(node_graph) < 0):
        raise DataError("graph_indicator must be non-decreasing")

    feature_blocks = []
    if paths["node_labels"].is_file():
        raw = _read_numeric_lines(paths["node_labels"], int).ravel()
        if len(raw) != num_nodes:
            raise DataError("node_labels length does not match node count")
        values = np.unique(raw)
        onehot = np.zeros((num_nodes, len(values)))
        onehot[np.arange(num_nodes), np.searchsorted(values, raw)] = 1.0
        feature_blocks.append(onehot)
    if paths["node_attributes"].is_file():
        attrs = _read_numeric_lines(paths["node_attributes"], float)
        if len(attrs) != num_nodes:
            raise DataError("node_attributes length does not match node count")
        feature_blocks.append(attrs)
    if feature_blocks:
        features = np.hstack(feature_blocks)
    else:
        features = np.ones((num_nodes, 1))

    label_values = np.unique(graph_labels)
    remapped = np.searchsorted(label_values, graph_labels)

    per_graph_edges: list[set[tuple[int, int]]] = [set() for _ in range(num_graphs)]
    if edges.size:
        if edges.shape[1] != 2:
            raise DataError(f"{paths['A'].name}: expected two columns")
        for a, b in edges - 1:
            if not (0 <= a < num_nodes and 0 <= b < num_nodes):
                raise DataError(f"edge ({a + 1}, {b + 1}) references a missing node")
            ga, gb = node_graph[a], node_graph[b]
            if ga != gb:
                raise DataError(f"edge ({a + 1}, {b + 1}) crosses graphs {ga + 1} and {gb + 1}")
            if a == b:
                continue
            lo, hi = (a, b) if a < b else (b, a)
            per_graph_edges[ga].add((int(lo), int(hi)))

    graphs = []
    for k in range(num_graphs):
        base = offsets[k]
        n = counts[k]
        local = [(i - base, j - base) for i, j in sorted(per_graph_edges[k])]
        adj = csr_from_edges(local, int(n), symmetrize=True)
        graphs.append(CsrGraph(adj, features[base:base + n], int(remapped[k])))

    return Dataset(graphs=graphs, name=name, num_classes=len(label_values))


def standardize_features(ds: Dataset) -> tuple[Dataset, np.ndarray, np.ndarray]:
    """Per-feature standardization over all nodes; constant columns are
    centered but not scaled. Returns (new dataset, mean, std)."""
    stacked = np.vstack([g.features for g in ds.graphs])
    mean = stacked.mean(axis=0)
    std = stacked.std(axis=0)
    std = np.where(std < 1e-12, 1.0, std)
    graphs = [CsrGraph(g.adj, (g.features - mean) / std, g.label)
              for g in ds.graphs]
    out = Dataset(graphs=graphs, name=ds.name, num_classes=ds.num_classes,
                  regression=ds.regression, positions=ds.positions)
    return out, mean, std


# --- PANDS1 binary format ----------------------------------------------------
#
# magic "PANDS1" | u16 version | u32 flags | u32 name_len | name utf-8
# | u32 num_classes | u32 feature_dim | u64 num_graphs
# | per graph: u64 n | u64 nnz | i64 row_ptr[n+1] | i64 col_idx[nnz]
#              | f64 values[nnz] | f64 features[n*feature_dim]
#              | label (i64, or f64 when regression)
#              | f64 positions[n*2]   (only when flag set)
# | u32 crc32 of everything before it

def save_dataset(ds: Dataset, path) -> None:
    buf = io.BytesIO()
    flags = 0
    if ds.positions is not None:
        flags |= _FLAG_POSITIONS
    if ds.regression:
        flags |= _FLAG_REGRESSION
    name_bytes = ds.name.encode("utf-8")
    buf.write(MAGIC)
    buf.write(struct.pack("<HII", FORMAT_VERSION, flags, len(name_bytes)))
    buf.write(name_bytes)
    buf.write(struct.pack("<IIQ", ds.num_classes, ds.feature_dim, len(ds.graphs)))
    for k, g in enumerate(ds.graphs):
        adj = g.adj
        buf.write(struct.pack("<QQ", g.node_count, adj.nnz))
        buf.write(np.ascontiguousarray(adj.row_ptr, dtype="<i8").tobytes())
        buf.write(np.ascontiguousarray(adj.col_idx, dtype="<i8").tobytes())
        buf.write(np.ascontiguousarray(adj.values, dtype="<f8").tobytes())
        buf.write(np.ascontiguousarray(g.features, dtype="<f8").tobytes())
        if ds.regression:
            buf.write(struct.pack("<d", float(g.label)))
        else:
            buf.write(struct.pack("<q", int(g.label)))
        if ds.positions is not None:
            buf.write(np.ascontiguousarray(ds.positions[k], dtype="<f8").tobytes())
    payload = buf.getvalue()
    crc = zlib.crc32(payload) & 0xFFFFFFFF
    Path(path).write_bytes(payload + struct.pack("<I", crc))


class _Reader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise DataError(f"{self.path}: truncated file")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def array(self, dtype: str, count: int) -> np.ndarray:
        itemsize = np.dtype(dtype).itemsize
        return np.frombuffer(self.take(itemsize * count), dtype=dtype).copy()


def load_dataset(path) -> Dataset:
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) + 8:
        raise DataError(f"{path}: truncated file")
    payload, crc_bytes = raw[:-4], raw[-4:]
    if payload[:len(MAGIC)] != MAGIC:
        raise DataError(f"{path}: not a PANDS1 file (bad magic)")
    (stored_crc,) = struct.unpack("<I", crc_bytes)
    if zlib.crc32(payload) & 0xFFFFFFFF != stored_crc:
        raise DataError(f"{path}: checksum mismatch (corrupted file)")
    r = _Reader(payload, path)
    r.take(len(MAGIC))
    version, flags, name_len = r.unpack("<HII")
    if version != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported format version {version}")
    name = r.take(name_len).decode("utf-8")
    num_classes, feature_dim, num_graphs = r.unpack("<IIQ")
    regression = bool(flags & _FLAG_REGRESSION)
    has_positions = bool(flags & _FLAG_POSITIONS)
    graphs = []
    positions: list[np.ndarray] | None = [] if has_positions else None
    for _ in range(num_graphs):
        n, nnz = r.unpack("<QQ")
        row_ptr = r.array("<i8", n + 1)
        col_idx = r.array("<i8", nnz)
        values = r.array("<f8", nnz)
        features = r.array("<f8", n * feature_dim).reshape(n, feature_dim)
        label = r.unpack("<d")[0] if regression else r.unpack("<q")[0]
        if has_positions:
            positions.append(r.array("<f8", n * 2).reshape(n, 2))
        adj = CsrMatrix(int(n), int(n), row_ptr, col_idx, values)
        graphs.append(CsrGraph(adj, features, label))
    if r.pos != len(payload):
        raise DataError(f"{path}: {len(payload) - r.pos} trailing bytes")
    return Dataset(graphs=graphs, name=name, num_classes=num_classes,
                   regression=regression, positions=positions)


def split_dataset(ds_or_size, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Disjoint covering (train, val, test) index arrays.

    Indices are shuffled by a PCG64 stream seeded from the spec, then cut at
    floor-cumulative sizes; leftover graphs go to train.
    """
    size = ds_or_size if isinstance(ds_or_size, int) else len(ds_or_size)
    perm = np.random.Generator(np.random.PCG64(spec.seed)).permutation(size)
    n_val = int(spec.fractions[1] * size)
    n_test = int(spec.fractions[2] * size)
    n_train = size - n_val - n_test
    train = perm[:n_train]
    val = perm[n_train:n_train + n_val]
    test = perm[n_train + n_val:]
    return np.sort(train), np.sort(val), np.sort(test)


def split_manifest(train, val, test, seed: int) -> str:
    """JSON manifest of a split, for external tooling."""
    return json.dumps({"train": [int(i) for i in train],
                       "val": [int(i) for i in val],
                       "test": [int(i) for i in test],
                       "seed": int(seed)}, indent=None, separators=(",", ":"))
