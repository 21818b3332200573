"""Graph convolution and pooling layers built on the MET matrix.

PANConv: X' = M X W, with M rebuilt from the current adjacency each layer.
PANPool: rank nodes by a score, keep the top ceil(ratio * N) per graph, and
gate the surviving features by tanh(score) so the score parameters stay on
the gradient path (selection itself is discrete and carries no gradient).

Score variants:
    Hybrid   Xp + beta * diag(M)
    UM       diag(S)             (unnormalized series diagonal, no learnables)
    XUM      Xp + beta * diag(S)
    M        per-row l2 norm of M X
    XHM      (Xp) * diag(M)      (elementwise)
    TopKOnly Xp                  (Hybrid with beta frozen at 0)

Everything exists twice: plain ndarray functions for direct use, and
tape-recorded builders (suffix ``_on_tape``) the trainer composes so theta,
W, p and beta all receive gradients.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .autograd import Tape, Value
from .graph import BatchedGraph, CsrGraph, CsrMatrix, induced_subgraph
from .met import (MetMatrix, NormMode, SeriesWeights, adjacency_powers,
                  met_matrix)


class LayerError(ValueError):
    pass


class PoolVariant(enum.Enum):
    HYBRID = "hybrid"
    UM = "um"
    XUM = "xum"
    M = "m"
    XHM = "xhm"
    TOPK_ONLY = "topk_only"

    @classmethod
    def parse(cls, s: str) -> "PoolVariant":
        key = s.strip().lower().replace("-", "_")
        for variant in cls:
            if variant.value == key:
                return variant
        raise LayerError(f"unknown pooling variant {s!r}")

    @property
    def uses_projection(self) -> bool:
        return self in (PoolVariant.HYBRID, PoolVariant.XUM,
                        PoolVariant.XHM, PoolVariant.TOPK_ONLY)

    @property
    def uses_beta(self) -> bool:
        return self in (PoolVariant.HYBRID, PoolVariant.XUM)


@dataclass
class PanConvLayer:
    """One graph convolution: learnable series weights plus a dense W."""

    weights: SeriesWeights
    w_dense: np.ndarray
    mode: NormMode = NormMode.SYMMETRIC

    def __post_init__(self):
        self.w_dense = np.asarray(self.w_dense, dtype=np.float64)
        if self.w_dense.ndim != 2 or min(self.w_dense.shape) < 1:
            raise LayerError("W must be a d_in x d_out matrix")

    @classmethod
    def init(cls, d_in: int, d_out: int, cutoff: int, rng: np.random.Generator,
             mode: NormMode = NormMode.SYMMETRIC) -> "PanConvLayer":
        """Uniform Glorot W, uniform series weights (theta = 0)."""
        bound = math.sqrt(6.0 / (d_in + d_out))
        w = rng.uniform(-bound, bound, size=(d_in, d_out))
        return cls(SeriesWeights.uniform(cutoff), w, mode)


@dataclass
class PanPoolLayer:
    """Scoring layer for top-k pooling."""

    p: np.ndarray
    beta: float = 1.0
    ratio: float = 0.5
    variant: PoolVariant = PoolVariant.HYBRID

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=np.float64)
        if self.p.ndim != 1:
            raise LayerError("projection p must be a vector")
        if not 0.0 < self.ratio <= 1.0:
            raise LayerError("ratio must lie in (0, 1]")
        if self.variant is PoolVariant.TOPK_ONLY:
            self.beta = 0.0

    @classmethod
    def init(cls, d: int, rng: np.random.Generator, ratio: float = 0.5,
             variant: PoolVariant = PoolVariant.HYBRID) -> "PanPoolLayer":
        scale = 1.0 / math.sqrt(d)
        return cls(rng.uniform(-scale, scale, size=d), 1.0, ratio, variant)


@dataclass
class PoolResult:
    pooled_features: np.ndarray
    kept_indices: np.ndarray
    pooled_graph: CsrGraph
    scores: np.ndarray


def panconv_forward(x: np.ndarray, g: CsrGraph,
                    layer: PanConvLayer) -> tuple[np.ndarray, MetMatrix]:
    """X' = M X W; M is recomputed from g's (possibly pooled) adjacency."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != g.node_count:
        raise LayerError(f"features {x.shape} do not match {g.node_count} nodes")
    if x.shape[1] != layer.w_dense.shape[0]:
        raise LayerError(f"features {x.shape} do not match W {layer.w_dense.shape}")
    met = met_matrix(g.adj, layer.weights, layer.mode)
    return met.m @ x @ layer.w_dense, met


def pool_score(x: np.ndarray, met: MetMatrix, z: np.ndarray,
               layer: PanPoolLayer) -> np.ndarray:
    """Score vector for the layer's variant; see module docstring."""
    x = np.asarray(x, dtype=np.float64)
    if layer.variant is PoolVariant.UM:
        return met.diag_unnorm.copy()
    if layer.variant is PoolVariant.M:
        mx = met.m @ x
        return np.sqrt((mx * mx).sum(axis=1))
    if x.shape[1] != len(layer.p):
        raise LayerError(f"projection p has length {len(layer.p)}, features have {x.shape[1]} columns")
    xp = x @ layer.p
    if layer.variant is PoolVariant.HYBRID:
        return xp + layer.beta * met.diag
    if layer.variant is PoolVariant.XUM:
        return xp + layer.beta * met.diag_unnorm
    if layer.variant is PoolVariant.XHM:
        return xp * met.diag
    if layer.variant is PoolVariant.TOPK_ONLY:
        return xp
    raise LayerError(f"unhandled variant {layer.variant}")  # pragma: no cover


def topk_select(score: np.ndarray, node_to_graph: np.ndarray,
                ratio: float) -> np.ndarray:
    """Per graph, indices of the ceil(ratio * N_g) highest scores.

    Ties break toward the lower original node index; the returned global
    index array is sorted ascending.
    """
    score = np.asarray(score, dtype=np.float64)
    if np.any(np.isnan(score)):
        raise LayerError("NaN in pooling scores")
    node_to_graph = np.asarray(node_to_graph, dtype=np.int64)
    if len(score) != len(node_to_graph):
        raise LayerError("score and node_to_graph length mismatch")
    if not 0.0 < ratio <= 1.0:
        raise LayerError("ratio must lie in (0, 1]")
    kept: list[np.ndarray] = []
    num_graphs = int(node_to_graph.max()) + 1 if len(node_to_graph) else 0
    starts = np.searchsorted(node_to_graph, np.arange(num_graphs + 1))
    for k in range(num_graphs):
        lo, hi = starts[k], starts[k + 1]
        n_g = hi - lo
        if n_g == 0:
            raise LayerError(f"graph {k} has no nodes")
        take = math.ceil(ratio * n_g)
        order = np.argsort(-score[lo:hi], kind="stable")
        kept.append(lo + order[:take])
    out = np.concatenate(kept) if kept else np.zeros(0, dtype=np.int64)
    out.sort()
    return out


def pool_apply(x: np.ndarray, g: CsrGraph, kept: np.ndarray,
               score: np.ndarray) -> PoolResult:
    """Gate kept rows by tanh(score) and take the induced subgraph."""
    x = np.asarray(x, dtype=np.float64)
    kept = np.asarray(kept, dtype=np.int64)
    score = np.asarray(score, dtype=np.float64)
    gate = np.tanh(score[kept])
    pooled_x = x[kept] * gate[:, None]
    sub = induced_subgraph(g, kept)
    return PoolResult(pooled_features=pooled_x, kept_indices=kept,
                      pooled_graph=sub, scores=score)


def global_readout(x: np.ndarray, node_to_graph: np.ndarray,
                   mode: str = "mean", num_graphs: int | None = None) -> np.ndarray:
    """Per-graph mean or max over node rows."""
    x = np.asarray(x, dtype=np.float64)
    seg = np.asarray(node_to_graph, dtype=np.int64)
    if num_graphs is None:
        num_graphs = int(seg.max()) + 1 if len(seg) else 0
    counts = np.bincount(seg, minlength=num_graphs)
    if np.any(counts == 0):
        raise LayerError("empty graph segment in readout")
    if mode == "mean":
        out = np.zeros((num_graphs, x.shape[1]))
        np.add.at(out, seg, x)
        return out / counts[:, None]
    if mode == "max":
        out = np.full((num_graphs, x.shape[1]), -np.inf)
        np.maximum.at(out, seg, x)
        return out
    raise LayerError(f"unknown readout mode {mode!r}")


def cross_entropy_loss(logits: np.ndarray, labels: np.ndarray) -> float:
    """Mean negative log-softmax of the true class."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    m, c = logits.shape
    if np.any(labels < 0) or np.any(labels >= c):
        raise LayerError("label out of range")
    shifted = logits - logits.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return float(-logp[np.arange(m), labels].mean())


def regression_losses(pred: np.ndarray, target: np.ndarray) -> tuple[float, float]:
    """(mse, mae) of the residuals."""
    pred = np.asarray(pred, dtype=np.float64).ravel()
    target = np.asarray(target, dtype=np.float64).ravel()
    if pred.shape != target.shape:
        raise LayerError("prediction/target length mismatch")
    resid = pred - target
    return float((resid * resid).mean()), float(np.abs(resid).mean())


# --- tape-recorded builders -------------------------------------------------

@dataclass
class TapeMet:
    """MET matrix assembled on a tape; fields are Values."""

    m: Value
    z: Value
    diag: Value
    diag_unnorm: Value
    mode: NormMode
    cutoff: int


def met_on_tape(tape: Tape, adj: CsrMatrix, theta: Value,
                mode: NormMode = NormMode.SYMMETRIC) -> TapeMet:
    """Build M compositionally so gradients reach theta.

    The adjacency powers are constants (graph structure carries no
    gradient); only the per-order weights w = exp(theta) are learnable.
    """
    cutoff = theta.data.shape[0] - 1
    if theta.data.ndim != 1 or cutoff < 0:
        raise LayerError("theta must be a non-empty vector")
    powers = adjacency_powers(adj, cutoff)
    w = ag.exp(theta)
    s = None
    for n, power in enumerate(powers):
        term = ag.scale(tape.constant(power), ag.gather_rows(w, [n]))
        s = term if s is None else ag.add(s, term)
    z = ag.row_sum(s)
    eye = tape.constant(np.eye(adj.num_rows))
    diag_unnorm = ag.row_sum(ag.mul_elementwise(s, eye))
    if mode is NormMode.RANDOM_WALK:
        zr = ag.rsqrt_elementwise(z)
        z_inv = ag.mul_elementwise(zr, zr)
        m = ag.diag_scale_rows(s, z_inv)
    elif mode is NormMode.SYMMETRIC:
        zr = ag.rsqrt_elementwise(z)
        m = ag.diag_scale_cols(ag.diag_scale_rows(s, zr), zr)
    elif mode is NormMode.SENDER:
        zr = ag.rsqrt_elementwise(z)
        z_inv = ag.mul_elementwise(zr, zr)
        m = ag.diag_scale_cols(s, z_inv)
    elif mode is NormMode.UNNORMALIZED:
        m = s
    else:  # pragma: no cover - exhaustive enum
        raise LayerError(f"unhandled mode {mode}")
    diag = ag.row_sum(ag.mul_elementwise(m, eye))
    return TapeMet(m=m, z=z, diag=diag, diag_unnorm=diag_unnorm,
                   mode=mode, cutoff=cutoff)


def _sqrt_on_tape(x: Value) -> Value:
    # sqrt(x) = x * rsqrt(x); exact for x > 0, and 0 at the clamped origin.
    return ag.mul_elementwise(x, ag.rsqrt_elementwise(x))


def pool_score_on_tape(tape: Tape, x: Value, met: TapeMet, variant: PoolVariant,
                       p: Value | None, beta: Value | None) -> Value:
    """Tape version of pool_score; x is the post-conv feature Value."""
    if variant is PoolVariant.UM:
        return met.diag_unnorm
    if variant is PoolVariant.M:
        mx = ag.matmul(met.m, x)
        return _sqrt_on_tape(ag.row_sum(ag.mul_elementwise(mx, mx)))
    if p is None:
        raise LayerError(f"variant {variant.value} needs a projection vector")
    xp = ag.matmul(x, p)
    if variant is PoolVariant.TOPK_ONLY:
        return xp
    if variant is PoolVariant.XHM:
        return ag.mul_elementwise(xp, met.diag)
    if beta is None:
        raise LayerError(f"variant {variant.value} needs beta")
    source = met.diag if variant is PoolVariant.HYBRID else met.diag_unnorm
    return ag.add(xp, ag.scale(source, beta))
