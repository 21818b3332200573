"""Reverse-mode automatic differentiation on dense float64 tensors.

A Tape records operations in execution order; backward() replays them in
reverse, accumulating gradients additively on fan-out. The op vocabulary is
deliberately small: just enough to express the walk-series transition matrix,
graph convolution, top-k pooling with score gating, readout, and the two
losses, so that every trainable path can be verified against central finite
differences.

Sparse adjacencies enter only as constants (graph structure is data, not a
parameter); all gradients live on dense operands.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .graph import CsrMatrix, spmm, spmm_transpose

SUPPORTED_OPS = frozenset({
    "matmul", "spmm_const_sparse", "add", "add_broadcast_row", "scale",
    "exp", "tanh", "relu", "mul_elementwise", "row_sum", "rsqrt_elementwise",
    "diag_scale_rows", "diag_scale_cols", "gather_rows", "segment_mean",
    "segment_max", "log_softmax_rows", "nll_loss", "mse_loss", "concat_rows",
    "topk_mask_mul",
})

RSQRT_FLOOR = 1e-30


class AutogradError(ValueError):
    pass


class Value:
    """A tensor tracked on a tape. grad is allocated lazily by backward()."""

    __slots__ = ("data", "grad", "node_id", "requires_grad", "tape")

    def __init__(self, data: np.ndarray, node_id: int, requires_grad: bool,
                 tape: "Tape"):
        self.data = data
        self.grad = None
        self.node_id = node_id
        self.requires_grad = requires_grad
        self.tape = tape

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Value(id={self.node_id}, shape={self.data.shape}, requires_grad={self.requires_grad})"


class Tape:
    """Ordered record of operations; inputs are always recorded before outputs."""

    def __init__(self):
        self.nodes: list[Value] = []
        self._ops: list[tuple[str, tuple[int, ...], int, Callable]] = []
        self.consumed = False

    def _new_value(self, data, requires_grad) -> Value:
        v = Value(np.asarray(data, dtype=np.float64), len(self.nodes),
                  requires_grad, self)
        self.nodes.append(v)
        return v

    def leaf(self, data, requires_grad: bool = True) -> Value:
        return self._new_value(data, requires_grad)

    def constant(self, data) -> Value:
        return self._new_value(data, False)

    def record(self, op_kind: str, inputs: Sequence[Value], forward_result,
               backward: Callable[[np.ndarray], None]) -> Value:
        """Append an operation. backward(g) must accumulate into each
        requiring input's .grad given the output gradient g."""
        if op_kind not in SUPPORTED_OPS:
            raise AutogradError(f"unsupported op kind {op_kind!r}")
        for v in inputs:
            if v.tape is not self:
                raise AutogradError("inputs recorded on a different tape")
        requires = any(v.requires_grad for v in inputs)
        out = self._new_value(forward_result, requires)
        if requires:
            self._ops.append((op_kind, tuple(v.node_id for v in inputs),
                              out.node_id, backward))
        return out

    def backward(self, loss: Value) -> None:
        """Reverse sweep from a scalar loss; populates .grad on every
        requires_grad node reachable from it. A tape can be swept once."""
        if self.consumed:
            raise AutogradError("tape already consumed by a backward pass")
        if loss.tape is not self:
            raise AutogradError("loss does not belong to this tape")
        if loss.data.ndim != 0 and loss.data.size != 1:
            raise AutogradError(f"loss must be scalar, got shape {loss.data.shape}")
        self.consumed = True
        loss.grad = np.ones_like(loss.data)
        for _, _, out_id, backward_fn in reversed(self._ops):
            g = self.nodes[out_id].grad
            if g is None:
                continue
            backward_fn(g)


def _accum(v: Value, g: np.ndarray) -> None:
    if not v.requires_grad:
        return
    if v.grad is None:
        v.grad = np.zeros_like(v.data)
    v.grad += g


def _tape_of(*values: Value) -> Tape:
    return values[0].tape


def matmul(a: Value, b: Value) -> Value:
    """a @ b for (m,k)@(k,n) or (m,k)@(k,) operands."""
    if a.data.shape[-1] != b.data.shape[0]:
        raise AutogradError(f"matmul shape mismatch {a.data.shape} @ {b.data.shape}")
    out = a.data @ b.data

    def backward(g):
        if b.data.ndim == 1:
            _accum(a, np.outer(g, b.data))
            _accum(b, a.data.T @ g)
        else:
            _accum(a, g @ b.data.T)
            _accum(b, a.data.T @ g)

    return _tape_of(a, b).record("matmul", (a, b), out, backward)


def spmm_const_sparse(a: CsrMatrix, x: Value) -> Value:
    """Constant sparse matrix times dense Value; no gradient w.r.t. a."""
    out = spmm(a, x.data)

    def backward(g):
        _accum(x, spmm_transpose(a, g))

    return x.tape.record("spmm_const_sparse", (x,), out, backward)


def add(a: Value, b: Value) -> Value:
    if a.data.shape != b.data.shape:
        raise AutogradError(f"add shape mismatch {a.data.shape} vs {b.data.shape}")
    out = a.data + b.data

    def backward(g):
        _accum(a, g)
        _accum(b, g)

    return _tape_of(a, b).record("add", (a, b), out, backward)


def add_broadcast_row(a: Value, b: Value) -> Value:
    """(m,n) + (n,) row-broadcast addition (bias add)."""
    if a.data.ndim != 2 or b.data.shape != (a.data.shape[1],):
        raise AutogradError(f"add_broadcast_row shapes {a.data.shape}, {b.data.shape}")
    out = a.data + b.data[None, :]

    def backward(g):
        _accum(a, g)
        _accum(b, g.sum(axis=0))

    return _tape_of(a, b).record("add_broadcast_row", (a, b), out, backward)


def scale(x: Value, s: Value) -> Value:
    """Multiply a tensor by a scalar Value (shape () or size 1)."""
    if s.data.size != 1:
        raise AutogradError("scale expects a scalar multiplier")
    sv = float(s.data.reshape(()))
    out = sv * x.data

    def backward(g):
        _accum(x, sv * g)
        _accum(s, np.full_like(s.data, (g * x.data).sum()))

    return _tape_of(x, s).record("scale", (x, s), out, backward)


def exp(x: Value) -> Value:
    out = np.exp(x.data)

    def backward(g):
        _accum(x, g * out)

    return x.tape.record("exp", (x,), out, backward)


def tanh(x: Value) -> Value:
    out = np.tanh(x.data)

    def backward(g):
        _accum(x, g * (1.0 - out * out))

    return x.tape.record("tanh", (x,), out, backward)


def relu(x: Value) -> Value:
    out = np.maximum(x.data, 0.0)
    mask = x.data > 0.0

    def backward(g):
        _accum(x, g * mask)

    return x.tape.record("relu", (x,), out, backward)


def mul_elementwise(a: Value, b: Value) -> Value:
    if a.data.shape != b.data.shape:
        raise AutogradError(f"mul shape mismatch {a.data.shape} vs {b.data.shape}")
    out = a.data * b.data

    def backward(g):
        _accum(a, g * b.data)
        _accum(b, g * a.data)

    return _tape_of(a, b).record("mul_elementwise", (a, b), out, backward)


def row_sum(x: Value) -> Value:
    """Sum along the last axis: (m,n)->(m,), (n,)->scalar."""
    out = x.data.sum(axis=-1)

    def backward(g):
        _accum(x, np.broadcast_to(np.expand_dims(g, -1), x.data.shape))

    return x.tape.record("row_sum", (x,), out, backward)


def rsqrt_elementwise(x: Value) -> Value:
    """x^(-1/2) with the input clamped below at RSQRT_FLOOR.

    The clamp is unreachable when the series weight w[0] is positive but
    protects against degenerate configurations; its derivative is zero in
    the clamped region.
    """
    clamped = np.maximum(x.data, RSQRT_FLOOR)
    out = 1.0 / np.sqrt(clamped)
    active = x.data > RSQRT_FLOOR

    def backward(g):
        _accum(x, np.where(active, -0.5 * g * out / clamped, 0.0))

    return x.tape.record("rsqrt_elementwise", (x,), out, backward)


def diag_scale_rows(x: Value, d: Value) -> Value:
    """diag(d) @ x: scale row i by d[i]."""
    if d.data.shape != (x.data.shape[0],):
        raise AutogradError("diag_scale_rows length mismatch")
    out = d.data[:, None] * x.data

    def backward(g):
        _accum(x, d.data[:, None] * g)
        _accum(d, (g * x.data).sum(axis=1))

    return _tape_of(x, d).record("diag_scale_rows", (x, d), out, backward)


def diag_scale_cols(x: Value, d: Value) -> Value:
    """x @ diag(d): scale column j by d[j]."""
    if d.data.shape != (x.data.shape[1],):
        raise AutogradError("diag_scale_cols length mismatch")
    out = x.data * d.data[None, :]

    def backward(g):
        _accum(x, g * d.data[None, :])
        _accum(d, (g * x.data).sum(axis=0))

    return _tape_of(x, d).record("diag_scale_cols", (x, d), out, backward)


def gather_rows(x: Value, idx) -> Value:
    """x[idx] along axis 0; idx is a constant index array."""
    idx = np.asarray(idx, dtype=np.int64)
    out = x.data[idx]

    def backward(g):
        if x.requires_grad:
            if x.grad is None:
                x.grad = np.zeros_like(x.data)
            np.add.at(x.grad, idx, g)

    return x.tape.record("gather_rows", (x,), out, backward)


def segment_mean(x: Value, segment_ids, num_segments: int) -> Value:
    """Per-segment mean over rows; every segment must be non-empty."""
    seg = np.asarray(segment_ids, dtype=np.int64)
    counts = np.bincount(seg, minlength=num_segments)
    if np.any(counts == 0):
        raise AutogradError("segment_mean over an empty segment")
    out = np.zeros((num_segments,) + x.data.shape[1:])
    np.add.at(out, seg, x.data)
    out /= counts.reshape((-1,) + (1,) * (x.data.ndim - 1))

    def backward(g):
        _accum(x, g[seg] / counts[seg].reshape((-1,) + (1,) * (x.data.ndim - 1)))

    return x.tape.record("segment_mean", (x,), out, backward)


def segment_max(x: Value, segment_ids, num_segments: int) -> Value:
    """Per-segment max over rows; gradient flows to the argmax entries only.
    Segment ids must be non-decreasing (contiguous batch layout)."""
    seg = np.asarray(segment_ids, dtype=np.int64)
    if len(seg) and np.any(np.diff(seg) < 0):
        raise AutogradError("segment ids must be non-decreasing")
    counts = np.bincount(seg, minlength=num_segments)
    if np.any(counts == 0):
        raise AutogradError("segment_max over an empty segment")
    starts = np.concatenate([[0], np.cumsum(counts)])
    data2d = x.data if x.data.ndim == 2 else x.data[:, None]
    out = np.empty((num_segments, data2d.shape[1]))
    arg_rows = np.empty((num_segments, data2d.shape[1]), dtype=np.int64)
    for k in range(num_segments):
        lo, hi = starts[k], starts[k + 1]
        block = data2d[lo:hi]
        loc = block.argmax(axis=0)
        arg_rows[k] = lo + loc
        out[k] = block[loc, np.arange(data2d.shape[1])]
    if x.data.ndim == 1:
        out = out[:, 0]

    def backward(g):
        if x.requires_grad:
            if x.grad is None:
                x.grad = np.zeros_like(x.data)
            g2d = g if g.ndim == 2 else g[:, None]
            grad2d = x.grad if x.grad.ndim == 2 else x.grad[:, None]
            cols = np.broadcast_to(np.arange(g2d.shape[1]), g2d.shape)
            np.add.at(grad2d, (arg_rows, cols), g2d)

    return x.tape.record("segment_max", (x,), out, backward)


def log_softmax_rows(x: Value) -> Value:
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    out = shifted - logz
    softmax = np.exp(out)

    def backward(g):
        _accum(x, g - softmax * g.sum(axis=1, keepdims=True))

    return x.tape.record("log_softmax_rows", (x,), out, backward)


def nll_loss(log_probs: Value, labels) -> Value:
    """Mean negative log-likelihood of integer labels under row log-probs."""
    labels = np.asarray(labels, dtype=np.int64)
    m, c = log_probs.data.shape
    if np.any(labels < 0) or np.any(labels >= c):
        raise AutogradError("label out of range")
    out = -log_probs.data[np.arange(m), labels].mean()

    def backward(g):
        if log_probs.requires_grad:
            if log_probs.grad is None:
                log_probs.grad = np.zeros_like(log_probs.data)
            log_probs.grad[np.arange(m), labels] -= float(g) / m

    return log_probs.tape.record("nll_loss", (log_probs,), out, backward)


def mse_loss(pred: Value, target) -> Value:
    """Mean squared error against a constant target of the same shape."""
    target = np.asarray(target, dtype=np.float64)
    if target.shape != pred.data.shape:
        raise AutogradError("mse_loss shape mismatch")
    resid = pred.data - target
    out = (resid * resid).mean()

    def backward(g):
        _accum(pred, (2.0 / resid.size) * float(g) * resid)

    return pred.tape.record("mse_loss", (pred,), out, backward)


def concat_rows(parts: Sequence[Value]) -> Value:
    """Concatenate along axis 0."""
    if not parts:
        raise AutogradError("concat_rows needs at least one part")
    out = np.concatenate([p.data for p in parts], axis=0)
    offsets = np.cumsum([0] + [p.data.shape[0] for p in parts])

    def backward(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            _accum(p, g[lo:hi])

    return _tape_of(*parts).record("concat_rows", tuple(parts), out, backward)


def topk_mask_mul(x: Value, score: Value, kept) -> Value:
    """Select rows ``kept`` of x and gate them by tanh(score[kept]).

    The selection indices are constants of the forward pass (no gradient
    through the ranking); gradients reach the score only through the
    multiplicative gate, and reach x only on the selected rows.
    """
    kept = np.asarray(kept, dtype=np.int64)
    if score.data.ndim != 1 or x.data.ndim != 2:
        raise AutogradError("topk_mask_mul expects 2-D features and 1-D scores")
    gate = np.tanh(score.data[kept])
    out = x.data[kept] * gate[:, None]

    def backward(g):
        if x.requires_grad:
            if x.grad is None:
                x.grad = np.zeros_like(x.data)
            np.add.at(x.grad, kept, g * gate[:, None])
        if score.requires_grad:
            if score.grad is None:
                score.grad = np.zeros_like(score.data)
            dgate = (g * x.data[kept]).sum(axis=1) * (1.0 - gate * gate)
            np.add.at(score.grad, kept, dgate)

    return _tape_of(x, score).record("topk_mask_mul", (x, score), out, backward)


def finite_diff_check(f, params, eps: float = 1e-5) -> float:
    """Compare tape gradients of a scalar function against central finite
    differences, coordinate by coordinate.

    ``f`` receives a list of leaf Values (one per entry of ``params``, which
    are plain arrays) and must deterministically return a scalar Value.
    Returns max over all coordinates of |g_ad - g_fd| / max(1, |g_fd|).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    params = [np.array(p, dtype=np.float64) for p in params]

    def run(arrays):
        tape = Tape()
        leaves = [tape.leaf(a.copy()) for a in arrays]
        loss = f(leaves)
        val = float(loss.data)
        if not np.isfinite(val):
            raise AutogradError("objective returned a non-finite value")
        return tape, leaves, loss, val

    tape, leaves, loss, _ = run(params)
    tape.backward(loss)
    grads = [np.zeros_like(p) if v.grad is None else v.grad.copy()
             for p, v in zip(params, leaves)]

    worst = 0.0
    for pi, p in enumerate(params):
        flat = p.reshape(-1)
        for ci in range(flat.size):
            orig = flat[ci]
            flat[ci] = orig + eps
            _, _, _, f_plus = run(params)
            flat[ci] = orig - eps
            _, _, _, f_minus = run(params)
            flat[ci] = orig
            g_fd = (f_plus - f_minus) / (2.0 * eps)
            g_ad = grads[pi].reshape(-1)[ci]
            err = abs(g_ad - g_fd) / max(1.0, abs(g_fd))
            worst = max(worst, err)
    return worst
