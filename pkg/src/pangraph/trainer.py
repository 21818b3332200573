"""Model assembly, optimization, and experiment orchestration.

A model is a stack of [PANConv -> ReLU -> optional PANPool] blocks, a global
readout, and a dense head (no ReLU after the last conv before readout).
Parameters live in a flat name -> ndarray dict; each training step records
one tape over the whole mini-batch, so a fixed seed reproduces runs bit for
bit (batching order, reductions, and initialization are all seeded).
"""

from __future__ import annotations

import enum
import io
import json
import math
import struct
import time
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autograd as ag
from .autograd import Tape, Value
from .data_io import DataError, Dataset, SplitSpec, load_dataset, parse_tu_dataset, split_dataset, standardize_features
from .graph import CsrGraph, induced_subgraph
from .layers import PoolVariant, TapeMet, met_on_tape, pool_score_on_tape, topk_select
from .met import NormMode

CHECKPOINT_MAGIC = b"PANCK1"
CHECKPOINT_VERSION = 1


class TrainerError(RuntimeError):
    pass


class ConfigError(ValueError):
    pass


class TaskKind(enum.Enum):
    CLASSIFY = "classify"
    REGRESS = "regress"

    @classmethod
    def parse(cls, s: str) -> "TaskKind":
        key = s.strip().lower()
        for kind in cls:
            if kind.value == key:
                return kind
        raise ConfigError(f"unknown task {s!r}")


@dataclass(frozen=True)
class BlockConfig:
    out_dim: int
    cutoff: int = 4
    pool: PoolVariant | None = PoolVariant.HYBRID
    ratio: float = 0.5

    def __post_init__(self):
        if self.out_dim < 1:
            raise ConfigError("block out_dim must be >= 1")
        if not 0 <= self.cutoff <= 10:
            raise ConfigError("cutoff must lie in [0, 10]")
        if not 0.0 < self.ratio <= 1.0:
            raise ConfigError("pool ratio must lie in (0, 1]")


@dataclass(frozen=True)
class ModelConfig:
    blocks: tuple[BlockConfig, ...]
    mode: NormMode = NormMode.SYMMETRIC
    readout: str = "mean"
    head_dims: tuple[int, ...] = ()
    task: TaskKind = TaskKind.CLASSIFY
    num_classes: int = 2
    share_theta: bool = False

    def __post_init__(self):
        if not self.blocks:
            raise ConfigError("need at least one conv block")
        if self.readout not in ("mean", "max"):
            raise ConfigError(f"unknown readout {self.readout!r}")
        if any(d < 1 for d in self.head_dims):
            raise ConfigError("head dims must be >= 1")
        if self.task is TaskKind.CLASSIFY and self.num_classes < 2:
            raise ConfigError("classification needs >= 2 classes")
        if self.share_theta and len({b.cutoff for b in self.blocks}) > 1:
            raise ConfigError("share_theta requires one cutoff across blocks")

    @property
    def out_dim(self) -> int:
        return self.num_classes if self.task is TaskKind.CLASSIFY else 1


@dataclass(frozen=True)
class OptimConfig:
    learning_rate: float = 0.001
    weight_decay: float = 0.0005
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 20
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning rate must be positive")
        if not 0.0 <= self.weight_decay < 1.0:
            raise ConfigError("weight decay must lie in [0, 1)")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("invalid epochs/batch_size")


@dataclass
class RunReport:
    train_loss: list[float]
    val_loss: list[float]
    val_metric: list[float]
    test_metric: float
    theta_per_layer: list[list[float]]
    wall_time: float
    config: dict
    best_epoch: int

    def to_json(self) -> str:
        return json.dumps({
            "train_loss": self.train_loss,
            "val_loss": self.val_loss,
            "val_metric": self.val_metric,
            "test_metric": self.test_metric,
            "series_weights_per_layer": self.theta_per_layer,
            "wall_time_s": self.wall_time,
            "best_epoch": self.best_epoch,
            "config": self.config,
        }, indent=2, sort_keys=True)


class PanModel:
    """Parameter container plus the forward program."""

    def __init__(self, cfg: ModelConfig, feature_dim: int, rng=None):
        if feature_dim < 1:
            raise ConfigError("feature_dim must be >= 1")
        self.cfg = cfg
        self.feature_dim = feature_dim
        self.label_mean = 0.0
        self.label_std = 1.0
        self.params: dict[str, np.ndarray] = {}
        self._init_params(rng if isinstance(rng, np.random.Generator)
                          else np.random.Generator(np.random.PCG64(rng or 0)))

    @staticmethod
    def _glorot(rng, d_in, d_out):
        bound = math.sqrt(6.0 / (d_in + d_out))
        return rng.uniform(-bound, bound, size=(d_in, d_out))

    def _init_params(self, rng: np.random.Generator):
        cfg = self.cfg
        d = self.feature_dim
        if cfg.share_theta:
            self.params["theta"] = np.zeros(cfg.blocks[0].cutoff + 1)
        for b, block in enumerate(cfg.blocks):
            if not cfg.share_theta:
                self.params[f"conv{b}.theta"] = np.zeros(block.cutoff + 1)
            self.params[f"conv{b}.W"] = self._glorot(rng, d, block.out_dim)
            d = block.out_dim
            if block.pool is not None and block.pool.uses_projection:
                scale = 1.0 / math.sqrt(d)
                self.params[f"pool{b}.p"] = rng.uniform(-scale, scale, size=d)
                if block.pool.uses_beta:
                    self.params[f"pool{b}.beta"] = np.array([1.0])
        dims = (d,) + tuple(cfg.head_dims) + (cfg.out_dim,)
        for i in range(len(dims) - 1):
            self.params[f"head{i}.W"] = self._glorot(rng, dims[i], dims[i + 1])
            self.params[f"head{i}.b"] = np.zeros(dims[i + 1])
        self.num_head_layers = len(dims) - 1

    def leaf_values(self, tape: Tape, requires_grad: bool = True) -> dict[str, Value]:
        return {name: tape.leaf(arr, requires_grad=requires_grad)
                for name, arr in self.params.items()}

    def _theta_value(self, values: dict[str, Value], b: int) -> Value:
        return values["theta"] if self.cfg.share_theta else values[f"conv{b}.theta"]

    def forward(self, tape: Tape, values: dict[str, Value],
                graphs: list[CsrGraph]) -> Value:
        """Logits (G x out_dim) for a batch of graphs."""
        cfg = self.cfg
        if not graphs:
            raise TrainerError("empty batch")
        for g in graphs:
            if g.feature_dim != self.feature_dim:
                raise ConfigError(
                    f"graph feature dim {g.feature_dim} != model feature dim {self.feature_dim}")
        x = tape.constant(np.vstack([g.features for g in graphs]))
        current = list(graphs)
        last = len(cfg.blocks) - 1
        for b, block in enumerate(cfg.blocks):
            theta = self._theta_value(values, b)
            mets: list[TapeMet] = []
            parts: list[Value] = []
            offset = 0
            for g in current:
                met = met_on_tape(tape, g.adj, theta, cfg.mode)
                rows = np.arange(offset, offset + g.node_count)
                parts.append(ag.matmul(met.m, ag.gather_rows(x, rows)))
                mets.append(met)
                offset += g.node_count
            mx = parts[0] if len(parts) == 1 else ag.concat_rows(parts)
            x = ag.matmul(mx, values[f"conv{b}.W"])
            if b != last:
                x = ag.relu(x)
            if block.pool is not None:
                p = values.get(f"pool{b}.p")
                beta = values.get(f"pool{b}.beta")
                score_parts = []
                offset = 0
                for gi, g in enumerate(current):
                    rows = np.arange(offset, offset + g.node_count)
                    xg = ag.gather_rows(x, rows)
                    score_parts.append(pool_score_on_tape(
                        tape, xg, mets[gi], block.pool, p, beta))
                    offset += g.node_count
                score = (score_parts[0] if len(score_parts) == 1
                         else ag.concat_rows(score_parts))
                node_to_graph = np.repeat(np.arange(len(current)),
                                          [g.node_count for g in current])
                kept = topk_select(score.data, node_to_graph, block.ratio)
                x = ag.topk_mask_mul(x, score, kept)
                new_graphs = []
                offset = 0
                for g in current:
                    local = kept[(kept >= offset) & (kept < offset + g.node_count)] - offset
                    new_graphs.append(induced_subgraph(g, local))
                    offset += g.node_count
                current = new_graphs
        node_to_graph = np.repeat(np.arange(len(current)),
                                  [g.node_count for g in current])
        if cfg.readout == "mean":
            h = ag.segment_mean(x, node_to_graph, len(current))
        else:
            h = ag.segment_max(x, node_to_graph, len(current))
        for i in range(self.num_head_layers):
            h = ag.add_broadcast_row(ag.matmul(h, values[f"head{i}.W"]),
                                     values[f"head{i}.b"])
            if i != self.num_head_layers - 1:
                h = ag.relu(h)
        return h

    def loss(self, tape: Tape, values: dict[str, Value],
             graphs: list[CsrGraph], labels) -> Value:
        logits = self.forward(tape, values, graphs)
        if self.cfg.task is TaskKind.CLASSIFY:
            return ag.nll_loss(ag.log_softmax_rows(logits), labels)
        target = ((np.asarray(labels, dtype=np.float64) - self.label_mean)
                  / self.label_std)
        return ag.mse_loss(logits, target[:, None])

    def predict(self, graphs: list[CsrGraph]) -> np.ndarray:
        """Forward pass without gradients; returns logits (or raw outputs)."""
        tape = Tape()
        values = self.leaf_values(tape, requires_grad=False)
        return self.forward(tape, values, graphs).data

    def series_weights(self) -> list[list[float]]:
        """exp(theta) per conv layer, for weight-concentration inspection."""
        out = []
        for b in range(len(self.cfg.blocks)):
            name = "theta" if self.cfg.share_theta else f"conv{b}.theta"
            out.append([float(w) for w in np.exp(self.params[name])])
        return out

    def copy_params(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.params.items()}

    def set_params(self, params: dict[str, np.ndarray]) -> None:
        if set(params) != set(self.params):
            raise TrainerError("parameter name mismatch")
        for k, v in params.items():
            if v.shape != self.params[k].shape:
                raise TrainerError(f"shape mismatch for {k}")
            self.params[k] = v.copy()


def build_model(cfg: ModelConfig, feature_dim: int, rng=None) -> PanModel:
    return PanModel(cfg, feature_dim, rng)


@dataclass
class AdamState:
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState, cfg: OptimConfig) -> None:
    """One Adam update in place; decoupled weight decay shrinks first."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainerError(f"non-finite gradient in {name}; step aborted")
    state.t += 1
    t = state.t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p)
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        if cfg.weight_decay:
            p *= 1.0 - cfg.learning_rate * cfg.weight_decay
        m = state.m[name]
        v = state.v[name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * (g * g)
        m_hat = m / (1.0 - cfg.beta1 ** t)
        v_hat = v / (1.0 - cfg.beta2 ** t)
        p -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)


def train_epoch(model: PanModel, ds: Dataset, indices: np.ndarray,
                optim: OptimConfig, state: AdamState,
                epoch_rng: np.random.Generator) -> float:
    """One pass over the given indices in seeded shuffled mini-batches;
    returns the mean per-graph loss."""
    order = epoch_rng.permutation(np.asarray(indices))
    total = 0.0
    seen = 0
    for lo in range(0, len(order), optim.batch_size):
        batch_idx = order[lo:lo + optim.batch_size]
        graphs = [ds.graphs[int(i)] for i in batch_idx]
        labels = [ds.graphs[int(i)].label for i in batch_idx]
        tape = Tape()
        values = model.leaf_values(tape)
        loss = model.loss(tape, values, graphs, labels)
        if not np.isfinite(loss.data):
            raise TrainerError(f"non-finite loss {loss.data}")
        tape.backward(loss)
        grads = {name: (val.grad if val.grad is not None
                        else np.zeros_like(val.data))
                 for name, val in values.items()}
        adam_step(model.params, grads, state, optim)
        total += float(loss.data) * len(graphs)
        seen += len(graphs)
    return total / seen if seen else 0.0


def dataset_loss(model: PanModel, ds: Dataset, indices: np.ndarray,
                 batch_size: int = 64) -> float:
    """Mean loss without updating parameters."""
    total = 0.0
    seen = 0
    for lo in range(0, len(indices), batch_size):
        batch_idx = indices[lo:lo + batch_size]
        graphs = [ds.graphs[int(i)] for i in batch_idx]
        labels = [g.label for g in graphs]
        tape = Tape()
        values = model.leaf_values(tape, requires_grad=False)
        loss = model.loss(tape, values, graphs, labels)
        total += float(loss.data) * len(graphs)
        seen += len(graphs)
    return total / seen if seen else 0.0


def evaluate(model: PanModel, ds: Dataset, indices: np.ndarray,
             batch_size: int = 64) -> float:
    """Accuracy for classification; MAE in original label units for
    regression."""
    indices = np.asarray(indices)
    if model.cfg.task is TaskKind.CLASSIFY:
        correct = 0
        for lo in range(0, len(indices), batch_size):
            batch_idx = indices[lo:lo + batch_size]
            graphs = [ds.graphs[int(i)] for i in batch_idx]
            logits = model.predict(graphs)
            pred = logits.argmax(axis=1)
            truth = np.array([int(g.label) for g in graphs])
            correct += int((pred == truth).sum())
        return correct / len(indices) if len(indices) else 0.0
    abs_err = 0.0
    for lo in range(0, len(indices), batch_size):
        batch_idx = indices[lo:lo + batch_size]
        graphs = [ds.graphs[int(i)] for i in batch_idx]
        out = model.predict(graphs)[:, 0]
        pred = out * model.label_std + model.label_mean
        truth = np.array([float(g.label) for g in graphs])
        abs_err += float(np.abs(pred - truth).sum())
    return abs_err / len(indices) if len(indices) else 0.0


def gradient_check(model: PanModel, graphs: list[CsrGraph], labels,
                   eps: float = 1e-5) -> dict[str, float]:
    """Finite-difference error per parameter group, holding others fixed."""
    errors = {}
    for name in model.params:
        def objective(leaves, _name=name):
            tape = leaves[0].tape
            values = {}
            for other, arr in model.params.items():
                if other == _name:
                    values[other] = leaves[0]
                else:
                    values[other] = tape.leaf(arr, requires_grad=False)
            return model.loss(tape, values, graphs, labels)

        errors[name] = ag.finite_diff_check(objective, [model.params[name]], eps)
    return errors


# --- checkpoints --------------------------------------------------------------

def save_checkpoint(model: PanModel, path, extra: dict | None = None) -> None:
    header = {
        "model": model_config_to_dict(model.cfg),
        "feature_dim": model.feature_dim,
        "label_mean": model.label_mean,
        "label_std": model.label_std,
        "params": [{"name": k, "shape": list(v.shape)}
                   for k, v in model.params.items()],
        "extra": extra or {},
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<HI", CHECKPOINT_VERSION, len(header_bytes)))
    buf.write(header_bytes)
    for arr in model.params.values():
        buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    payload = buf.getvalue()
    Path(path).write_bytes(payload + struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF))


def load_checkpoint(path) -> PanModel:
    raw = Path(path).read_bytes()
    if len(raw) < len(CHECKPOINT_MAGIC) + 10:
        raise DataError(f"{path}: truncated checkpoint")
    payload, crc_bytes = raw[:-4], raw[-4:]
    if payload[:len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise DataError(f"{path}: not a PANCK1 checkpoint")
    if struct.unpack("<I", crc_bytes)[0] != zlib.crc32(payload) & 0xFFFFFFFF:
        raise DataError(f"{path}: checksum mismatch (corrupted checkpoint)")
    pos = len(CHECKPOINT_MAGIC)
    version, header_len = struct.unpack_from("<HI", payload, pos)
    pos += 6
    if version != CHECKPOINT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(payload[pos:pos + header_len].decode("utf-8"))
    pos += header_len
    cfg = model_config_from_dict(header["model"])
    model = PanModel(cfg, header["feature_dim"], rng=0)
    model.label_mean = float(header["label_mean"])
    model.label_std = float(header["label_std"])
    params = {}
    for meta in header["params"]:
        shape = tuple(meta["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=pos)
        pos += count * 8
        params[meta["name"]] = arr.reshape(shape).astype(np.float64)
    if pos != len(payload):
        raise DataError(f"{path}: trailing bytes in checkpoint")
    model.set_params(params)
    model.checkpoint_extra = header.get("extra", {})
    return model


# --- experiment configuration --------------------------------------------------

def model_config_to_dict(cfg: ModelConfig) -> dict:
    return {
        "blocks": [{"out_dim": b.out_dim, "cutoff": b.cutoff,
                    "pool": b.pool.value if b.pool else None,
                    "ratio": b.ratio} for b in cfg.blocks],
        "mode": cfg.mode.value,
        "readout": cfg.readout,
        "head_dims": list(cfg.head_dims),
        "task": cfg.task.value,
        "num_classes": cfg.num_classes,
        "share_theta": cfg.share_theta,
    }


def model_config_from_dict(d: dict) -> ModelConfig:
    try:
        blocks = tuple(BlockConfig(
            out_dim=int(b["out_dim"]),
            cutoff=int(b.get("cutoff", 4)),
            pool=PoolVariant.parse(b["pool"]) if b.get("pool") else None,
            ratio=float(b.get("ratio", 0.5)),
        ) for b in d["blocks"])
        return ModelConfig(
            blocks=blocks,
            mode=NormMode.parse(d.get("mode", "sym")),
            readout=d.get("readout", "mean"),
            head_dims=tuple(int(x) for x in d.get("head_dims", [])),
            task=TaskKind.parse(d.get("task", "classify")),
            num_classes=int(d.get("num_classes", 2)),
            share_theta=bool(d.get("share_theta", False)),
        )
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"bad model config: {e}") from e


def optim_config_from_dict(d: dict) -> OptimConfig:
    known = {"learning_rate", "weight_decay", "beta1", "beta2", "eps",
             "epochs", "batch_size", "seed"}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown optim keys {sorted(unknown)}")
    try:
        return OptimConfig(**{k: (int(v) if k in ("epochs", "batch_size", "seed")
                                  else float(v)) for k, v in d.items()})
    except (TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"bad optim config: {e}") from e


def load_config_file(path) -> dict:
    """Read an experiment config: JSON always, TOML when the interpreter
    ships tomllib."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text()
    if path.suffix.lower() == ".toml":
        try:
            import tomllib
        except ImportError as e:
            raise ConfigError("TOML configs need Python >= 3.11; use JSON") from e
        return tomllib.loads(text)
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON: {e}") from e


def apply_override(config: dict, key: str, value: str) -> None:
    """Set a dotted config path; the value parses as JSON when possible."""
    parts = key.split(".")
    node = config
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override path {key!r} crosses a non-dict value")
    try:
        node[parts[-1]] = json.loads(value)
    except json.JSONDecodeError:
        node[parts[-1]] = value


def load_experiment_dataset(spec: dict) -> Dataset:
    if "path" in spec:
        path = Path(spec["path"])
        if not path.is_file():
            raise ConfigError(f"dataset not found: {path}")
        ds = load_dataset(path)
    elif "tu_dir" in spec:
        ds = parse_tu_dataset(spec["tu_dir"], spec["name"])
    else:
        raise ConfigError("dataset config needs 'path' or 'tu_dir'+'name'")
    if spec.get("standardize"):
        ds, _, _ = standardize_features(ds)
    return ds


def run_experiment(config: dict, out_dir=None) -> RunReport:
    """Train per the config; returns the report and, when an output
    directory is configured, writes report.json, metrics.csv, and a
    best-validation checkpoint."""
    start = time.time()
    if "dataset" not in config or "model" not in config:
        raise ConfigError("config must have 'dataset' and 'model' sections")
    ds = load_experiment_dataset(config["dataset"])
    optim = optim_config_from_dict(config.get("optim", {}))
    split_cfg = config.get("split", {})
    spec = SplitSpec(tuple(split_cfg.get("fractions", (0.8, 0.1, 0.1))),
                     int(split_cfg.get("seed", optim.seed)))
    model_dict = dict(config["model"])
    if model_dict.get("task", "classify") == "classify":
        model_dict.setdefault("num_classes", max(ds.num_classes, 2))
    cfg = model_config_from_dict(model_dict)

    train_idx, val_idx, test_idx = split_dataset(ds, spec)
    model = build_model(cfg, ds.feature_dim if ds.graphs else 1,
                        np.random.Generator(np.random.PCG64(optim.seed)))
    if cfg.task is TaskKind.REGRESS and len(train_idx):
        targets = np.array([float(ds.graphs[int(i)].label) for i in train_idx])
        model.label_mean = float(targets.mean())
        model.label_std = float(targets.std()) or 1.0

    state = AdamState()
    epoch_rng = np.random.Generator(np.random.PCG64(optim.seed + 1))
    maximize = cfg.task is TaskKind.CLASSIFY
    best_metric = -math.inf if maximize else math.inf
    best_params = model.copy_params()
    best_epoch = -1
    train_losses, val_losses, val_metrics = [], [], []
    for epoch in range(optim.epochs):
        train_losses.append(train_epoch(model, ds, train_idx, optim, state, epoch_rng))
        val_losses.append(dataset_loss(model, ds, val_idx))
        metric = evaluate(model, ds, val_idx)
        val_metrics.append(metric)
        better = metric > best_metric if maximize else metric < best_metric
        if better:
            best_metric = metric
            best_params = model.copy_params()
            best_epoch = epoch
    if best_epoch >= 0:
        model.set_params(best_params)
    test_metric = evaluate(model, ds, test_idx)

    echo = {
        "dataset": config["dataset"],
        "split": {"fractions": list(spec.fractions), "seed": spec.seed},
        "model": model_config_to_dict(cfg),
        "optim": {k: getattr(optim, k) for k in (
            "learning_rate", "weight_decay", "beta1", "beta2", "eps",
            "epochs", "batch_size", "seed")},
    }
    report = RunReport(
        train_loss=train_losses, val_loss=val_losses, val_metric=val_metrics,
        test_metric=test_metric, theta_per_layer=model.series_weights(),
        wall_time=time.time() - start, config=echo, best_epoch=best_epoch)

    target_dir = out_dir or config.get("output", {}).get("dir")
    if target_dir:
        target = Path(target_dir)
        target.mkdir(parents=True, exist_ok=True)
        (target / "report.json").write_text(report.to_json() + "\n")
        (target / "metrics.csv").write_text(metrics_csv(report))
        save_checkpoint(model, target / "checkpoint.panck",
                        extra={"test_metric": test_metric,
                               "split": echo["split"],
                               "dataset": config["dataset"]})
    return report


def metrics_csv(report: RunReport) -> str:
    lines = ["epoch,train_loss,val_loss,val_metric"]
    for i, (tr, vl, vm) in enumerate(zip(report.train_loss, report.val_loss,
                                         report.val_metric)):
        lines.append(f"{i},{tr:.17g},{vl:.17g},{vm:.17g}")
    return "\n".join(lines) + "\n"
