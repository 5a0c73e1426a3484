"""Training loop, metrics, training strategies, and the ablation runner.

Training is deliberately simple: decoupled-weight-decay Adam, one update per
sample in seeded-shuffled order, a fixed number of epochs, and a checkpoint
of the final epoch. Identical (config, data, seed) reproduces identical
results bit for bit.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from . import numgrad as ng
from .dataio import Dataset, VillageSample, split_dataset
from .heads import HeadParams, joint_loss, predict_sample, relation_pool, classify
from .model import (
    ForwardTrace,
    ModelConfig,
    ModelParams,
    attention_csv,
    forward,
    normalize_adjacency,
)
from .taxonomy import Schema, SCHEMA_VERSION, build_input_adjacency

CKPT_MAGIC = b"HGNNCKPT"

GROUP_ORDER = ("S", "V", "R")
STRATEGIES = ("split", "group", "overall")


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; message names the first offending group."""


class CheckpointError(ValueError):
    """Checkpoint file is corrupt or inconsistent with the schema."""


@dataclass
class TrainConfig:
    d: int = 512
    layers: int = 3
    beta: float = 0.6
    comm_edge_mode: str = "gat"
    init_mode: str = "random"
    expansion: str = "affine"
    leaky_slope: float = 0.2
    learning_rate: float = 1e-4
    epochs: int = 20
    seed: int = 0
    split_ratio: float = 0.8
    strategy: str = "overall"
    precision: str = "f32"
    weight_decay: float = 0.01
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.precision not in ("f32", "f64"):
            raise ValueError(f"unknown precision {self.precision!r}")
        if not (0.0 < self.split_ratio < 1.0):
            raise ValueError(f"split_ratio must be in (0,1), got {self.split_ratio}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        ModelConfig(**self._model_fields())  # validates the model-side ranges

    def _model_fields(self) -> dict[str, Any]:
        return {
            "d": self.d,
            "layers": self.layers,
            "beta": self.beta,
            "comm_edge_mode": self.comm_edge_mode,
            "init_mode": self.init_mode,
            "expansion": self.expansion,
            "leaky_slope": self.leaky_slope,
        }

    def model_config(self) -> ModelConfig:
        return ModelConfig(**self._model_fields())

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["adam_betas"] = list(self.adam_betas)
        return d

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        kwargs = {k: v for k, v in doc.items() if k in known}
        if "adam_betas" in kwargs:
            kwargs["adam_betas"] = tuple(kwargs["adam_betas"])
        return cls(**kwargs)

    @classmethod
    def from_schema(cls, schema: Schema, overrides: Mapping[str, Any] | None = None) -> "TrainConfig":
        doc: dict[str, Any] = {}
        renames = {"L": "layers"}
        for section in (schema.model, schema.training):
            for k, v in section.items():
                doc[renames.get(k, k)] = v
        for k, v in (overrides or {}).items():
            if v is not None:
                doc[renames.get(k, k)] = v
        return cls.from_dict(doc)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


class Model:
    """Trunk + heads + cached normalized adjacency, bound to one schema."""

    def __init__(self, schema: Schema, config: TrainConfig):
        ng.set_precision(config.precision)
        self.schema = schema
        self.config = config
        self.params = ModelParams(schema.graph, config.model_config(), config.seed)
        self.heads = HeadParams(schema.subtypes, config.d, config.seed)
        self.a_tilde = ng.constant(normalize_adjacency(build_input_adjacency(schema.graph)))
        self.pool_idx = schema.pool_indices()

    def named_parameters(self) -> list[tuple[str, ng.Node]]:
        return list(self.params.named_parameters()) + list(self.heads.named_parameters())

    def forward(self, sample: VillageSample) -> ForwardTrace:
        return forward(sample, self.params, self.schema.graph, self.config.model_config(),
                       a_tilde=self.a_tilde)

    def predict(self, sample: VillageSample):
        trace = self.forward(sample)
        return predict_sample(trace.g_layers[-1], self.pool_idx, self.heads)


def build_model(schema: Schema, config: TrainConfig) -> Model:
    return Model(schema, config)


# ---------------------------------------------------------------------------
# AdamW


# Moment entries that keep receiving zero gradients decay exponentially and
# reach float32 subnormals after ~1k steps; subnormal arithmetic stalls the
# FPU (~2x slower epochs). Anything below this is meaningless at lr ~1e-4,
# so both update paths flush it to exact zero.
_MOMENT_FLOOR = 1e-24

try:  # fused kernel: one pass instead of ~13 numpy passes in the hot loop
    import numba

    @numba.njit(cache=True)
    def _fused_adamw(value, grad, m, v, b1, omb1, b2, omb2, decay, inv_s, eps, c, floor):
        for i in range(value.size):
            g = grad[i]
            mi = b1 * m[i] + omb1 * g
            if -floor < mi < floor:
                mi = 0.0
            m[i] = mi
            vi = b2 * v[i] + omb2 * (g * g)
            if vi < floor:
                vi = 0.0
            v[i] = vi
            value[i] = value[i] * decay - c * (mi / (np.sqrt(vi) * inv_s + eps))

except ImportError:  # pragma: no cover - numba is a declared dependency
    _fused_adamw = None


def adamw_step(
    value: np.ndarray,
    grad: np.ndarray,
    state: tuple[int, np.ndarray, np.ndarray],
    lr: float,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
    weight_decay: float = 0.01,
    scratch: np.ndarray | None = None,
) -> tuple[int, np.ndarray, np.ndarray]:
    """One decoupled-weight-decay Adam update, applied to `value` in place.

    Returns the advanced state (step count, first moment, second moment).
    The fused kernel and the numpy fallback implement the same formula in
    the same operation order; they agree to the last rounding (the JIT may
    contract a multiply-add), and each path is individually deterministic.
    """
    t, m, v = state
    t += 1
    b1, b2 = betas
    dt = value.dtype.type
    # scalars pre-cast to the value dtype so both paths round identically
    b1c, omb1 = dt(b1), dt(1.0 - b1)
    b2c, omb2 = dt(b2), dt(1.0 - b2)
    decay = dt(1.0 - lr * weight_decay)
    inv_s = dt(1.0 / np.sqrt(1.0 - b2 ** t))
    epsc = dt(eps)
    c = dt(lr / (1.0 - b1 ** t))
    floor = dt(_MOMENT_FLOOR)
    if (
        _fused_adamw is not None
        and value.flags.c_contiguous
        and grad.flags.c_contiguous
        and grad.dtype == value.dtype
    ):
        _fused_adamw(
            value.ravel(), grad.ravel(), m.ravel(), v.ravel(),
            b1c, omb1, b2c, omb2, decay, inv_s, epsc, c, floor,
        )
        return t, m, v
    if scratch is None:
        scratch = np.empty_like(value)
    np.multiply(m, b1c, out=m)
    np.multiply(grad, omb1, out=scratch)
    np.add(m, scratch, out=m)
    m[np.abs(m) < floor] = 0.0
    np.multiply(v, b2c, out=v)
    np.multiply(grad, grad, out=scratch)
    np.multiply(scratch, omb2, out=scratch)
    np.add(v, scratch, out=v)
    v[v < floor] = 0.0
    np.multiply(value, decay, out=value)
    np.sqrt(v, out=scratch)
    np.multiply(scratch, inv_s, out=scratch)
    np.add(scratch, epsc, out=scratch)
    np.divide(m, scratch, out=scratch)
    np.multiply(scratch, c, out=scratch)
    np.subtract(value, scratch, out=value)
    return t, m, v


class AdamW:
    def __init__(self, named_params: Sequence[tuple[str, ng.Node]], lr: float,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.01):
        self.named_params = list(named_params)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.state: dict[str, tuple[int, np.ndarray, np.ndarray]] = {
            name: (0, np.zeros_like(p.value), np.zeros_like(p.value))
            for name, p in self.named_params
        }
        self._scratch = {name: np.empty_like(p.value) for name, p in self.named_params}

    def step(self) -> None:
        for name, p in self.named_params:
            if p.grad is None:
                continue
            self.state[name] = adamw_step(
                p.value, p.grad, self.state[name],
                self.lr, self.betas, self.eps, self.weight_decay,
                scratch=self._scratch[name],
            )


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainResult:
    model: Model
    loss_curve: list[float]
    checkpoint_path: Path | None = None


def train(
    dataset: Dataset,
    config: TrainConfig,
    schema: Schema,
    subtype_keys: Sequence[str] | None = None,
    out_dir: str | Path | None = None,
    epoch_callback=None,
) -> TrainResult:
    """Train one model on the given (already split) samples.

    `subtype_keys` restricts the loss to a subset of heads (group/split
    strategies); all heads always exist so checkpoints share one format.
    `epoch_callback(epoch_index, model, mean_loss)` runs after each epoch;
    a truthy return stops training early.
    """
    if len(dataset) == 0:
        raise ValueError("train: dataset is empty")
    keys = tuple(subtype_keys) if subtype_keys else schema.subtype_keys()
    model = build_model(schema, config)
    named = model.named_parameters()
    params = [p for _, p in named]
    opt = AdamW(named, lr=config.learning_rate, betas=config.adam_betas,
                eps=config.adam_eps, weight_decay=config.weight_decay)
    shuffle_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 2]))

    loss_curve: list[float] = []
    for _ in range(config.epochs):
        order = shuffle_rng.permutation(len(dataset))
        epoch_loss = 0.0
        for i in order:
            sample = dataset.samples[i]
            trace = model.forward(sample)
            pooled = relation_pool(trace.g_layers[-1], {k: model.pool_idx[k] for k in keys})
            logits = {k: classify(pooled[k], model.heads.heads[k])[0] for k in keys}
            total, _ = joint_loss(logits, sample.labels, keys)
            loss_value = float(total.value[0, 0])
            if not np.isfinite(loss_value):
                ng.backward(total, params)  # populate grads for the diagnostic
                raise TrainingDiverged(
                    f"non-finite loss at sample {sample.village_id!r}; "
                    f"first offending parameter group: {_first_nonfinite(named)}"
                )
            ng.backward(total, params)
            opt.step()
            epoch_loss += loss_value
        loss_curve.append(epoch_loss / len(dataset))
        if epoch_callback is not None and epoch_callback(len(loss_curve) - 1, model,
                                                         loss_curve[-1]):
            break

    checkpoint_path = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        checkpoint_path = out / "checkpoint.bin"
        save_checkpoint(model, checkpoint_path)
    return TrainResult(model=model, loss_curve=loss_curve, checkpoint_path=checkpoint_path)


def _first_nonfinite(named: Sequence[tuple[str, ng.Node]]) -> str:
    for name, p in named:
        if not np.isfinite(p.value).all():
            return name
        if p.grad is not None and not np.isfinite(p.grad).all():
            return name
    return "<none: loss only>"


# ---------------------------------------------------------------------------
# metrics


@dataclass
class MetricsReport:
    per_subtype: dict[str, dict[str, Any]]
    groups: dict[str, dict[str, float]]
    overall: dict[str, float]

    def to_dict(self) -> dict[str, Any]:
        return {
            "per_subtype": self.per_subtype,
            "groups": self.groups,
            "overall": self.overall,
        }


def _macro_f1(confusion: np.ndarray) -> float:
    scores = []
    for c in range(confusion.shape[0]):
        tp = confusion[c, c]
        fp = confusion[:, c].sum() - tp
        fn = confusion[c, :].sum() - tp
        denom = 2 * tp + fp + fn
        scores.append(2 * tp / denom if denom > 0 else 0.0)
    return float(np.mean(scores))


def _aggregate(per_subtype: dict[str, dict[str, Any]], schema: Schema) -> MetricsReport:
    groups = {}
    for g in GROUP_ORDER:
        member = [per_subtype[k] for k in schema.subtype_keys(g) if k in per_subtype]
        if member:
            groups[g] = {
                "accuracy": float(np.mean([m["accuracy"] for m in member])),
                "macro_f1": float(np.mean([m["macro_f1"] for m in member])),
            }
    overall = {
        "accuracy": float(np.mean([m["accuracy"] for m in per_subtype.values()])),
        "macro_f1": float(np.mean([m["macro_f1"] for m in per_subtype.values()])),
    }
    return MetricsReport(per_subtype=per_subtype, groups=groups, overall=overall)


def evaluate(model: Model, dataset: Dataset, subtype_keys: Sequence[str] | None = None) -> MetricsReport:
    """Per-subtype accuracy/macro-F1 with confusion matrices, plus group and
    overall means. Pure function of (model, dataset)."""
    keys = tuple(subtype_keys) if subtype_keys else model.schema.subtype_keys()
    confusions = {
        k: np.zeros((model.schema.subtype(k).num_classes,) * 2, dtype=np.int64) for k in keys
    }
    for sample in dataset.samples:
        trace = model.forward(sample)
        g_final = trace.g_layers[-1]
        for k in keys:
            pooled = relation_pool(g_final, {k: model.pool_idx[k]})[k]
            _, pred = classify(pooled, model.heads.heads[k])
            confusions[k][sample.labels[k], pred] += 1
    per_subtype = {}
    for k in keys:
        conf = confusions[k]
        total = conf.sum()
        per_subtype[k] = {
            "accuracy": float(np.trace(conf) / total) if total else 0.0,
            "macro_f1": _macro_f1(conf),
            "confusion": conf.tolist(),
        }
    return _aggregate(per_subtype, model.schema)


def merge_reports(reports: Sequence[MetricsReport], schema: Schema) -> MetricsReport:
    per_subtype: dict[str, dict[str, Any]] = {}
    for r in reports:
        per_subtype.update(r.per_subtype)
    ordered = {k: per_subtype[k] for k in schema.subtype_keys() if k in per_subtype}
    return _aggregate(ordered, schema)


# ---------------------------------------------------------------------------
# training strategies


def strategy_units(schema: Schema, strategy: str) -> list[tuple[str, tuple[str, ...]]]:
    """The (unit name, subtype keys) pairs a strategy trains."""
    if strategy == "overall":
        return [("overall", schema.subtype_keys())]
    if strategy == "group":
        return [(g, schema.subtype_keys(g)) for g in GROUP_ORDER]
    if strategy == "split":
        return [(k, (k,)) for k in schema.subtype_keys()]
    raise ValueError(f"unknown strategy {strategy!r}")


def train_strategy(
    train_ds: Dataset,
    test_ds: Dataset,
    config: TrainConfig,
    schema: Schema,
) -> tuple[MetricsReport, dict[str, list[float]]]:
    """Train every unit of config.strategy on the same split; returns the
    merged test report and per-unit loss curves."""
    reports, curves = [], {}
    for unit, keys in strategy_units(schema, config.strategy):
        result = train(train_ds, config, schema, subtype_keys=keys)
        reports.append(evaluate(result.model, test_ds, subtype_keys=keys))
        curves[unit] = result.loss_curve
    return merge_reports(reports, schema), curves


def run_strategy(
    dataset: Dataset,
    config: TrainConfig,
    schema: Schema,
    strategies: Sequence[str] = STRATEGIES,
) -> dict[str, Any]:
    """Comparative table across training strategies on identical splits."""
    train_ds, test_ds = split_dataset(dataset, config.split_ratio, config.seed, schema)
    rows: dict[str, Any] = {}
    for strategy in strategies:
        cfg = replace(config, strategy=strategy)
        report, _ = train_strategy(train_ds, test_ds, cfg, schema)
        rows[strategy] = {
            **{g: report.groups.get(g, {}) for g in GROUP_ORDER},
            "average": report.overall,
            "per_subtype": {k: {kk: vv for kk, vv in m.items() if kk != "confusion"}
                            for k, m in report.per_subtype.items()},
        }
    return rows


# ---------------------------------------------------------------------------
# ablation grid

GRID_CELLS: dict[str, list[tuple[str, dict[str, Any]]]] = {
    "beta": [(f"beta={b:.1f}", {"beta": round(b, 1)}) for b in np.arange(0.1, 0.95, 0.1)],
    "edges": [("edges=gat", {"comm_edge_mode": "gat"}), ("edges=gcn", {"comm_edge_mode": "gcn"})],
    "init": [("init=random", {"init_mode": "random"}), ("init=mean", {"init_mode": "mean"})],
    "fc": [("expansion=affine", {"expansion": "affine"}), ("expansion=tile", {"expansion": "tile"})],
    "strategy": [(f"strategy={s}", {"strategy": s}) for s in STRATEGIES],
}
PAPER_GRIDS = ("beta", "edges", "init", "fc")


def _run_cell(args) -> dict[str, Any]:
    grid, cell, overrides, train_ds, test_ds, config, schema = args
    cfg = replace(config, **overrides)
    report, _ = train_strategy(train_ds, test_ds, cfg, schema)
    return {
        "grid": grid,
        "cell": cell,
        "config_hash": cfg.config_hash(),
        "config": cfg.to_dict(),
        "accuracy": report.overall["accuracy"],
        "macro_f1": report.overall["macro_f1"],
        "groups": report.groups,
    }


def run_ablation(
    dataset: Dataset,
    config: TrainConfig,
    schema: Schema,
    grids: Sequence[str],
    threads: int | None = None,
) -> list[dict[str, Any]]:
    """Train and evaluate every grid cell on a shared seed and split.

    Each row carries the exact resolved config and its hash. Cells are
    independent; `threads` > 1 fans them out across processes.
    """
    for g in grids:
        if g not in GRID_CELLS:
            raise ValueError(f"unknown grid {g!r}; expected one of {sorted(GRID_CELLS)}")
    train_ds, test_ds = split_dataset(dataset, config.split_ratio, config.seed, schema)
    jobs = [
        (grid, cell, overrides, train_ds, test_ds, config, schema)
        for grid in grids
        for cell, overrides in GRID_CELLS[grid]
    ]
    threads = threads or int(os.environ.get("HGNN_THREADS", "0")) or (os.cpu_count() or 1)
    threads = max(1, min(threads, len(jobs)))
    if threads == 1:
        return [_run_cell(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(_run_cell, jobs))


def ablation_csv(rows: Sequence[Mapping[str, Any]], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["grid", "cell", "config_hash", "accuracy", "macro_f1"])
        for r in rows:
            writer.writerow([r["grid"], r["cell"], r["config_hash"],
                             f"{r['accuracy']:.6f}", f"{r['macro_f1']:.6f}"])


def metrics_csv(report: MetricsReport, path: str | Path) -> None:
    """Per-subtype metrics grid with group and overall summary rows."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row", "accuracy", "macro_f1"])
        for key, m in report.per_subtype.items():
            writer.writerow([key, f"{m['accuracy']:.6f}", f"{m['macro_f1']:.6f}"])
        for g, m in report.groups.items():
            writer.writerow([f"group_{g}", f"{m['accuracy']:.6f}", f"{m['macro_f1']:.6f}"])
        writer.writerow(["overall", f"{report.overall['accuracy']:.6f}",
                         f"{report.overall['macro_f1']:.6f}"])


def strategy_csv(rows: Mapping[str, Any], path: str | Path) -> None:
    """Strategy comparison grid: one row per strategy, group + average columns."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["strategy"]
        for g in (*GROUP_ORDER, "average"):
            header += [f"{g}_accuracy", f"{g}_macro_f1"]
        writer.writerow(header)
        for strategy, row in rows.items():
            out = [strategy]
            for g in (*GROUP_ORDER, "average"):
                cell = row.get(g, {})
                out += [f"{cell.get('accuracy', float('nan')):.6f}",
                        f"{cell.get('macro_f1', float('nan')):.6f}"]
            writer.writerow(out)


# ---------------------------------------------------------------------------
# attention export


def export_attention(model: Model, dataset: Dataset, out_dir: str | Path) -> list[Path]:
    """Mean attention over the evaluation set, one CSV per layer."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sums: list[np.ndarray] | None = None
    for sample in dataset.samples:
        trace = model.forward(sample)
        mats = [a.value for a in trace.attn]
        if sums is None:
            sums = [m.astype(np.float64).copy() for m in mats]
        else:
            for acc, m in zip(sums, mats):
                acc += m
    assert sums is not None, "export_attention: empty dataset"
    paths = []
    for layer, acc in enumerate(sums, start=1):
        mean = acc / len(dataset)
        path = out / f"attention_layer{layer}.csv"
        path.write_text(attention_csv(mean, model.schema.graph.comm_categories))
        paths.append(path)
    return paths


# ---------------------------------------------------------------------------
# checkpoint format: HGNNCKPT | u32 version | u32 len + config JSON |
#                    u32 count | per tensor: u16 len + name, u32 rows,
#                    u32 cols, rows*cols float32 (LE)


def save_checkpoint(model: Model, path: str | Path) -> None:
    config_blob = json.dumps(model.config.to_dict(), sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<I", SCHEMA_VERSION))
        fh.write(struct.pack("<I", len(config_blob)))
        fh.write(config_blob)
        named = model.named_parameters()
        fh.write(struct.pack("<I", len(named)))
        for name, p in named:
            encoded = name.encode()
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            rows, cols = p.value.shape
            fh.write(struct.pack("<II", rows, cols))
            fh.write(np.ascontiguousarray(p.value, dtype="<f4").tobytes())


def load_checkpoint(path: str | Path, schema: Schema) -> Model:
    raw = Path(path).read_bytes()
    if raw[: len(CKPT_MAGIC)] != CKPT_MAGIC:
        raise CheckpointError(f"{path}: bad magic {raw[:8]!r}")
    off = len(CKPT_MAGIC)
    version, cfg_len = struct.unpack_from("<II", raw, off)
    off += 8
    if version != SCHEMA_VERSION:
        raise CheckpointError(f"{path}: schema_version {version}, expected {SCHEMA_VERSION}")
    config = TrainConfig.from_dict(json.loads(raw[off : off + cfg_len].decode()))
    off += cfg_len
    (count,) = struct.unpack_from("<I", raw, off)
    off += 4
    model = build_model(schema, config)
    named = model.named_parameters()
    if count != len(named):
        raise CheckpointError(f"{path}: holds {count} tensors, registry has {len(named)}")
    for name, p in named:
        (name_len,) = struct.unpack_from("<H", raw, off)
        off += 2
        stored = raw[off : off + name_len].decode()
        off += name_len
        if stored != name:
            raise CheckpointError(f"{path}: tensor {stored!r} does not match registry {name!r}")
        rows, cols = struct.unpack_from("<II", raw, off)
        off += 8
        if (rows, cols) != p.value.shape:
            raise CheckpointError(
                f"{path}: {name} has shape {(rows, cols)}, registry expects {p.value.shape}"
            )
        n = rows * cols
        data = np.frombuffer(raw, dtype="<f4", count=n, offset=off).reshape(rows, cols)
        off += 4 * n
        p.value = data.astype(p.value.dtype)
    if off != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - off} trailing bytes")
    return model
