"""Objective, optimizer, training loop, evaluation metrics and checkpoints."""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import InvalidInput, NumericalError
from .lifting import Mode
from .model import FUSION_MODES, TWaveNet
from .signal import WindowSet
from .tree import GateTree

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-12
MAGIC = b"TWVN"
CKPT_VERSION = 1


@dataclass
class TrainConfig:
    batch_size: int = 64
    lr: float = 3e-4
    lr_decay: float = 0.95
    max_epochs: int = 100
    lambda_reg: float = 0.1
    mode: str = "inn"
    fusion: str = "attention"
    seed: int = 0
    dropout: float = 0.5
    num_classes: int | None = None
    dtype: str = "float32"

    def __post_init__(self) -> None:
        if not self.lr > 0:
            raise InvalidInput("lr must be > 0")
        if not 0 < self.lr_decay <= 1:
            raise InvalidInput("lr_decay must lie in (0, 1]")
        if self.lambda_reg < 0:
            raise InvalidInput("lambda_reg must be >= 0")
        if self.batch_size < 1 or self.max_epochs < 0:
            raise InvalidInput("batch_size must be >= 1 and max_epochs >= 0")
        Mode(self.mode)
        if self.fusion not in FUSION_MODES:
            raise InvalidInput(f"fusion must be one of {FUSION_MODES}")

    @classmethod
    def from_dict(cls, d: dict) -> TrainConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InvalidInput(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> TrainConfig:
        return cls.from_dict(json.loads(text))


# -- objective -----------------------------------------------------------------
def regularizer(pairs: Sequence[tuple[Tensor, Tensor]]) -> Tensor | None:
    """Per-sample sum over split nodes of ||mean_t(x_j) - mean_t(c_j)||_2 over channels."""
    total = None
    for x_j, c_j in pairs:
        term = ad.l2norm(x_j.mean(axis=-1) - c_j.mean(axis=-1), axis=-1)
        total = term if total is None else total + term
    return total


def loss(probs: Tensor, labels, pairs: Sequence[tuple[Tensor, Tensor]] = (), lam: float = 0.1) -> Tensor:
    """Cross-entropy plus the mean-preservation penalty, averaged over the batch."""
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    single = probs.ndim == 1
    if single:
        probs = ad.reshape(probs, (1, -1))
    if labels.size != probs.shape[0]:
        raise InvalidInput("one label per sample required")
    picked = probs[np.arange(labels.size), labels]
    ce = -ad.log(ad.clip_min(picked, PROB_FLOOR))
    total = ce
    reg = regularizer(pairs)
    if reg is not None and lam:
        if single:
            reg = ad.reshape(reg, (-1,))
        total = total + reg * lam
    return total.mean()


# -- optimizer -----------------------------------------------------------------
@dataclass
class AdamState:
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """In-place bias-corrected Adam update of ``params``."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient for {name}")
    state.t += 1
    c1 = 1 - beta1**state.t
    c2 = 1 - beta2**state.t
    for name in sorted(params):
        g = grads.get(name)
        if g is None:
            continue
        p = params[name]
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        m *= beta1
        m += (1 - beta1) * g
        v *= beta2
        v += (1 - beta2) * g * g
        step = lr * (m / c1) / (np.sqrt(v / c2) + eps)
        p -= step.astype(p.dtype)


class Adam:
    def __init__(self, named_params: dict[str, Tensor], lr: float = 3e-4):
        self.params = named_params
        self.lr = lr
        self.state = AdamState()

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def step(self) -> None:
        arrays = {n: p.data for n, p in self.params.items()}
        grads = {n: p.grad for n, p in self.params.items() if p.grad is not None}
        adam_step(arrays, grads, self.state, self.lr)


# -- metrics -------------------------------------------------------------------
@dataclass
class EvalReport:
    accuracy: float
    f_weighted: float
    f_macro: float
    confusion: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "f_weighted": self.f_weighted,
            "f_macro": self.f_macro,
            "confusion": self.confusion.tolist(),
            "precision": self.precision.tolist(),
            "recall": self.recall.tolist(),
            "f1": self.f1.tolist(),
        }

    def format(self) -> str:
        lines = [
            f"accuracy   {self.accuracy:.4f}",
            f"f_weighted {self.f_weighted:.4f}",
            f"f_macro    {self.f_macro:.4f}",
            "confusion (rows = true, cols = predicted):",
        ]
        lines += ["  " + " ".join(f"{v:5d}" for v in row) for row in self.confusion]
        return "\n".join(lines)


def confusion_matrix(preds, labels, num_classes: int) -> np.ndarray:
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(labels, dtype=np.int64), np.asarray(preds, dtype=np.int64)), 1)
    return cm


def report_from_predictions(preds, labels, num_classes: int | None = None) -> EvalReport:
    preds = np.asarray(preds, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise InvalidInput("empty test set")
    if num_classes is None:
        num_classes = int(max(preds.max(), labels.max())) + 1
    cm = confusion_matrix(preds, labels, num_classes)
    tp = np.diag(cm).astype(np.float64)
    predicted = cm.sum(axis=0).astype(np.float64)
    support = cm.sum(axis=1).astype(np.float64)
    precision = np.divide(tp, predicted, out=np.zeros_like(tp), where=predicted > 0)
    recall = np.divide(tp, support, out=np.zeros_like(tp), where=support > 0)
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros_like(tp), where=denom > 0)
    weights = support / support.sum()
    return EvalReport(
        accuracy=float(tp.sum() / cm.sum()),
        f_weighted=float(np.sum(weights * f1)),
        f_macro=float(np.mean(f1)),
        confusion=cm,
        precision=precision,
        recall=recall,
        f1=f1,
    )


def predict_proba(model: TWaveNet, data: np.ndarray, batch_size: int = 256) -> np.ndarray:
    was_training = model.training
    model.eval()
    out = []
    try:
        with ad.no_grad():
            for i in range(0, data.shape[0], batch_size):
                probs, _ = model(data[i : i + batch_size].astype(model.dtype))
                out.append(probs.data)
    finally:
        model.train(was_training)
    return np.concatenate(out) if out else np.zeros((0, model.num_classes))


def evaluate(model: TWaveNet, test_set: WindowSet) -> EvalReport:
    if len(test_set) == 0:
        raise InvalidInput("empty test set")
    probs = predict_proba(model, test_set.data)
    return report_from_predictions(probs.argmax(axis=1), test_set.labels, model.num_classes)


# -- checkpoints ---------------------------------------------------------------
@dataclass
class ModelCheckpoint:
    tree: GateTree
    config: TrainConfig
    channels: int
    num_classes: int
    window_length: int
    epoch: int
    state: dict[str, np.ndarray]
    optimizer: AdamState = field(default_factory=AdamState)

    @classmethod
    def capture(cls, model: TWaveNet, config: TrainConfig, window_length: int, epoch: int, opt: Adam | None) -> ModelCheckpoint:
        opt_state = AdamState()
        if opt is not None:
            opt_state = AdamState(
                opt.state.t,
                {k: v.copy() for k, v in opt.state.m.items()},
                {k: v.copy() for k, v in opt.state.v.items()},
            )
        return cls(model.tree, config, model.channels, model.num_classes, window_length, epoch, model.state_dict(), opt_state)

    def build_model(self) -> TWaveNet:
        model = TWaveNet(
            self.tree,
            self.channels,
            self.num_classes,
            self.config.mode,
            self.config.fusion,
            self.config.seed,
            self.config.dropout,
            dtype=np.dtype(self.config.dtype),
        )
        model.load_state_dict(self.state)
        model.eval()
        return model

    def save(self, path: str | Path) -> None:
        blobs: list[tuple[str, np.ndarray]] = [(f"param.{k}", v) for k, v in sorted(self.state.items())]
        blobs += [(f"adam.m.{k}", v) for k, v in sorted(self.optimizer.m.items())]
        blobs += [(f"adam.v.{k}", v) for k, v in sorted(self.optimizer.v.items())]
        index, offset = [], 0
        for name, arr in blobs:
            index.append({"name": name, "shape": list(arr.shape), "offset": offset, "count": int(arr.size)})
            offset += int(arr.size) * 4
        meta = {
            "tree": json.loads(self.tree.to_json()),
            "config": asdict(self.config),
            "channels": self.channels,
            "num_classes": self.num_classes,
            "window_length": self.window_length,
            "epoch": self.epoch,
            "adam_t": self.optimizer.t,
            "blobs": index,
        }
        meta_bytes = json.dumps(meta, sort_keys=True).encode()
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<IQ", CKPT_VERSION, len(meta_bytes)))
            fh.write(meta_bytes)
            for _, arr in blobs:
                fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())

    @classmethod
    def load(cls, path: str | Path) -> ModelCheckpoint:
        raw = Path(path).read_bytes()
        if raw[:4] != MAGIC:
            raise InvalidInput(f"{path}: not a checkpoint (bad magic)")
        version, meta_len = struct.unpack_from("<IQ", raw, 4)
        if version != CKPT_VERSION:
            raise InvalidInput(f"{path}: unsupported checkpoint version {version}")
        start = 4 + struct.calcsize("<IQ")
        meta = json.loads(raw[start : start + meta_len])
        body = raw[start + meta_len :]
        state, m, v = {}, {}, {}
        for b in meta["blobs"]:
            arr = np.frombuffer(body, dtype="<f4", count=b["count"], offset=b["offset"]).reshape(b["shape"]).astype(np.float32)
            name = b["name"]
            if name.startswith("param."):
                state[name[6:]] = arr
            elif name.startswith("adam.m."):
                m[name[7:]] = arr
            elif name.startswith("adam.v."):
                v[name[7:]] = arr
        return cls(
            GateTree.from_json(json.dumps(meta["tree"])),
            TrainConfig.from_dict(meta["config"]),
            meta["channels"],
            meta["num_classes"],
            meta["window_length"],
            meta["epoch"],
            state,
            AdamState(meta["adam_t"], m, v),
        )


# -- training loop -------------------------------------------------------------
LOG_COLUMNS = ("epoch", "train_loss", "train_acc", "val_acc", "f_macro", "f_weighted", "lr")


def _num_classes(config: TrainConfig, *sets: WindowSet) -> int:
    if config.num_classes is not None:
        return config.num_classes
    return int(max(int(s.labels.max()) for s in sets if len(s))) + 1


def fit(
    train_set: WindowSet,
    val_set: WindowSet | None,
    tree: GateTree,
    config: TrainConfig,
    on_epoch: Callable[[dict], None] | None = None,
) -> tuple[ModelCheckpoint, list[dict]]:
    """Train a model on ``train_set`` and keep the best-validation checkpoint."""
    if len(train_set) == 0:
        raise InvalidInput("empty training set")
    if not train_set.labeled:
        raise InvalidInput("training windows must be labeled")
    n_len = train_set.length
    if n_len % 2**tree.height:
        raise InvalidInput(f"window length {n_len} is not divisible by 2^height = {2**tree.height} (tree height {tree.height})")
    val_set = val_set if val_set is not None and len(val_set) else None
    num_classes = _num_classes(config, train_set, *([val_set] if val_set else []))
    dtype = np.dtype(config.dtype)
    model = TWaveNet(tree, train_set.channels, num_classes, config.mode, config.fusion, config.seed, config.dropout, dtype)
    params = dict(model.named_parameters())
    opt = Adam(params, config.lr)
    rng = np.random.default_rng(config.seed)
    x_all = train_set.data.astype(dtype)
    y_all = train_set.labels
    history: list[dict] = []
    best = ModelCheckpoint.capture(model, config, n_len, 0, opt)
    best_acc = -1.0
    for epoch in range(1, config.max_epochs + 1):
        model.train()
        order = rng.permutation(len(train_set))
        loss_sum, correct = 0.0, 0
        for start in range(0, order.size, config.batch_size):
            idx = order[start : start + config.batch_size]
            probs, pairs = model(Tensor(x_all[idx]))
            batch_loss = loss(probs, y_all[idx], pairs, config.lambda_reg)
            opt.zero_grad()
            batch_loss.backward()
            opt.step()
            loss_sum += batch_loss.item() * idx.size
            correct += int(np.sum(probs.data.argmax(axis=1) == y_all[idx]))
        row = {
            "epoch": epoch,
            "train_loss": loss_sum / order.size,
            "train_acc": correct / order.size,
        }
        if val_set is not None:
            rep = evaluate(model, val_set)
            row.update(val_acc=rep.accuracy, f_macro=rep.f_macro, f_weighted=rep.f_weighted)
        else:
            row.update(val_acc=row["train_acc"], f_macro=float("nan"), f_weighted=float("nan"))
        row["lr"] = opt.lr
        history.append(row)
        if on_epoch is not None:
            on_epoch(row)
        log.info("epoch %d loss %.4f train_acc %.4f val_acc %.4f", epoch, row["train_loss"], row["train_acc"], row["val_acc"])
        if row["val_acc"] > best_acc:
            best_acc = row["val_acc"]
            best = ModelCheckpoint.capture(model, config, n_len, epoch, opt)
        opt.lr *= config.lr_decay
    return best, history


def write_log_csv(path: str | Path, history: list[dict]) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(LOG_COLUMNS) + "\n")
        for row in history:
            fh.write(",".join(repr(row[c]) if isinstance(row[c], float) else str(row[c]) for c in LOG_COLUMNS) + "\n")
