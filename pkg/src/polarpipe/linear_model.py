"""Hashed n-gram featurizer and weighted-BCE linear classifier.

Features are unigram/bigram counts hashed with 64-bit FNV-1a into a
power-of-two space and L2-normalized. The classifier is one logistic output
per label, trained with plain SGD: label smoothing, per-label positive
weights (or per-example class weights on the binary task), gradient
accumulation, global-norm clipping, linear warmup with cosine decay, and
early stopping on validation macro-F1 at threshold 0.5. Weight decay is
decoupled: the penalty never passes through the gradient clip.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _kernels as kernels
from .corpus import DataError, Dataset, Instance, LabelSchema
from .metrics import binary_two_class_counts, confusion, macro_f1
from .probs import ProbabilityMatrix
from .weighting import ClassWeights, PosWeights, class_weights, pos_weights

_MODEL_FORMAT = "polarpipe-model"
_MODEL_VERSION = 1
_PROB_FLOOR = 1e-15  # keeps predict_proba inside the open interval (0, 1)


@dataclass(frozen=True)
class FeaturizerConfig:
    hash_dim: int = 2**18
    ngram_orders: tuple[int, ...] = (1, 2)
    tf_mode: str = "count"
    l2_normalize: bool = True

    def __post_init__(self):
        if self.hash_dim < 2**10 or self.hash_dim & (self.hash_dim - 1):
            raise DataError(f"hash_dim must be a power of two >= 1024, got {self.hash_dim}")
        orders = tuple(sorted(set(self.ngram_orders)))
        if not orders or any(o not in (1, 2) for o in orders):
            raise DataError(f"ngram_orders must be a non-empty subset of {{1, 2}}, got {self.ngram_orders}")
        object.__setattr__(self, "ngram_orders", orders)
        if self.tf_mode not in ("binary", "count"):
            raise DataError(f"tf_mode must be 'binary' or 'count', got {self.tf_mode!r}")


@dataclass(frozen=True)
class SparseVector:
    """One featurized text: strictly increasing indices, positive values."""

    indices: np.ndarray  # int64
    values: np.ndarray  # float64
    dim: int

    def __post_init__(self):
        if self.indices.shape != self.values.shape:
            raise DataError("indices and values lengths differ")
        if self.indices.size:
            if int(self.indices[-1]) >= self.dim or int(self.indices[0]) < 0:
                raise DataError("feature index out of range")
            if np.any(np.diff(self.indices) <= 0):
                raise DataError("indices must be strictly increasing")


@dataclass(frozen=True)
class FeatureMatrix:
    """Row-compressed stack of sparse vectors (int64 indptr/indices, float64 data)."""

    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    n_features: int

    @property
    def n_rows(self) -> int:
        return self.indptr.shape[0] - 1

    def take(self, rows: np.ndarray) -> "FeatureMatrix":
        """Sub-matrix with the given rows, in the given order."""
        rows = np.asarray(rows, dtype=np.int64)
        lengths = self.indptr[rows + 1] - self.indptr[rows]
        indptr = np.zeros(len(rows) + 1, dtype=np.int64)
        np.cumsum(lengths, out=indptr[1:])
        indices = np.empty(int(indptr[-1]), dtype=np.int64)
        data = np.empty(int(indptr[-1]), dtype=np.float64)
        for k, r in enumerate(rows):
            lo, hi = self.indptr[r], self.indptr[r + 1]
            indices[indptr[k] : indptr[k + 1]] = self.indices[lo:hi]
            data[indptr[k] : indptr[k + 1]] = self.data[lo:hi]
        return FeatureMatrix(indptr=indptr, indices=indices, data=data, n_features=self.n_features)


def featurize(text: str, cfg: FeaturizerConfig | None = None) -> SparseVector:
    """Hash a preprocessed text into a sparse feature vector."""
    if cfg is None:
        cfg = FeaturizerConfig()
    tokens = text.split()
    raw = kernels.hash_ngrams(
        tokens, 1 in cfg.ngram_orders, 2 in cfg.ngram_orders, cfg.hash_dim
    )
    if raw.size == 0:
        return SparseVector(
            indices=np.empty(0, dtype=np.int64),
            values=np.empty(0, dtype=np.float64),
            dim=cfg.hash_dim,
        )
    indices, counts = np.unique(raw, return_counts=True)
    if cfg.tf_mode == "binary":
        values = np.ones_like(counts, dtype=np.float64)
    else:
        values = counts.astype(np.float64)
    if cfg.l2_normalize:
        values = values / np.sqrt(np.sum(values * values))
    return SparseVector(indices=indices, values=values, dim=cfg.hash_dim)


def featurize_all(texts: Sequence[str], cfg: FeaturizerConfig | None = None) -> FeatureMatrix:
    """Featurize a batch of texts into one row-compressed matrix."""
    if cfg is None:
        cfg = FeaturizerConfig()
    vectors = [featurize(t, cfg) for t in texts]
    indptr = np.zeros(len(vectors) + 1, dtype=np.int64)
    np.cumsum([v.indices.size for v in vectors], out=indptr[1:])
    if vectors:
        indices = np.concatenate([v.indices for v in vectors])
        data = np.concatenate([v.values for v in vectors])
    else:
        indices = np.empty(0, dtype=np.int64)
        data = np.empty(0, dtype=np.float64)
    return FeatureMatrix(
        indptr=indptr,
        indices=indices.astype(np.int64),
        data=data.astype(np.float64),
        n_features=cfg.hash_dim,
    )


@dataclass(frozen=True)
class LinearModel:
    weights: np.ndarray  # (hash_dim, n_labels) float64
    bias: np.ndarray  # (n_labels,) float64
    featurizer: FeaturizerConfig
    schema: LabelSchema

    def __post_init__(self):
        expected = (self.featurizer.hash_dim, self.schema.n_labels)
        if self.weights.shape != expected:
            raise DataError(f"weights shape {self.weights.shape}, expected {expected}")
        if self.bias.shape != (self.schema.n_labels,):
            raise DataError(f"bias shape {self.bias.shape}, expected ({self.schema.n_labels},)")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise DataError("model parameters must be finite")


def zero_model(fcfg: FeaturizerConfig, schema: LabelSchema) -> LinearModel:
    return LinearModel(
        weights=np.zeros((fcfg.hash_dim, schema.n_labels), dtype=np.float64),
        bias=np.zeros(schema.n_labels, dtype=np.float64),
        featurizer=fcfg,
        schema=schema,
    )


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 2e-2
    weight_decay: float = 0.01
    max_epochs: int = 10
    batch_size: int = 32
    accumulation_steps: int = 2
    warmup_ratio: float = 0.1
    warmup_steps: int | None = None  # overrides warmup_ratio when set
    max_grad_norm: float = 1.0
    label_smoothing: float | None = None  # None resolves to 0.1 binary / 0.0 multi-label
    patience: int = 3
    seed: int = 42

    def __post_init__(self):
        if self.label_smoothing is not None and not 0.0 <= self.label_smoothing < 1.0:
            raise DataError("label_smoothing must lie in [0, 1)")
        if self.patience < 1:
            raise DataError("patience must be >= 1")
        if self.max_grad_norm <= 0:
            raise DataError("max_grad_norm must be positive")
        if self.max_epochs < 0 or self.batch_size < 1 or self.accumulation_steps < 1:
            raise DataError("bad epoch/batch configuration")
        if self.warmup_steps is not None and self.warmup_steps < 0:
            raise DataError("warmup_steps must be >= 0")
        if not 0.0 <= self.warmup_ratio <= 1.0:
            raise DataError("warmup_ratio must lie in [0, 1]")

    def resolve_smoothing(self, schema: LabelSchema) -> float:
        if self.label_smoothing is not None:
            return self.label_smoothing
        return 0.1 if schema.is_binary else 0.0


@dataclass(frozen=True)
class TrainReport:
    epoch_train_loss: tuple[float, ...]
    epoch_val_macro_f1: tuple[float, ...]
    best_epoch: int  # 1-based; 0 when no epoch ran
    stopped_early: bool
    weighting_mode: str
    weights_used: ClassWeights | PosWeights | None


def lr_at_step(step: int, total_steps: int, warmup_steps: int, learning_rate: float) -> float:
    """Learning rate at 1-based optimizer step: linear warmup, then cosine decay."""
    if step <= warmup_steps:
        return learning_rate * step / warmup_steps
    if total_steps == warmup_steps:
        return learning_rate
    progress = (step - warmup_steps) / (total_steps - warmup_steps)
    return learning_rate * 0.5 * (1.0 + math.cos(math.pi * progress))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _softplus(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def _loss_and_grad_csr(
    fm: FeatureMatrix,
    y: np.ndarray,
    weights: np.ndarray,
    bias: np.ndarray,
    pw: np.ndarray,
    smoothing: float,
    weight_decay: float,
    sample_weights: np.ndarray | None,
):
    """Full objective and exact gradient on a featurized batch.

    Elementwise loss is pw*y'*softplus(-z) + (1-y')*softplus(z) with smoothed
    target y' = y(1-eps) + eps/2, averaged over batch x labels; the decay
    penalty weight_decay * ||W||^2 / 2 is added on top (bias excluded).
    """
    n, n_labels = y.shape
    z = kernels.csr_logits(fm.indptr, fm.indices, fm.data, weights, bias)
    y_s = y * (1.0 - smoothing) + smoothing / 2.0
    elem = pw * y_s * _softplus(-z) + (1.0 - y_s) * _softplus(z)
    s = _sigmoid(z)
    dz = s * (1.0 - y_s + pw * y_s) - pw * y_s
    if sample_weights is not None:
        elem = elem * sample_weights[:, None]
        dz = dz * sample_weights[:, None]
    scale = 1.0 / (n * n_labels)
    loss = float(np.sum(elem) * scale)
    dz = dz * scale
    grad_w = np.zeros_like(weights)
    kernels.csr_grad_weights(fm.indptr, fm.indices, fm.data, dz, grad_w)
    grad_b = dz.sum(axis=0)
    if weight_decay:
        loss += weight_decay * 0.5 * float(np.sum(weights * weights))
        grad_w += weight_decay * weights
    return loss, grad_w, grad_b


def loss_and_grad(
    model: LinearModel,
    batch: Sequence[Instance],
    pw: PosWeights | None = None,
    smoothing: float = 0.0,
    weight_decay: float = 0.0,
    sample_weights: Sequence[float] | None = None,
):
    """Weighted smoothed BCE over a batch, with its exact gradient.

    Returns ``(loss, grad_weights, grad_bias)``. The positive weights default
    to all ones; ``sample_weights`` multiplies whole examples (the binary
    class-weight path).
    """
    if not batch:
        raise DataError("loss_and_grad needs a non-empty batch")
    fm = featurize_all([inst.text for inst in batch], model.featurizer)
    y = np.array([inst.labels for inst in batch], dtype=np.float64)
    if y.shape[1] != model.schema.n_labels:
        raise DataError("batch labels do not match model schema")
    pw_arr = (
        np.ones(model.schema.n_labels, dtype=np.float64)
        if pw is None
        else np.asarray(pw.weights, dtype=np.float64)
    )
    if pw_arr.shape != (model.schema.n_labels,):
        raise DataError(f"expected {model.schema.n_labels} positive weights")
    sw = None if sample_weights is None else np.asarray(sample_weights, dtype=np.float64)
    if sw is not None and sw.shape != (len(batch),):
        raise DataError("sample_weights length must match the batch")
    return _loss_and_grad_csr(
        fm, y, model.weights, model.bias, pw_arr, smoothing, weight_decay, sw
    )


def _val_macro_f1_at_half(probs: np.ndarray, gold: np.ndarray, schema: LabelSchema) -> float:
    pred = (probs >= 0.5).astype(np.int64)
    if schema.is_binary:
        counts = binary_two_class_counts(pred, gold, schema.names[0])
    else:
        counts = confusion(pred, gold, schema.names)
    return macro_f1(counts)


def train(
    train_ds: Dataset,
    val_ds: Dataset,
    tcfg: TrainConfig | None = None,
    fcfg: FeaturizerConfig | None = None,
    weighting_mode: str = "balanced",
) -> tuple[LinearModel, TrainReport]:
    """SGD training with early stopping on validation macro-F1 at 0.5.

    The returned model carries the best epoch's parameters. Weighting mode
    ``balanced`` uses per-example class weights on the binary task and
    per-label positive weights otherwise; ``none`` trains unweighted.
    """
    if tcfg is None:
        tcfg = TrainConfig()
    if fcfg is None:
        fcfg = FeaturizerConfig()
    if weighting_mode not in ("none", "balanced"):
        raise DataError(f"weighting_mode must be 'none' or 'balanced', got {weighting_mode!r}")
    if len(train_ds) == 0:
        raise DataError("training set is empty")
    if len(val_ds) == 0:
        raise DataError("validation set is empty")
    if train_ds.schema.names != val_ds.schema.names:
        raise DataError("train and validation schemas differ")

    schema = train_ds.schema
    n = len(train_ds)
    n_labels = schema.n_labels
    smoothing = tcfg.resolve_smoothing(schema)

    fm = featurize_all([inst.text for inst in train_ds.instances], fcfg)
    y = np.array([inst.labels for inst in train_ds.instances], dtype=np.float64)
    fm_val = featurize_all([inst.text for inst in val_ds.instances], fcfg)
    y_val = np.array([inst.labels for inst in val_ds.instances], dtype=np.int64)

    pw_arr = np.ones(n_labels, dtype=np.float64)
    sample_w = None
    weights_used: ClassWeights | PosWeights | None = None
    if weighting_mode == "balanced":
        if schema.is_binary:
            cw = class_weights(train_ds)
            weights_used = cw
            sample_w = cw.per_example(y[:, 0])
        else:
            pws = pos_weights(train_ds)
            weights_used = pws
            pw_arr = np.asarray(pws.weights, dtype=np.float64)

    W = np.zeros((fcfg.hash_dim, n_labels), dtype=np.float64)
    b = np.zeros(n_labels, dtype=np.float64)

    batches_per_epoch = max(1, -(-n // tcfg.batch_size))
    updates_per_epoch = -(-batches_per_epoch // tcfg.accumulation_steps)
    total_updates = tcfg.max_epochs * updates_per_epoch
    if tcfg.warmup_steps is not None:
        warmup = min(tcfg.warmup_steps, total_updates)
    else:
        warmup = int(round(tcfg.warmup_ratio * total_updates))

    rng = np.random.RandomState(tcfg.seed)
    losses: list[float] = []
    val_scores: list[float] = []
    best_epoch = 0
    best_score = -1.0
    best_W = W.copy()
    best_b = b.copy()
    stopped_early = False
    step = 0

    for epoch in range(1, tcfg.max_epochs + 1):
        order = rng.permutation(n)
        epoch_losses: list[float] = []
        start = 0
        while start < n:
            # one optimizer update: accumulate up to accumulation_steps micro-batches
            acc_w = np.zeros_like(W)
            acc_b = np.zeros_like(b)
            acc_loss = 0.0
            n_micro = 0
            while n_micro < tcfg.accumulation_steps and start < n:
                rows = order[start : start + tcfg.batch_size]
                start += tcfg.batch_size
                sw = None if sample_w is None else sample_w[rows]
                loss, gw, gb = _loss_and_grad_csr(
                    fm.take(rows), y[rows], W, b, pw_arr, smoothing, 0.0, sw
                )
                acc_w += gw
                acc_b += gb
                acc_loss += loss
                n_micro += 1
            acc_w /= n_micro
            acc_b /= n_micro
            epoch_losses.append(acc_loss / n_micro)
            norm = math.sqrt(float(np.sum(acc_w * acc_w)) + float(np.sum(acc_b * acc_b)))
            if norm > tcfg.max_grad_norm:
                clip = tcfg.max_grad_norm / norm
                acc_w *= clip
                acc_b *= clip
            step += 1
            lr = lr_at_step(step, total_updates, warmup, tcfg.learning_rate)
            if tcfg.weight_decay:
                W *= 1.0 - lr * tcfg.weight_decay
            W -= lr * acc_w
            b -= lr * acc_b

        # epoch train loss reported without the decay penalty; the data term
        # alone is what the curves are read for
        losses.append(float(np.mean(epoch_losses)))
        val_probs = _sigmoid(
            kernels.csr_logits(fm_val.indptr, fm_val.indices, fm_val.data, W, b)
        )
        score = _val_macro_f1_at_half(val_probs, y_val, schema)
        val_scores.append(score)
        if score > best_score:
            best_score = score
            best_epoch = epoch
            best_W = W.copy()
            best_b = b.copy()
        elif epoch - best_epoch >= tcfg.patience:
            stopped_early = True
            break

    model = LinearModel(weights=best_W, bias=best_b, featurizer=fcfg, schema=schema)
    report = TrainReport(
        epoch_train_loss=tuple(losses),
        epoch_val_macro_f1=tuple(val_scores),
        best_epoch=best_epoch,
        stopped_early=stopped_early,
        weighting_mode=weighting_mode,
        weights_used=weights_used,
    )
    return model, report


def predict_proba(model: LinearModel, ds: Dataset) -> ProbabilityMatrix:
    """Sigmoid probabilities for every instance; values stay inside (0, 1)."""
    if ds.schema.names != model.schema.names:
        raise DataError("dataset schema does not match model schema")
    fm = featurize_all([inst.text for inst in ds.instances], model.featurizer)
    z = kernels.csr_logits(fm.indptr, fm.indices, fm.data, model.weights, model.bias)
    probs = np.clip(_sigmoid(z), _PROB_FLOOR, 1.0 - _PROB_FLOOR)
    return ProbabilityMatrix(
        ids=tuple(ds.ids), label_names=model.schema.names, values=probs
    )


# ---------------------------------------------------------------------------
# Model file round-trip


def save_model(model: LinearModel, path: str | Path) -> None:
    """Write the model: one JSON header line, then raw little-endian weights."""
    header = {
        "format": _MODEL_FORMAT,
        "version": _MODEL_VERSION,
        "schema": list(model.schema.names),
        "featurizer": {
            "hash_dim": model.featurizer.hash_dim,
            "ngram_orders": list(model.featurizer.ngram_orders),
            "tf_mode": model.featurizer.tf_mode,
            "l2_normalize": model.featurizer.l2_normalize,
        },
        "shape": list(model.weights.shape),
    }
    with Path(path).open("wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        fh.write(np.ascontiguousarray(model.weights, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(model.bias, dtype="<f8").tobytes())


def load_model(path: str | Path) -> LinearModel:
    path = Path(path)
    with path.open("rb") as fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            raise DataError(f"{path}: not a model file") from None
        if header.get("format") != _MODEL_FORMAT:
            raise DataError(f"{path}: not a model file")
        if header.get("version") != _MODEL_VERSION:
            raise DataError(f"{path}: unsupported model version {header.get('version')!r}")
        d, n_labels = header["shape"]
        body = fh.read()
    expected = (d * n_labels + n_labels) * 8
    if len(body) != expected:
        raise DataError(f"{path}: expected {expected} payload bytes, found {len(body)}")
    weights = np.frombuffer(body[: d * n_labels * 8], dtype="<f8").reshape(d, n_labels)
    bias = np.frombuffer(body[d * n_labels * 8 :], dtype="<f8")
    fz = header["featurizer"]
    fcfg = FeaturizerConfig(
        hash_dim=fz["hash_dim"],
        ngram_orders=tuple(fz["ngram_orders"]),
        tf_mode=fz["tf_mode"],
        l2_normalize=fz["l2_normalize"],
    )
    schema = LabelSchema(names=tuple(header["schema"]))
    return LinearModel(
        weights=weights.astype(np.float64),
        bias=bias.astype(np.float64),
        featurizer=fcfg,
        schema=schema,
    )


def save_history(report: TrainReport, path: str | Path) -> None:
    """Tab-separated per-epoch curves: epoch, train loss, validation macro-F1."""
    lines = ["epoch\ttrain_loss\tval_macro_f1"]
    for i, (loss, score) in enumerate(
        zip(report.epoch_train_loss, report.epoch_val_macro_f1), start=1
    ):
        lines.append(f"{i}\t{loss:.10f}\t{score:.10f}")
    lines.append(f"# best_epoch\t{report.best_epoch}")
    lines.append(f"# stopped_early\t{str(report.stopped_early).lower()}")
    lines.append(f"# weighting_mode\t{report.weighting_mode}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
