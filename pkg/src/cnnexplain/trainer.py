"""Plain mini-batch SGD for :class:`CnnModel`, with a finite-difference
gradient checker.

Parameters are addressed by name: ``embedding``, ``channels.K.filters``,
``dense.K.weights`` and ``dense.K.biases``. The pad row of the embedding is
frozen at zero and never receives gradient.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import log_softmax

from .errors import ForwardOverflowError, ModelError, TrainingDivergedError
from .model import CnnModel, ConvChannel, DenseLayer, forward

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Architecture:
    vocab: tuple
    embedding_dim: int = 50
    channels: tuple = ((1, 40), (2, 40), (3, 40))  # (kernel_size, n_filters)
    hidden: tuple = ()
    n_classes: int = 2
    hidden_activation: str = "relu"
    output_activation: str = "softmax"
    pad_length: int = 50
    pad_token_id: int = 0
    class_names: tuple = ()


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 10
    batch_size: int = 16
    seed: int = 0
    init_scale: float = 0.1
    loss: str = "cross_entropy"
    split: float = 0.8

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be non-negative")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if not 0.0 < self.split < 1.0:
            raise ValueError("split ratio must be in (0, 1)")
        if self.loss != "cross_entropy":
            raise ValueError(f"unsupported loss {self.loss!r}")


# -- parameter plumbing ------------------------------------------------------


def parameters(model: CnnModel) -> dict:
    params = {"embedding": model.embedding}
    for k, ch in enumerate(model.channels):
        params[f"channels.{k}.filters"] = ch.filters
    for k, layer in enumerate(model.dense_layers):
        params[f"dense.{k}.weights"] = layer.weights
        params[f"dense.{k}.biases"] = layer.biases
    return params


def with_parameters(model: CnnModel, params: dict) -> CnnModel:
    """Copy of ``model`` with parameter arrays taken from ``params``."""
    channels = tuple(
        ConvChannel(ch.kernel_size, params.get(f"channels.{k}.filters", ch.filters))
        for k, ch in enumerate(model.channels)
    )
    dense = tuple(
        DenseLayer(
            params.get(f"dense.{k}.weights", layer.weights),
            params.get(f"dense.{k}.biases", layer.biases),
            layer.activation,
        )
        for k, layer in enumerate(model.dense_layers)
    )
    return replace(
        model,
        embedding=params.get("embedding", model.embedding),
        channels=channels,
        dense_layers=dense,
    )


def init_model(arch: Architecture, seed: int = 0, init_scale: float = 0.1) -> CnnModel:
    """Weights uniform in [-init_scale, init_scale]; biases and pad row zero."""
    if init_scale < 0:
        raise ValueError("init_scale must be non-negative")
    sizes = [arch.embedding_dim, arch.n_classes, len(arch.vocab), *arch.hidden]
    sizes += [n for _, n in arch.channels] + [k for k, _ in arch.channels]
    if not arch.channels or min(sizes) < 1:
        raise ModelError(f"zero-size layer in architecture {arch}")
    rng = np.random.default_rng(seed)

    def uniform(*shape):
        return rng.uniform(-init_scale, init_scale, size=shape)

    emb = uniform(len(arch.vocab), arch.embedding_dim)
    emb[arch.pad_token_id] = 0.0
    channels = tuple(ConvChannel(k, uniform(n, k, arch.embedding_dim)) for k, n in arch.channels)
    widths = [sum(n for _, n in arch.channels), *arch.hidden, arch.n_classes]
    dense = []
    for k in range(len(widths) - 1):
        act = "identity" if k == len(widths) - 2 else arch.hidden_activation
        dense.append(DenseLayer(uniform(widths[k + 1], widths[k]), np.zeros(widths[k + 1]), act))
    return CnnModel(
        vocab=tuple(arch.vocab),
        embedding=emb,
        channels=channels,
        dense_layers=tuple(dense),
        output_activation=arch.output_activation,
        pad_length=arch.pad_length,
        pad_token_id=arch.pad_token_id,
        class_names=arch.class_names,
    )


# -- loss and gradients ------------------------------------------------------


def sample_loss(model: CnnModel, trace, label: int) -> float:
    z = trace.preactivations[-1]
    if model.output_activation == "softmax":
        return float(-log_softmax(z)[label])
    target = np.zeros_like(z)
    target[label] = 1.0
    # binary cross-entropy per unit: softplus(z) - t*z
    return float(np.sum(np.logaddexp(0.0, z) - target * z))


def _as_batch(batch):
    x, y = batch
    x = np.asarray(x)
    y = np.atleast_1d(np.asarray(y, dtype=np.int64))
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[0] == 0:
        raise ValueError("empty batch")
    if x.shape[0] != y.shape[0]:
        raise ValueError("token and label counts differ")
    return x, y


def batch_loss(model: CnnModel, batch) -> float:
    x, y = _as_batch(batch)
    return float(np.mean([sample_loss(model, forward(model, ids), lab) for ids, lab in zip(x, y)]))


def _accumulate(model, trace, label, grads):
    """Add one sample's loss gradient into ``grads``; returns the loss."""
    c = model.n_classes
    if not 0 <= label < c:
        raise ValueError(f"label {label} outside 0..{c - 1}")
    # softmax + CE and logistic + BCE share dL/dz = output - onehot
    delta = trace.output.copy()
    delta[label] -= 1.0
    layers = model.dense_layers
    for k in range(len(layers) - 1, -1, -1):
        grads[f"dense.{k}.weights"] += np.outer(delta, trace.activations[k])
        grads[f"dense.{k}.biases"] += delta
        dh = layers[k].weights.T @ delta
        if k > 0:
            if layers[k - 1].activation == "relu":
                dh = dh * (trace.preactivations[k - 1] > 0)
            delta = dh
    dpooled = np.where(trace.inhibited, 0.0, dh)
    # ReLU before pooling: pooled > 0 exactly when the winning raw score is > 0
    dscore = np.where(trace.pooled > 0, dpooled, 0.0)

    ids = trace.token_ids
    emb_grad = grads["embedding"]
    for k, ch in enumerate(model.channels):
        off = model.channel_offsets[k]
        fgrad = grads[f"channels.{k}.filters"]
        for jj in range(ch.n_filters):
            g = dscore[off + jj]
            if g == 0.0:
                continue
            r = trace.argmax_index[off + jj]
            span = ids[r:r + ch.kernel_size]
            fgrad[jj] += g * trace.embedded[r:r + ch.kernel_size]
            np.add.at(emb_grad, span, g * ch.filters[jj])
    return sample_loss(model, trace, label)


def loss_and_grads(model: CnnModel, batch):
    """Mean cross-entropy over ``batch`` and its exact gradient."""
    x, y = _as_batch(batch)
    grads = {name: np.zeros_like(p) for name, p in parameters(model).items()}
    total = 0.0
    for ids, lab in zip(x, y):
        total += _accumulate(model, forward(model, ids), int(lab), grads)
    n = x.shape[0]
    for g in grads.values():
        g /= n
    grads["embedding"][model.pad_token_id] = 0.0
    return total / n, grads


def backprop_grads(model: CnnModel, batch) -> dict:
    return loss_and_grads(model, batch)[1]


# -- finite-difference check -------------------------------------------------


def _kink_exclusions(model: CnnModel, batch, tol):
    """Masks of parameters within ``tol`` of a pool tie or ReLU kink."""
    x, _ = _as_batch(batch)
    excluded = {name: np.zeros(p.shape, dtype=bool) for name, p in parameters(model).items()}
    pad = model.pad_token_id
    for ids in x:
        tr = forward(model, ids)
        for k, z in enumerate(tr.preactivations[:-1]):
            if model.dense_layers[k].activation == "relu" and np.any(np.abs(z) < tol):
                for name in excluded:
                    if not name.startswith("dense.") or int(name.split(".")[1]) <= k:
                        excluded[name][...] = True
        for k, ch in enumerate(model.channels):
            l = ch.kernel_size
            off = model.channel_offsets[k]
            n_pos = model.pad_length - l + 1
            windows = np.stack([tr.embedded[r:r + l].ravel() for r in range(n_pos)])
            raw = windows @ ch.filters.reshape(ch.n_filters, -1).T
            live = np.array([np.any(ids[r:r + l] != pad) for r in range(n_pos)])
            for jj in range(ch.n_filters):
                top = tr.pooled[off + jj]
                near = np.flatnonzero(live & (raw[:, jj] >= top - tol))
                if len(near) >= 2 or (len(near) >= 1 and top <= tol):
                    excluded[f"channels.{k}.filters"][jj] = True
                    for r in near:
                        excluded["embedding"][ids[r:r + l]] = True
    excluded["embedding"][pad] = True
    return excluded


def relative_errors(model: CnnModel, batch, epsilon_fd: float = 1e-5, grads=None,
                    max_params=None, seed: int = 0, tol=None):
    """Per-parameter |analytic - numeric| / max(|analytic| + |numeric|, 1e-8).

    Returns a list of ``(name, index, error)``. Parameters next to
    nondifferentiable points are skipped; ``max_params`` subsamples.
    """
    if epsilon_fd <= 0:
        raise ValueError("epsilon_fd must be positive")
    batch = _as_batch(batch)
    if grads is None:
        grads = backprop_grads(model, batch)
    tol = 100 * epsilon_fd if tol is None else tol
    excluded = _kink_exclusions(model, batch, tol)
    params = parameters(model)
    candidates = [
        (name, idx)
        for name, p in params.items()
        for idx in zip(*np.nonzero(~excluded[name]))
    ]
    if max_params is not None and len(candidates) > max_params:
        rng = np.random.default_rng(seed)
        pick = rng.choice(len(candidates), size=max_params, replace=False)
        candidates = [candidates[i] for i in sorted(pick)]
    out = []
    for name, idx in candidates:
        vals = []
        for step in (epsilon_fd, -epsilon_fd):
            arr = params[name].copy()
            arr[idx] += step
            vals.append(batch_loss(with_parameters(model, {name: arr}), batch))
        numeric = (vals[0] - vals[1]) / (2 * epsilon_fd)
        analytic = grads[name][idx]
        err = abs(analytic - numeric) / max(abs(analytic) + abs(numeric), 1e-8)
        out.append((name, idx, err))
    return out


def grad_check(model: CnnModel, sample, epsilon_fd: float = 1e-5, **kwargs) -> float:
    """Largest relative error between backprop and central differences."""
    errs = relative_errors(model, sample, epsilon_fd, **kwargs)
    return max((e for _, _, e in errs), default=0.0)


# -- training ----------------------------------------------------------------


@dataclass
class TrainResult:
    model: CnnModel
    history: list = field(default_factory=list)
    best_epoch: int = 0


def accuracy(model: CnnModel, x, y) -> float:
    if len(y) == 0:
        return float("nan")
    hits = sum(forward(model, ids).predicted_class == lab for ids, lab in zip(x, y))
    return float(hits / len(y))


def train(model: CnnModel, dataset, config: TrainConfig) -> TrainResult:
    """SGD over the train part of ``dataset``; keeps the best-validation snapshot.

    ``dataset`` is a :class:`~cnnexplain.corpus.Dataset`; it is split with
    ``config.split`` and ``config.seed`` and encoded with the model vocab.
    """
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    train_part, val_part = dataset.split(config.split, config.seed)
    vocab = model.token_to_id
    x_tr, y_tr = train_part.encode(vocab, model.pad_length)
    x_va, y_va = val_part.encode(vocab, model.pad_length)
    rng = np.random.default_rng(config.seed)

    best, best_acc, best_epoch = model, -1.0, 0
    history = []
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(y_tr))
        losses = []
        for start in range(0, len(order), config.batch_size):
            sel = order[start:start + config.batch_size]
            try:
                loss, grads = loss_and_grads(model, (x_tr[sel], y_tr[sel]))
            except ForwardOverflowError as exc:
                raise TrainingDivergedError(epoch) from exc
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch)
            losses.append(loss * len(sel))
            if config.learning_rate:
                params = parameters(model)
                model = with_parameters(
                    model,
                    {n: params[n] - config.learning_rate * g for n, g in grads.items()},
                )
        train_loss = float(np.sum(losses) / len(y_tr))
        try:
            train_acc = accuracy(model, x_tr, y_tr)
            val_acc = accuracy(model, x_va, y_va) if len(y_va) else train_acc
        except ForwardOverflowError as exc:
            raise TrainingDivergedError(epoch) from exc
        history.append({"epoch": epoch, "train_loss": train_loss,
                        "train_acc": train_acc, "val_acc": val_acc})
        log.info("epoch %d loss %.4f train_acc %.3f val_acc %.3f",
                 epoch, train_loss, train_acc, val_acc)
        if val_acc > best_acc:
            best, best_acc, best_epoch = model, val_acc, epoch
    return TrainResult(best, history, best_epoch)


def write_history_csv(history, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=["epoch", "train_loss", "train_acc", "val_acc"])
        w.writeheader()
        w.writerows(history)
