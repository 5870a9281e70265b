"""Multi-channel 1D text CNN (conv -> ReLU -> global max-pool -> dense) with
full forward traces.

Every intermediate a downstream explainer needs is kept in a
:class:`ForwardTrace`: the rectified feature maps, which row won each
filter's max-pool, the pooled vector, and every dense pre-activation and
activation. Inhibition of pooled components is expressed as a boolean mask
carried by the trace; model parameters are never mutated.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.special import expit, softmax

from .errors import (
    ForwardOverflowError,
    ModelError,
    OutOfVocabularyError,
    SequenceTooShortError,
)

HIDDEN_ACTIVATIONS = ("relu", "identity")
OUTPUT_ACTIVATIONS = ("softmax", "logistic")


def _frozen(a, ndim, name):
    arr = np.array(a, dtype=np.float64, copy=True)
    if arr.ndim != ndim:
        raise ModelError(f"{name}: expected {ndim}-d array, got shape {arr.shape}")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class ConvChannel:
    """One convolution channel: ``filters`` has shape (m_ch, kernel_size, d)."""

    kernel_size: int
    filters: np.ndarray

    def __post_init__(self):
        filters = np.array(self.filters, dtype=np.float64, copy=True)
        if filters.ndim == 2 and self.kernel_size >= 1:
            filters = filters.reshape(filters.shape[0], self.kernel_size, -1)
        if filters.ndim != 3:
            raise ModelError(f"filters must be (m, l, d), got shape {filters.shape}")
        if self.kernel_size < 1:
            raise ModelError(f"kernel_size must be >= 1, got {self.kernel_size}")
        if filters.shape[0] < 1:
            raise ModelError("channel has no filters")
        if filters.shape[1] != self.kernel_size:
            raise ModelError(
                f"filter height {filters.shape[1]} != kernel_size {self.kernel_size}"
            )
        filters.flags.writeable = False
        object.__setattr__(self, "filters", filters)

    @property
    def n_filters(self) -> int:
        return self.filters.shape[0]

    @property
    def width(self) -> int:
        return self.filters.shape[2]


@dataclass(frozen=True)
class DenseLayer:
    """Fully connected layer computing ``W @ h + b``; ``weights`` is (out, in)."""

    weights: np.ndarray
    biases: np.ndarray
    activation: str = "identity"

    def __post_init__(self):
        w = _frozen(self.weights, 2, "dense weights")
        b = _frozen(self.biases, 1, "dense biases")
        if w.shape[0] == 0 or w.shape[1] == 0:
            raise ModelError(f"zero-size dense layer {w.shape}")
        if b.shape[0] != w.shape[0]:
            raise ModelError(f"bias length {b.shape[0]} != output size {w.shape[0]}")
        if self.activation not in HIDDEN_ACTIVATIONS:
            raise ModelError(f"unknown activation {self.activation!r}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "biases", b)

    @property
    def n_in(self) -> int:
        return self.weights.shape[1]

    @property
    def n_out(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True, eq=False)
class CnnModel:
    """Immutable parameter set of a Kim-style text CNN.

    ``vocab`` lists tokens by id. The row of ``embedding`` at ``pad_token_id``
    must be zero. The last dense layer must use the identity activation;
    ``output_activation`` is applied on top of its pre-activation.
    ``class_names`` is optional display metadata.
    """

    vocab: tuple
    embedding: np.ndarray
    channels: tuple
    dense_layers: tuple
    output_activation: str = "softmax"
    pad_length: int = 50
    pad_token_id: int = 0
    class_names: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "vocab", tuple(self.vocab))
        object.__setattr__(self, "class_names", tuple(self.class_names))
        object.__setattr__(self, "channels", tuple(self.channels))
        object.__setattr__(self, "dense_layers", tuple(self.dense_layers))
        emb = _frozen(self.embedding, 2, "embedding")
        object.__setattr__(self, "embedding", emb)

        if len(self.vocab) != emb.shape[0]:
            raise ModelError(
                f"vocab size {len(self.vocab)} != embedding rows {emb.shape[0]}"
            )
        if len(set(self.vocab)) != len(self.vocab):
            raise ModelError("duplicate tokens in vocab")
        if emb.shape[1] < 1:
            raise ModelError("embedding dimension must be >= 1")
        if not 0 <= self.pad_token_id < emb.shape[0]:
            raise ModelError(f"pad_token_id {self.pad_token_id} outside vocab")
        if np.any(emb[self.pad_token_id] != 0.0):
            raise ModelError("pad embedding row must be all zeros")
        if self.pad_length < 1:
            raise ModelError("pad_length must be positive")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ModelError(f"unknown output activation {self.output_activation!r}")
        if not self.channels:
            raise ModelError("model needs at least one channel")
        for k, ch in enumerate(self.channels):
            if ch.width != emb.shape[1]:
                raise ModelError(
                    f"channel {k}: filter width {ch.width} != embedding dim {emb.shape[1]}"
                )
            if ch.kernel_size > self.pad_length:
                raise ModelError(
                    f"channel {k}: kernel_size {ch.kernel_size} > pad_length {self.pad_length}"
                )
        if not self.dense_layers:
            raise ModelError("model needs at least one dense layer")
        prev = self.n_filters
        for k, layer in enumerate(self.dense_layers):
            if layer.n_in != prev:
                raise ModelError(f"dense layer {k}: input size {layer.n_in} != {prev}")
            prev = layer.n_out
        if self.dense_layers[-1].activation != "identity":
            raise ModelError("last dense layer must use identity activation")
        if prev < 2:
            raise ModelError(f"need at least 2 classes, got {prev}")
        if self.class_names and len(self.class_names) != prev:
            raise ModelError(f"{len(self.class_names)} class names for {prev} classes")

    @property
    def embedding_dim(self) -> int:
        return self.embedding.shape[1]

    @property
    def n_filters(self) -> int:
        return sum(ch.n_filters for ch in self.channels)

    @property
    def n_classes(self) -> int:
        return self.dense_layers[-1].n_out

    @cached_property
    def token_to_id(self) -> dict:
        return {tok: i for i, tok in enumerate(self.vocab)}

    @cached_property
    def filter_channel(self) -> np.ndarray:
        """Channel index of each global filter index."""
        return np.concatenate(
            [np.full(ch.n_filters, k, dtype=np.int64) for k, ch in enumerate(self.channels)]
        )

    @cached_property
    def channel_offsets(self) -> tuple:
        """Global index of the first filter of each channel."""
        offsets = np.cumsum([0] + [ch.n_filters for ch in self.channels])
        return tuple(int(o) for o in offsets[:-1])


@dataclass
class ForwardTrace:
    """Every intermediate of one prediction.

    ``activations[0]`` is the (masked) pooled vector h^0 and
    ``activations[-1]`` equals ``output``; ``preactivations[k]`` is z^{k+1}.
    """

    token_ids: np.ndarray
    feature_maps: list
    argmax_index: np.ndarray
    pooled: np.ndarray
    inhibited: np.ndarray
    preactivations: list
    activations: list
    output: np.ndarray
    predicted_class: int
    embedded: np.ndarray = field(repr=False, default=None)


def convolve(embedded: np.ndarray, channel: ConvChannel) -> np.ndarray:
    """Rectified scores of every ``l``-word window against every filter.

    Returns an array of shape (n - l + 1, m_ch).
    """
    embedded = np.asarray(embedded, dtype=np.float64)
    n, d = embedded.shape
    l = channel.kernel_size
    if n < l:
        raise SequenceTooShortError(n, l)
    if d != channel.width:
        raise ModelError(f"embedding dim {d} != filter width {channel.width}")
    windows = np.lib.stride_tricks.sliding_window_view(embedded, (l, d))[:, 0]
    flat = windows.reshape(n - l + 1, l * d)
    with np.errstate(over="ignore", invalid="ignore"):
        scores = flat @ channel.filters.reshape(channel.n_filters, l * d).T
    if not np.all(np.isfinite(scores)):
        raise ForwardOverflowError(f"convolution (kernel {l})")
    return np.maximum(scores, 0.0)


def global_max_pool(feature_maps: np.ndarray):
    """Column maxima and the row achieving each (lowest row on ties)."""
    fm = np.asarray(feature_maps, dtype=np.float64)
    if fm.ndim != 2 or fm.shape[0] == 0:
        raise ModelError(f"feature maps must be a non-empty 2-d array, got {fm.shape}")
    idx = np.argmax(fm, axis=0)  # first occurrence on ties
    return fm[idx, np.arange(fm.shape[1])], idx


def _activate(z, kind):
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "identity":
        return z.copy()
    if kind == "softmax":
        return softmax(z)
    if kind == "logistic":
        return expit(z)
    raise ModelError(f"unknown activation {kind!r}")


def fcnn_forward(model: CnnModel, pooled: np.ndarray, inhibited: np.ndarray | None = None):
    """Run the dense stage on a pooled vector.

    Inhibited entries are forced to zero before the first layer. Returns
    ``(preactivations, activations, output)`` where ``activations[0]`` is the
    masked input.
    """
    h = np.array(pooled, dtype=np.float64, copy=True)
    if h.shape != (model.n_filters,):
        raise ModelError(f"pooled vector must have length {model.n_filters}, got {h.shape}")
    if inhibited is not None:
        inhibited = np.asarray(inhibited, dtype=bool)
        if inhibited.shape != h.shape:
            raise ModelError("mask length does not match pooled vector")
        h[inhibited] = 0.0
    preacts, acts = [], [h]
    last = len(model.dense_layers) - 1
    for k, layer in enumerate(model.dense_layers):
        with np.errstate(over="ignore", invalid="ignore"):
            z = layer.weights @ h + layer.biases
        if not np.all(np.isfinite(z)):
            raise ForwardOverflowError(f"dense layer {k}")
        h = _activate(z, model.output_activation if k == last else layer.activation)
        preacts.append(z)
        acts.append(h)
    if not np.all(np.isfinite(h)):
        raise ForwardOverflowError("output")
    return preacts, acts, h


def embed(model: CnnModel, token_ids: Sequence[int]) -> np.ndarray:
    ids = np.asarray(token_ids)
    if ids.ndim != 1 or ids.shape[0] != model.pad_length:
        raise ModelError(f"expected {model.pad_length} token ids, got shape {ids.shape}")
    if not np.issubdtype(ids.dtype, np.integer):
        raise ModelError("token ids must be integers")
    bad = (ids < 0) | (ids >= len(model.vocab))
    if bad.any():
        raise OutOfVocabularyError(int(ids[bad][0]), len(model.vocab))
    return model.embedding[ids]


def forward(model: CnnModel, token_ids: Sequence[int], inhibited=None) -> ForwardTrace:
    """Classify one padded token-id sequence and record the full trace."""
    ids = np.asarray(token_ids)
    embedded = embed(model, ids)
    maps, pooled, argmax = [], [], []
    for ch in model.channels:
        fm = convolve(embedded, ch)
        p, i = global_max_pool(fm)
        maps.append(fm)
        pooled.append(p)
        argmax.append(i)
    pooled = np.concatenate(pooled)
    if inhibited is None:
        inhibited = np.zeros(model.n_filters, dtype=bool)
    inhibited = np.array(inhibited, dtype=bool, copy=True)
    preacts, acts, out = fcnn_forward(model, pooled, inhibited)
    return ForwardTrace(
        token_ids=ids.astype(np.int64),
        feature_maps=maps,
        argmax_index=np.concatenate(argmax).astype(np.int64),
        pooled=pooled,
        inhibited=inhibited,
        preactivations=preacts,
        activations=acts,
        output=out,
        predicted_class=int(np.argmax(out)),
        embedded=embedded,
    )


def predict(model: CnnModel, token_ids) -> int:
    return forward(model, token_ids).predicted_class
