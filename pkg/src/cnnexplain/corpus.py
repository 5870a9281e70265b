"""Tokenization, vocabularies, TSV datasets and model files."""

from __future__ import annotations

import json
import logging
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DatasetError, ModelError, ModelFormatError
from .model import CnnModel, ConvChannel, DenseLayer

log = logging.getLogger(__name__)

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
PAD_ID = 0
UNK_ID = 1
FORMAT_VERSION = 1


def _is_punct(ch):
    return unicodedata.category(ch).startswith("P")


def _strip_punct(tok):
    i, j = 0, len(tok)
    while i < j and _is_punct(tok[i]):
        i += 1
    while j > i and _is_punct(tok[j - 1]):
        j -= 1
    return tok[i:j]


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, strip edge punctuation, drop empties.

    >>> tokenize("How far is it from Denver to Aspen?")
    ['how', 'far', 'is', 'it', 'from', 'denver', 'to', 'aspen']
    """
    out = []
    for raw in text.lower().split():
        tok = _strip_punct(raw)
        if tok:
            out.append(tok)
    return out


def build_vocab(token_lists, min_freq: int = 1) -> list[str]:
    """Reserved tokens first, then tokens in order of first appearance."""
    counts = Counter()
    order = []
    for toks in token_lists:
        for t in toks:
            if t not in counts:
                order.append(t)
            counts[t] += 1
    vocab = [PAD_TOKEN, UNK_TOKEN]
    vocab.extend(t for t in order if counts[t] >= min_freq and t not in (PAD_TOKEN, UNK_TOKEN))
    return vocab


def encode_and_pad(tokens, vocab, pad_length: int, unk_id: int = UNK_ID, pad_id: int = PAD_ID):
    """Map tokens to ids, truncate to ``pad_length`` (prefix kept), right-pad.

    ``vocab`` may be a token list or a token->id mapping.
    """
    if pad_length < 1:
        raise ValueError("pad_length must be >= 1")
    lookup = vocab if isinstance(vocab, dict) else {t: i for i, t in enumerate(vocab)}
    ids = [lookup.get(t, unk_id) for t in tokens[:pad_length]]
    ids.extend([pad_id] * (pad_length - len(ids)))
    return np.array(ids, dtype=np.int64)


@dataclass
class Dataset:
    samples: list  # (tokens, label) pairs
    class_names: list = field(default_factory=list)

    def __post_init__(self):
        c = len(self.class_names)
        for toks, label in self.samples:
            if not 0 <= label < c:
                raise DatasetError(f"label {label} outside 0..{c - 1}")

    def __len__(self):
        return len(self.samples)

    @property
    def n_classes(self):
        return len(self.class_names)

    def split(self, ratio: float, seed: int = 0):
        """Seeded shuffle, then the first ``ratio`` share becomes the first part."""
        if not 0.0 < ratio < 1.0:
            raise ValueError("split ratio must be in (0, 1)")
        perm = np.random.default_rng(seed).permutation(len(self.samples))
        cut = int(round(ratio * len(self.samples)))
        first = [self.samples[i] for i in perm[:cut]]
        second = [self.samples[i] for i in perm[cut:]]
        return Dataset(first, list(self.class_names)), Dataset(second, list(self.class_names))

    def encode(self, vocab, pad_length):
        x = np.stack([encode_and_pad(t, vocab, pad_length) for t, _ in self.samples]) \
            if self.samples else np.zeros((0, pad_length), dtype=np.int64)
        y = np.array([lab for _, lab in self.samples], dtype=np.int64)
        return x, y


HEADER_PREFIX = "#classes:"


def load_dataset(path, class_names=None) -> Dataset:
    """Read a ``sentence<TAB>label`` file.

    Class names come from ``class_names`` or a ``#classes: A,B,...`` first line;
    labels may be integer indices or class names. Sentences that tokenize to
    nothing are dropped with a warning.
    """
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    names = list(class_names) if class_names else None
    start = 0
    if lines and lines[0].startswith(HEADER_PREFIX):
        header = [s.strip() for s in lines[0][len(HEADER_PREFIX):].split(",") if s.strip()]
        names = names or header
        start = 1
    raw = []
    for lineno, line in enumerate(lines[start:], start=start + 1):
        if not line.strip():
            continue
        parts = line.rsplit("\t", 1)
        if len(parts) != 2 or not parts[1].strip():
            raise DatasetError(f"{path}:{lineno}: expected 'sentence<TAB>label'")
        raw.append((lineno, parts[0], parts[1].strip()))

    if names is None:
        try:
            ints = sorted({int(lab) for _, _, lab in raw})
        except ValueError as exc:
            raise DatasetError(f"{path}: non-integer labels need class names") from exc
        names = [str(i) for i in range(max(ints) + 1)] if ints else []
    index = {n: i for i, n in enumerate(names)}

    samples = []
    for lineno, text, lab in raw:
        if lab in index:
            label = index[lab]
        else:
            try:
                label = int(lab)
            except ValueError:
                raise DatasetError(f"{path}:{lineno}: unknown label {lab!r}") from None
            if not 0 <= label < len(names):
                raise DatasetError(f"{path}:{lineno}: unknown label {lab!r}")
        toks = tokenize(text)
        if not toks:
            log.warning("%s:%d: empty after tokenization, dropped", path, lineno)
            continue
        samples.append((toks, label))
    return Dataset(samples, names)


def save_dataset(dataset: Dataset, path) -> None:
    lines = [HEADER_PREFIX + " " + ",".join(dataset.class_names)]
    lines += [" ".join(toks) + "\t" + str(label) for toks, label in dataset.samples]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# -- model files -------------------------------------------------------------


def model_to_dict(model: CnnModel) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "pad_length": model.pad_length,
        "pad_token": model.vocab[model.pad_token_id],
        "vocab": list(model.vocab),
        "embedding": model.embedding.tolist(),
        "channels": [
            {"kernel_size": ch.kernel_size, "filters": ch.filters.tolist()}
            for ch in model.channels
        ],
        "dense": [
            {
                "weights": layer.weights.tolist(),
                "biases": layer.biases.tolist(),
                "activation": layer.activation,
            }
            for layer in model.dense_layers
        ],
        "output_activation": model.output_activation,
        "class_names": list(model.class_names),
    }


def _get(doc, key, where):
    if not isinstance(doc, dict) or key not in doc:
        raise ModelFormatError(f"{where}: missing field {key!r}")
    return doc[key]


def _matrix(value, ndim, where):
    try:
        arr = np.array(value, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ModelFormatError(f"{where}: not a numeric array ({exc})") from None
    if arr.ndim != ndim:
        raise ModelFormatError(f"{where}: expected {ndim}-d array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ModelFormatError(f"{where}: non-finite values")
    return arr


def model_from_dict(doc: dict, source: str = "<model>") -> CnnModel:
    version = _get(doc, "format_version", source)
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"{source}: format_version {version!r} unsupported "
                               f"(expected {FORMAT_VERSION})")
    vocab = _get(doc, "vocab", source)
    if not isinstance(vocab, list) or not all(isinstance(t, str) for t in vocab):
        raise ModelFormatError(f"{source}: vocab: must be a list of strings")
    pad_token = _get(doc, "pad_token", source)
    if pad_token not in vocab:
        raise ModelFormatError(f"{source}: pad_token: {pad_token!r} not in vocab")
    emb = _matrix(_get(doc, "embedding", source), 2, f"{source}: embedding")
    channels = []
    for k, ch in enumerate(_get(doc, "channels", source)):
        where = f"{source}: channels[{k}]"
        ks = _get(ch, "kernel_size", where)
        filters = _matrix(_get(ch, "filters", where), 3, f"{where}.filters")
        try:
            channels.append(ConvChannel(int(ks), filters))
        except ModelError as exc:
            raise ModelFormatError(f"{where}: {exc}") from None
    dense = []
    for k, layer in enumerate(_get(doc, "dense", source)):
        where = f"{source}: dense[{k}]"
        try:
            dense.append(DenseLayer(
                _matrix(_get(layer, "weights", where), 2, f"{where}.weights"),
                _matrix(_get(layer, "biases", where), 1, f"{where}.biases"),
                _get(layer, "activation", where),
            ))
        except ModelError as exc:
            raise ModelFormatError(f"{where}: {exc}") from None
    try:
        return CnnModel(
            vocab=tuple(vocab),
            embedding=emb,
            channels=tuple(channels),
            dense_layers=tuple(dense),
            output_activation=_get(doc, "output_activation", source),
            pad_length=int(_get(doc, "pad_length", source)),
            pad_token_id=vocab.index(pad_token),
            class_names=tuple(doc.get("class_names") or ()),
        )
    except ModelError as exc:
        raise ModelFormatError(f"{source}: {exc}") from None


def save_model(model: CnnModel, path) -> None:
    # json writes floats with repr(), which round-trips float64 exactly
    Path(path).write_text(json.dumps(model_to_dict(model)), encoding="utf-8")


def load_model(path) -> CnnModel:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: invalid JSON ({exc})") from None
    return model_from_dict(doc, str(path))


def encode_for_model(model: CnnModel, tokens):
    """Encode tokens with the model's own vocabulary and pad length."""
    lookup = model.token_to_id
    unk = lookup.get(UNK_TOKEN)
    if unk is None:
        unk = model.pad_token_id
        if any(t not in lookup for t in tokens):
            log.warning("model vocab has no %s; unknown tokens encoded as pad", UNK_TOKEN)
    return encode_and_pad(tokens, lookup, model.pad_length, unk_id=unk, pad_id=model.pad_token_id)
