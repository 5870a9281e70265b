"""From filter relevance to n-gram explanations.

Each filter's max-pool winner identifies an n-gram; filters that picked the
same span on the same channel share one :class:`NgramFeature`, whose
contribution is the sum of their relevance rows. Positive features (relevance
to the predicted class > 0) feed the sufficient-set and necessary-set
searches, which inhibit filters by zeroing their pooled values.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import CnnExplainError
from .lrp import LRP_ADAPTED, RatioRule, RelevanceMatrix, propagate
from .model import CnnModel, ForwardTrace, fcnn_forward, forward

log = logging.getLogger(__name__)

POSITIVE, NEGATIVE, NULL = "positive", "negative", "null"


@dataclass(eq=False)
class NgramFeature:
    channel: int
    start: int
    length: int
    tokens: tuple
    adjacency: list  # global filter indices, ascending
    has_pad: bool = False
    contribution: np.ndarray | None = None
    relevance: float | None = None
    polarity: str | None = None
    explained_class: int | None = None

    @property
    def key(self):
        return (self.channel, self.start)

    @property
    def span(self):
        return (self.start, self.start + self.length)

    @property
    def text(self):
        return " ".join(self.tokens)


@dataclass
class FeatureSets:
    positives: list
    negatives: list
    nulls: list
    sufficient: list
    necessary: list
    complete: bool = True  # False when the sufficient-set scan stopped on a flip

    @property
    def sufficient_relevance(self) -> float:
        return float(sum(u.relevance for u in self.sufficient))


@dataclass
class Explanation:
    tokens: list
    trace: ForwardTrace
    relevance: RelevanceMatrix
    features: list
    sets: FeatureSets
    class_names: list = field(default_factory=list)

    @property
    def predicted_class(self) -> int:
        return self.trace.predicted_class


def select_ngrams(trace: ForwardTrace, model: CnnModel) -> list:
    """Group filters by the span their max-pool selected."""
    by_key = {}
    pad = model.pad_token_id
    for j in range(model.n_filters):
        ch = int(model.filter_channel[j])
        start = int(trace.argmax_index[j])
        feat = by_key.get((ch, start))
        if feat is None:
            l = model.channels[ch].kernel_size
            ids = trace.token_ids[start:start + l]
            feat = NgramFeature(
                channel=ch,
                start=start,
                length=l,
                tokens=tuple(model.vocab[i] for i in ids),
                adjacency=[],
                has_pad=bool(np.any(ids == pad)),
            )
            by_key[(ch, start)] = feat
        feat.adjacency.append(j)
    return [by_key[k] for k in sorted(by_key)]


def aggregate_contributions(features, relevance) -> list:
    values = relevance.values if isinstance(relevance, RelevanceMatrix) else np.asarray(relevance)
    for feat in features:
        feat.contribution = values[feat.adjacency].sum(axis=0)
    return features


def class_relevance(contribution, predicted_class: int, output_activation: str = "softmax") -> float:
    """Relevance to the predicted class.

    Softmax: own contribution minus the mean contribution to the other
    classes. Logistic: the contribution itself.
    """
    r = np.asarray(contribution, dtype=np.float64)
    if r.shape[0] < 2:
        raise ValueError("need at least two classes")
    if output_activation == "logistic":
        return float(r[predicted_class])
    others = np.delete(r, predicted_class)
    return float(r[predicted_class] - others.sum() / others.shape[0])


def polarity_of(relevance: float) -> str:
    if relevance > 0:
        return POSITIVE
    if relevance < 0:
        return NEGATIVE
    return NULL


def polarity_and_explained_class(feature: NgramFeature):
    return polarity_of(feature.relevance), int(np.argmax(feature.contribution))


def score_features(features, predicted_class, output_activation) -> list:
    for feat in features:
        feat.relevance = class_relevance(feat.contribution, predicted_class, output_activation)
        feat.polarity, feat.explained_class = polarity_and_explained_class(feat)
    return features


def _mask(model, filters):
    mask = np.zeros(model.n_filters, dtype=bool)
    mask[list(filters)] = True
    return mask


def inhibit_and_predict(model: CnnModel, trace: ForwardTrace, filters) -> int:
    """Prediction with the given pooled entries zeroed; conv stage reused."""
    filters = list(filters)
    if any(not 0 <= j < model.n_filters for j in filters):
        raise ValueError("filter index out of range")
    _, _, out = fcnn_forward(model, trace.pooled, _mask(model, filters) | trace.inhibited)
    return int(np.argmax(out))


def _filters_of(features):
    return sorted({j for u in features for j in u.adjacency})


def _tie_key(u):
    return min(u.adjacency)


def split_by_polarity(features):
    pos = [u for u in features if u.polarity == POSITIVE]
    neg = [u for u in features if u.polarity == NEGATIVE]
    nul = [u for u in features if u.polarity == NULL]
    return pos, neg, nul


def sufficient_set(model: CnnModel, trace: ForwardTrace, features):
    """Greedy sufficient set over the positive features.

    Positives are visited in ascending relevance; each is dropped from the
    set when inhibiting it together with everything already dropped still
    yields the prediction. The scan stops at the first feature whose
    inhibition would flip the prediction. Returns ``(S, complete)``.
    """
    p = trace.predicted_class
    if inhibit_and_predict(model, trace, []) != p:
        raise CnnExplainError("stored prediction disagrees with unmasked trace")
    positives = [u for u in features if u.polarity == POSITIVE]
    order = sorted(positives, key=lambda u: (u.relevance, _tie_key(u)))
    kept = list(order)
    dropped = set()
    complete = True
    for u in order:
        trial = dropped | set(u.adjacency)
        if inhibit_and_predict(model, trace, trial) != p:
            complete = False
            break
        dropped = trial
        kept.remove(u)
    removed = [u for u in positives if u not in kept]
    if inhibit_and_predict(model, trace, _filters_of(removed)) != p:
        raise CnnExplainError("sufficient set failed verification")
    return kept, complete


def necessary_set(model: CnnModel, trace: ForwardTrace, features) -> list:
    """Positive features whose inhibition alone flips the prediction."""
    p = trace.predicted_class
    positives = [u for u in features if u.polarity == POSITIVE]
    order = sorted(positives, key=lambda u: (-u.relevance, _tie_key(u)))
    return [u for u in order if inhibit_and_predict(model, trace, u.adjacency) != p]


def feature_sets(model: CnnModel, trace: ForwardTrace, features) -> FeatureSets:
    pos, neg, nul = split_by_polarity(features)
    suff, complete = sufficient_set(model, trace, features)
    nec = necessary_set(model, trace, features)
    if complete:
        in_s = {id(u) for u in suff}
        if not all(id(u) in in_s for u in nec):
            log.info("necessary feature outside sufficient set (complete scan)")
    return FeatureSets(pos, neg, nul, suff, nec, complete)


def analyze(model: CnnModel, token_ids, rule: RatioRule = LRP_ADAPTED):
    """Forward, propagate and score; returns ``(trace, relevance, features)``."""
    trace = forward(model, token_ids)
    rel = propagate(model, trace, rule)
    feats = select_ngrams(trace, model)
    aggregate_contributions(feats, rel)
    score_features(feats, trace.predicted_class, model.output_activation)
    return trace, rel, feats


def explain(model: CnnModel, token_ids, rule: RatioRule = LRP_ADAPTED,
            tokens=None, class_names=None) -> Explanation:
    """Full pipeline for one padded input."""
    trace, rel, feats = analyze(model, token_ids, rule)
    sets = feature_sets(model, trace, feats)
    if tokens is None:
        tokens = [model.vocab[i] for i in trace.token_ids if i != model.pad_token_id]
    names = list(class_names or model.class_names) or [str(j) for j in range(model.n_classes)]
    return Explanation(list(tokens), trace, rel, feats, sets, names)


def word_relevance(features, n_words: int) -> np.ndarray:
    """Spread each feature's relevance evenly over the words of its span.

    Words inside no selected span get exactly zero. Pad positions past
    ``n_words`` are dropped.
    """
    out = np.zeros(n_words)
    for u in features:
        share = u.relevance / u.length
        for pos in range(u.start, min(u.start + u.length, n_words)):
            out[pos] += share
    return out
