"""Slow, independent baselines used to check the analytic pipeline.

Nothing here shares code paths with :mod:`cnnexplain.model` beyond
embedding lookup: n-gram scores are recomputed window by window with exact
summation, sufficient sets are found by exhaustive search, and occlusion
measures the effect of deleting one word at a time.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.stats import spearmanr

from .errors import OracleTooLargeError
from .explain import POSITIVE, analyze, inhibit_and_predict, word_relevance
from .lrp import LRP_ADAPTED
from .model import CnnModel, forward


def brute_force_ngram_selection(model: CnnModel, token_ids):
    """Per global filter index: ``(start, rectified score)`` of its best window.

    The earliest window wins ties.
    """
    ids = list(token_ids)
    out = []
    for ch in model.channels:
        l = ch.kernel_size
        for f in ch.filters:
            best_start, best = 0, None
            for start in range(len(ids) - l + 1):
                vals = [
                    float(model.embedding[ids[start + t], k]) * float(f[t, k])
                    for t in range(l)
                    for k in range(model.embedding_dim)
                ]
                score = max(0.0, math.fsum(vals))
                if best is None or score > best:
                    best_start, best = start, score
            out.append((best_start, best))
    return out


def brute_force_min_sufficient(model: CnnModel, trace, features, cap: int = 12):
    """Smallest sufficient subsets of the positive features, by enumeration.

    A subset is sufficient when inhibiting every other positive feature keeps
    the prediction. Returns ``(k_star, witnesses)`` with witnesses as tuples of
    feature keys.
    """
    positives = [u for u in features if u.polarity == POSITIVE]
    if len(positives) > cap:
        raise OracleTooLargeError(len(positives), cap)
    p = trace.predicted_class
    for k in range(len(positives) + 1):
        found = []
        for subset in combinations(range(len(positives)), k):
            keep = set(subset)
            inhibit = [j for i, u in enumerate(positives) if i not in keep for j in u.adjacency]
            if inhibit_and_predict(model, trace, inhibit) == p:
                found.append(tuple(positives[i].key for i in subset))
        if found:
            return k, found
    # k = |U+| (inhibit nothing) always reproduces p
    raise AssertionError("unreachable: the full positive set is always sufficient")


@dataclass
class OcclusionScores:
    words: np.ndarray  # one score per real (non-pad) position
    predicted_class: int


def occlusion_scores(model: CnnModel, token_ids) -> OcclusionScores:
    """Drop in the predicted-class output when each real word becomes pad."""
    ids = np.asarray(token_ids).copy()
    base = forward(model, ids)
    p = base.predicted_class
    positions = np.flatnonzero(ids != model.pad_token_id)
    scores = np.zeros(len(positions))
    for k, pos in enumerate(positions):
        occluded = ids.copy()
        occluded[pos] = model.pad_token_id
        scores[k] = base.output[p] - forward(model, occluded).output[p]
    return OcclusionScores(scores, p)


@dataclass
class Agreement:
    spearman: float | None
    cosine: float | None
    n_words: int

    @property
    def degenerate(self) -> bool:
        return self.spearman is None


def max_normalize(v):
    v = np.asarray(v, dtype=np.float64)
    top = np.max(np.abs(v)) if v.size else 0.0
    return v / top if top > 0 else v


def compare_distributions(a, b) -> Agreement:
    """Spearman and cosine between two max-normalized score vectors.

    Vectors that are all zero (or constant, where rank correlation is
    undefined) give a degenerate result with ``spearman = None``.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or a.size < 2:
        raise ValueError("need two equal-length vectors of length >= 2")
    a, b = max_normalize(a), max_normalize(b)
    if not a.any() or not b.any() or np.ptp(a) == 0 or np.ptp(b) == 0:
        return Agreement(None, None, a.size)
    rho = float(spearmanr(a, b).statistic)
    cos = float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))
    return Agreement(rho, cos, a.size)


def write_agreement_csv(rows, path) -> None:
    """``rows``: iterable of ``(sentence_id, Agreement)``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["sentence_id", "spearman", "cosine", "n_words"])
        for sid, agr in rows:
            if agr.degenerate:
                w.writerow([sid, "degenerate", "degenerate", agr.n_words])
            else:
                w.writerow([sid, f"{agr.spearman:.6f}", f"{agr.cosine:.6f}", agr.n_words])


def lrp_vs_occlusion(model: CnnModel, token_ids, rule=None) -> Agreement:
    """Agreement between occlusion and per-word LRP relevance for one input."""
    _, _, feats = analyze(model, token_ids, rule or LRP_ADAPTED)
    occ = occlusion_scores(model, token_ids)
    n = occ.words.size
    if n < 2:
        return Agreement(None, None, n)
    return compare_distributions(occ.words, word_relevance(feats, n))
