"""Seeded generator for a small synthetic sentiment corpus.

Sentences are built from review-like templates, including negation
("the soup was not good") and contrast ("... but ...") so that bigrams and
trigrams carry signal a unigram model cannot fully capture. A small share of
labels is flipped to keep the task from being trivially separable.

Run ``python -m cnnexplain.toydata OUT.tsv`` to write the corpus.
"""

from __future__ import annotations

import argparse

import numpy as np

from .corpus import Dataset, save_dataset, tokenize

CLASS_NAMES = ["NEG", "POS"]

SUBJECTS = [
    "the movie", "this phone", "the food", "the service", "the acting", "this place",
    "the battery", "the plot", "the staff", "the soup", "the camera", "the ending",
    "the music", "this hotel", "the screen", "the pizza", "the characters", "the sound",
]
POSITIVE = [
    "good", "great", "excellent", "wonderful", "amazing", "fantastic", "lovely",
    "superb", "enjoyable", "delightful", "brilliant", "perfect", "fun", "tasty",
    "realistic", "friendly",
]
NEGATIVE = [
    "bad", "terrible", "awful", "boring", "horrible", "poor", "disappointing",
    "soggy", "bland", "dull", "rude", "broken", "weak", "slow", "mediocre", "noisy",
]
INTENSIFIERS = ["", "", "very", "really", "quite", "so", "extremely", "pretty"]
POS_VERBS = ["loved", "liked", "enjoyed", "adored", "recommend"]
NEG_VERBS = ["hated", "disliked", "regret", "avoided", "returned"]
OPENERS = ["", "", "", "overall", "honestly", "i think", "to be fair", "well", "sadly", "again"]
CLOSERS = ["", "", "", "", "would go again", "for the price", "in my opinion", "at all", "today"]


def _pick(rng, items):
    return items[rng.integers(len(items))]


def _adj(rng, positive):
    return _pick(rng, POSITIVE if positive else NEGATIVE)


def _phrase(rng, positive):
    """A clause whose sentiment is ``positive``."""
    subj = _pick(rng, SUBJECTS)
    verb = _pick(rng, ["was", "is"])
    kind = rng.integers(4)
    if kind == 0:
        words = [subj, verb, _pick(rng, INTENSIFIERS), _adj(rng, positive)]
    elif kind == 1:
        # negated adjective of the opposite polarity
        words = [subj, verb, "not", _pick(rng, INTENSIFIERS), _adj(rng, not positive)]
    elif kind == 2:
        words = ["i", _pick(rng, POS_VERBS if positive else NEG_VERBS), subj]
    else:
        words = [_adj(rng, positive), subj.split()[-1], "and", _adj(rng, positive),
                 _pick(rng, SUBJECTS).split()[-1]]
    return " ".join(w for w in words if w)


def make_sentiment_corpus(n: int = 1000, seed: int = 0, noise: float = 0.05) -> Dataset:
    rng = np.random.default_rng(seed)
    samples = []
    for _ in range(n):
        label = int(rng.integers(2))
        if rng.random() < 0.2:
            # contrast: the clause after "but" decides
            text = f"{_phrase(rng, not label)} but {_phrase(rng, bool(label))}"
        else:
            text = " ".join(
                w for w in (_pick(rng, OPENERS), _phrase(rng, bool(label)), _pick(rng, CLOSERS)) if w
            )
        if rng.random() < noise:
            label = 1 - label
        samples.append((tokenize(text), label))
    return Dataset(samples, list(CLASS_NAMES))


def main(argv=None):
    parser = argparse.ArgumentParser(prog="python -m cnnexplain.toydata",
                                     description="Write a seeded toy sentiment TSV.")
    parser.add_argument("out", help="output TSV path")
    parser.add_argument("n", nargs="?", type=int, default=1000, help="number of sentences")
    parser.add_argument("seed", nargs="?", type=int, default=0)
    parser.add_argument("--noise", type=float, default=0.05, help="label-flip probability")
    args = parser.parse_args(argv)
    save_dataset(make_sentiment_corpus(args.n, args.seed, args.noise), args.out)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
