"""Relevance propagation through the dense stage, from the outputs back to
the max-pooled vector.

Three ratio rules are available:

* ``lrp0``: ``z_ij / (sum_k z_kj + b_j)``
* ``lrp_eps``: as ``lrp0`` with the denominator pushed away from zero by
  ``epsilon`` in the direction of its sign
* ``lrp_adapted``: ``z_ij / sum_k |z_kj|``; bias left out, so every ratio keeps
  the sign of the product it comes from

where ``z_ij = h_i * w_ji`` is the product of input activation ``i`` and the
weight into unit ``j``. A zero denominator yields zero ratios for that unit.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .model import CnnModel, ForwardTrace

RULE_KINDS = ("lrp0", "lrp_eps", "lrp_adapted")
DEFAULT_EPSILON = 1e-6


@dataclass(frozen=True)
class RatioRule:
    kind: str = "lrp_adapted"
    epsilon: float = 0.0

    def __post_init__(self):
        if self.kind not in RULE_KINDS:
            raise ValueError(f"unknown rule {self.kind!r}; expected one of {RULE_KINDS}")
        if self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")
        if self.kind == "lrp_eps" and self.epsilon == 0:
            raise ValueError("lrp_eps needs epsilon > 0")

    @classmethod
    def parse(cls, name: str, epsilon: float | None = None) -> "RatioRule":
        """Accept CLI spellings ``lrp0``, ``eps``/``lrp_eps``, ``adapted``/``lrp_adapted``."""
        kind = {"eps": "lrp_eps", "adapted": "lrp_adapted", "lrp-a": "lrp_adapted"}.get(name, name)
        if kind == "lrp_eps":
            return cls(kind, DEFAULT_EPSILON if epsilon is None else epsilon)
        return cls(kind)


LRP0 = RatioRule("lrp0")
LRP_EPS = RatioRule("lrp_eps", DEFAULT_EPSILON)
LRP_ADAPTED = RatioRule("lrp_adapted")


@dataclass
class RelevanceMatrix:
    """``values[i, j]``: contribution of pooled component ``i`` to class ``j``."""

    values: np.ndarray
    rule: RatioRule
    seed: np.ndarray

    @property
    def shape(self):
        return self.values.shape

    def to_csv(self, path, class_names=None) -> None:
        m, c = self.values.shape
        names = list(class_names) if class_names else [f"class_{j}" for j in range(c)]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["filter", *names])
            for i in range(m):
                w.writerow([i, *(repr(float(v)) for v in self.values[i])])


def _safe_divide(num, den):
    out = np.zeros(np.broadcast_shapes(num.shape, den.shape))
    nz = den != 0
    np.divide(num, den, out=out, where=np.broadcast_to(nz, out.shape))
    return out


def layer_ratios(activations, weights, biases, rule: RatioRule = LRP_ADAPTED) -> np.ndarray:
    """Ratio matrix of shape (n_in, n_out) for one dense layer.

    ``weights`` is (n_out, n_in) as stored in :class:`DenseLayer`.
    """
    h = np.asarray(activations, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    b = np.asarray(biases, dtype=np.float64)
    z = h[:, None] * w.T  # z[i, j] = h_i * w_ji
    if rule.kind == "lrp_adapted":
        den = np.abs(z).sum(axis=0)
    else:
        den = z.sum(axis=0) + b
        if rule.kind == "lrp_eps":
            den = np.where(den >= 0, den + rule.epsilon, den - rule.epsilon)
    return _safe_divide(z, den[None, :])


def seed_output(model: CnnModel, trace: ForwardTrace, rule: RatioRule = LRP_ADAPTED) -> np.ndarray:
    """Contributions of the last hidden layer to each output value ``f_j(x)``."""
    top = model.dense_layers[-1]
    ratios = layer_ratios(trace.activations[-2], top.weights, top.biases, rule)
    return ratios * trace.output[None, :]


def propagate(model: CnnModel, trace: ForwardTrace, rule: RatioRule = LRP_ADAPTED) -> RelevanceMatrix:
    """Fold ratios from the output layer down to the pooled vector."""
    n_layers = len(model.dense_layers)
    if len(trace.activations) != n_layers + 1:
        raise ValueError(
            f"trace has {len(trace.activations) - 1} dense layers, model has {n_layers}"
        )
    rel = seed_output(model, trace, rule)
    for k in range(n_layers - 2, -1, -1):
        layer = model.dense_layers[k]
        ratios = layer_ratios(trace.activations[k], layer.weights, layer.biases, rule)
        rel = ratios @ rel
    return RelevanceMatrix(rel, rule, trace.output.copy())
