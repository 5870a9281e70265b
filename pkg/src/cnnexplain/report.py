"""Explanation reports: JSON payload, ANSI and HTML renderings.

Sufficient n-grams are highlighted (red in ANSI, ``<mark>`` in HTML) and
necessary n-grams are wrapped in brackets, e.g. ``soggy and [not good]``.
Pad positions covered by a reported span are shown as ``<pad>``.
"""

from __future__ import annotations

import csv
import html
import io
import json

from .explain import Explanation

RED = "\x1b[31;1m"
DIM = "\x1b[2m"
RESET = "\x1b[0m"
PAD_MARK = "<pad>"

REPORT_SCHEMA = {
    "type": "object",
    "required": ["text", "predicted_class", "output", "ngrams"],
    "properties": {
        "text": {"type": "string"},
        "tokens": {"type": "array", "items": {"type": "string"}},
        "predicted_class": {"type": "integer", "minimum": 0},
        "predicted_label": {"type": "string"},
        "class_names": {"type": "array", "items": {"type": "string"}},
        "output": {"type": "array", "items": {"type": "number"}, "minItems": 2},
        "rule": {"type": "string"},
        "sufficient_relevance": {"type": "number"},
        "sufficient_complete": {"type": "boolean"},
        "ngrams": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["span", "text", "contribution", "relevance",
                             "polarity", "in_S", "in_N"],
                "properties": {
                    "span": {"type": "array", "items": {"type": "integer"},
                             "minItems": 2, "maxItems": 2},
                    "channel": {"type": "integer"},
                    "filters": {"type": "array", "items": {"type": "integer"}},
                    "text": {"type": "string"},
                    "contribution": {"type": "array", "items": {"type": "number"}},
                    "relevance": {"type": "number"},
                    "polarity": {"enum": ["positive", "negative", "null"]},
                    "explained_class": {"type": "integer"},
                    "pad": {"type": "boolean"},
                    "in_S": {"type": "boolean"},
                    "in_N": {"type": "boolean"},
                },
            },
        },
    },
}


def build_report(expl: Explanation) -> dict:
    """JSON-ready report; n-grams ranked by relevance, highest first."""
    in_s = {id(u) for u in expl.sets.sufficient}
    in_n = {id(u) for u in expl.sets.necessary}
    ranked = sorted(expl.features, key=lambda u: (-u.relevance, u.channel, u.start))
    p = expl.predicted_class
    return {
        "text": " ".join(expl.tokens),
        "tokens": list(expl.tokens),
        "predicted_class": p,
        "predicted_label": expl.class_names[p] if expl.class_names else str(p),
        "class_names": list(expl.class_names),
        "output": [float(v) for v in expl.trace.output],
        "rule": expl.relevance.rule.kind,
        "sufficient_relevance": expl.sets.sufficient_relevance,
        "sufficient_complete": expl.sets.complete,
        "ngrams": [
            {
                "span": [u.start, u.start + u.length],
                "channel": u.channel,
                "filters": list(u.adjacency),
                "text": u.text,
                "contribution": [float(v) for v in u.contribution],
                "relevance": float(u.relevance),
                "polarity": u.polarity,
                "explained_class": u.explained_class,
                "pad": u.has_pad,
                "in_S": id(u) in in_s,
                "in_N": id(u) in in_n,
            }
            for u in ranked
        ],
    }


def to_json(report, indent=2) -> str:
    return json.dumps(report, indent=indent, ensure_ascii=False)


def _marked_spans(report, flag):
    return [tuple(g["span"]) for g in report["ngrams"] if g[flag]]


def _layout(report):
    """Words to show plus per-position highlight / bracket bookkeeping."""
    s_spans = _marked_spans(report, "in_S")
    n_spans = _marked_spans(report, "in_N")
    tokens = list(report["tokens"])
    end = max([len(tokens)] + [b for _, b in s_spans + n_spans])
    words = tokens + [PAD_MARK] * (end - len(tokens))
    highlight = [any(a <= i < b for a, b in s_spans) for i in range(end)]
    opens = [sum(1 for a, _ in n_spans if a == i) for i in range(end)]
    closes = [sum(1 for _, b in n_spans if b == i + 1) for i in range(end)]
    return words, highlight, opens, closes, s_spans, n_spans


def _label(report):
    return report.get("predicted_label", str(report["predicted_class"]))


def render_ansi(report, color=True) -> str:
    words, highlight, opens, closes, s_spans, n_spans = _layout(report)
    parts = []
    for i, w in enumerate(words):
        text = w
        if color and highlight[i]:
            text = f"{RED}{w}{RESET}"
        elif color and w == PAD_MARK:
            text = f"{DIM}{w}{RESET}"
        parts.append("[" * opens[i] + text + "]" * closes[i])
    tokens = report["tokens"]

    def span_text(a, b):
        return " ".join(tokens[a:b] + [PAD_MARK] * max(0, b - max(a, len(tokens))))

    lines = [" ".join(parts) + f" -- {_label(report)}"]
    lines.append("sufficient: " + " | ".join(f"{span_text(a, b)} [{a},{b})" for a, b in s_spans))
    lines.append("necessary: " + " | ".join(f"{span_text(a, b)} [{a},{b})" for a, b in n_spans))
    return "\n".join(lines) + "\n"


def render_html(report) -> str:
    words, highlight, opens, closes, s_spans, n_spans = _layout(report)
    out = []
    for i, w in enumerate(words):
        text = html.escape(w)
        if highlight[i]:
            text = f'<mark class="sufficient">{text}</mark>'
        out.append("[" * opens[i] + text + "]" * closes[i])
    esc = html.escape

    def items(spans, cls):
        return "".join(
            f'<li class="{cls}" data-span="{a}-{b}">{esc(" ".join(words[a:b]))}</li>'
            for a, b in spans
        )

    rows = "".join(
        f"<tr><td>{esc(g['text'])}</td><td>{g['relevance']:.4f}</td>"
        f"<td>{g['polarity']}</td><td>{'*' if g['in_S'] else ''}</td>"
        f"<td>{'*' if g['in_N'] else ''}</td></tr>"
        for g in report["ngrams"]
    )
    return (
        '<div class="explanation">\n'
        f'<p class="sentence">{" ".join(out)} &mdash; <b>{esc(_label(report))}</b></p>\n'
        f'<ul class="sets">{items(s_spans, "sufficient")}{items(n_spans, "necessary")}</ul>\n'
        "<table><tr><th>n-gram</th><th>relevance</th><th>polarity</th>"
        f"<th>S</th><th>N</th></tr>{rows}</table>\n"
        "</div>\n"
    )


HTML_HEAD = (
    "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>explanations</title>"
    "<style>mark.sufficient{background:none;color:#c00;font-weight:bold}"
    "li.necessary::before{content:'necessary: '}li.sufficient::before{content:'sufficient: '}"
    "</style></head><body>\n"
)


def html_document(reports) -> str:
    return HTML_HEAD + "".join(render_html(r) for r in reports) + "</body></html>\n"


def bars_csv(report) -> str:
    """Relevance bar data for plotting: one row per n-gram."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["ngram", "start", "end", "relevance", "polarity", "in_S", "in_N"])
    for g in report["ngrams"]:
        w.writerow([g["text"], *g["span"], repr(g["relevance"]), g["polarity"],
                    int(g["in_S"]), int(g["in_N"])])
    return buf.getvalue()
