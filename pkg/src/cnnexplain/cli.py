"""Command-line interface: ``cnnexplain train|explain|compare|eval``.

Exit codes: 0 ok, 1 internal error, 2 input error, 3 degenerate input.
Set ``CNNEXPLAIN_LOG_LEVEL`` (e.g. ``DEBUG``) for more logging.
"""

from __future__ import annotations

import functools
import json
import logging
import os
import statistics
import sys
from pathlib import Path

import click
import numpy as np

from . import corpus
from .errors import CnnExplainError, DatasetError, ModelError, ModelFormatError
from .explain import explain as run_explain
from .lrp import RatioRule
from .model import forward
from .oracle import lrp_vs_occlusion, write_agreement_csv
from .report import bars_csv, build_report, html_document, render_ansi, to_json
from .trainer import Architecture, TrainConfig, init_model, train, write_history_csv

log = logging.getLogger("cnnexplain")

EXIT_INTERNAL, EXIT_INPUT, EXIT_DEGENERATE = 1, 2, 3


class DegenerateInput(CnnExplainError):
    pass


def _guard(fn):
    """Map package errors onto the documented exit codes."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except DegenerateInput as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_DEGENERATE)
        except (DatasetError, ModelFormatError, ModelError, FileNotFoundError,
                IsADirectoryError, ValueError, KeyError, json.JSONDecodeError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_INPUT)
        except CnnExplainError as exc:
            click.echo(f"internal error: {exc}", err=True)
            sys.exit(EXIT_INTERNAL)

    return wrapper


@click.group()
@click.version_option(package_name="artifact")
def main():
    """Explain 1D text-CNN predictions with n-gram relevance."""
    level = os.environ.get("CNNEXPLAIN_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


# -- train -------------------------------------------------------------------


def load_train_config(path):
    """Read a JSON training config; relative paths resolve against its folder."""
    path = Path(path)
    cfg = json.loads(path.read_text(encoding="utf-8"))
    base = path.parent
    for key in ("dataset", "model_out", "log_csv", "test_out"):
        if cfg.get(key):
            cfg[key] = str(base / cfg[key])
    return cfg


def train_from_config(cfg):
    """Split, build the vocabulary from the train part, train. Returns
    ``(TrainResult, dataset, test_part)``."""
    if "dataset" not in cfg:
        raise DatasetError("config has no 'dataset'")
    ds = corpus.load_dataset(cfg["dataset"], cfg.get("class_names"))
    if len(ds) == 0:
        raise DatasetError(f"{cfg['dataset']}: no samples")
    tc = TrainConfig(**cfg.get("train", {}))
    train_part, test_part = ds.split(tc.split, tc.seed)
    vocab = corpus.build_vocab(t for t, _ in train_part.samples)
    arch_cfg = dict(cfg.get("arch", {}))
    arch_cfg["channels"] = tuple(tuple(c) for c in arch_cfg.get("channels", ((1, 40), (2, 40), (3, 40))))
    arch_cfg["hidden"] = tuple(arch_cfg.get("hidden", ()))
    arch = Architecture(vocab=tuple(vocab), n_classes=ds.n_classes,
                        class_names=tuple(ds.class_names), **arch_cfg)
    model = init_model(arch, seed=tc.seed, init_scale=tc.init_scale)
    return train(model, ds, tc), ds, test_part


@main.command("train")
@click.argument("config", type=click.Path(dir_okay=False))
@click.option("--out", "model_out", type=click.Path(dir_okay=False), help="Override model_out.")
@_guard
def cmd_train(config, model_out):
    """Train a model from a JSON CONFIG file."""
    cfg = load_train_config(config)
    if model_out:
        cfg["model_out"] = model_out
    if not cfg.get("model_out"):
        raise ValueError("config needs 'model_out' (or pass --out)")
    result, _, test_part = train_from_config(cfg)
    corpus.save_model(result.model, cfg["model_out"])
    if cfg.get("log_csv"):
        write_history_csv(result.history, cfg["log_csv"])
    if cfg.get("test_out"):
        corpus.save_dataset(test_part, cfg["test_out"])
    best = result.history[result.best_epoch - 1]
    click.echo(f"model written to {cfg['model_out']}")
    click.echo(f"best epoch {result.best_epoch}: val_acc {best['val_acc']:.4f}")


# -- explain -----------------------------------------------------------------


def _sentences(sentence, input_file):
    if input_file:
        lines = Path(input_file).read_text(encoding="utf-8").splitlines()
        texts = [ln.split("\t")[0] for ln in lines
                 if ln.strip() and not ln.startswith(corpus.HEADER_PREFIX)]
    elif sentence:
        texts = [sentence]
    else:
        raise ValueError("give a SENTENCE or --input FILE")
    return texts


def explain_text(model, text, rule):
    tokens = corpus.tokenize(text)
    if not tokens:
        raise DegenerateInput(f"sentence is empty after tokenization: {text!r}")
    tokens = tokens[:model.pad_length]
    ids = corpus.encode_for_model(model, tokens)
    return build_report(run_explain(model, ids, rule, tokens=tokens))


@main.command("explain")
@click.argument("model_file", type=click.Path(dir_okay=False))
@click.argument("sentence", required=False)
@click.option("--input", "input_file", type=click.Path(dir_okay=False),
              help="Explain every line of FILE (text before a TAB).")
@click.option("--rule", type=click.Choice(["lrp0", "eps", "adapted"]), default="adapted",
              show_default=True)
@click.option("--epsilon", type=float, default=None, help="Stabilizer for --rule eps.")
@click.option("--format", "fmt", type=click.Choice(["ansi", "html", "json"]), default="ansi",
              show_default=True)
@click.option("--bars", type=click.Path(dir_okay=False), help="Write relevance bar CSV.")
@click.option("--no-color", is_flag=True)
@_guard
def cmd_explain(model_file, sentence, input_file, rule, epsilon, fmt, bars, no_color):
    """Explain the prediction for SENTENCE (or each line of --input)."""
    model = corpus.load_model(model_file)
    ratio_rule = RatioRule.parse(rule, epsilon)
    reports = [explain_text(model, t, ratio_rule) for t in _sentences(sentence, input_file)]
    if fmt == "json":
        click.echo(to_json(reports[0] if not input_file else reports))
    elif fmt == "html":
        click.echo(html_document(reports), nl=False)
    else:
        for r in reports:
            click.echo(render_ansi(r, color=not no_color), nl=False)
    if bars:
        Path(bars).write_text("".join(bars_csv(r) for r in reports), encoding="utf-8")


# -- compare -----------------------------------------------------------------


def compare_dataset(model, dataset, rule):
    rows = []
    for sid, (tokens, _) in enumerate(dataset.samples):
        ids = corpus.encode_for_model(model, tokens)
        rows.append((sid, lrp_vs_occlusion(model, ids, rule)))
    return rows


@main.command("compare")
@click.argument("model_file", type=click.Path(dir_okay=False))
@click.argument("dataset", type=click.Path(dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False), help="CSV path (default: stdout).")
@click.option("--rule", type=click.Choice(["lrp0", "eps", "adapted"]), default="adapted")
@click.option("--epsilon", type=float, default=None)
@_guard
def cmd_compare(model_file, dataset, out, rule, epsilon):
    """Per-sentence agreement between occlusion and LRP word relevance."""
    model = corpus.load_model(model_file)
    ds = corpus.load_dataset(dataset, model.class_names or None)
    rows = compare_dataset(model, ds, RatioRule.parse(rule, epsilon))
    if out:
        write_agreement_csv(rows, out)
    else:
        click.echo("sentence_id,spearman,cosine,n_words")
        for sid, a in rows:
            vals = "degenerate,degenerate" if a.degenerate else f"{a.spearman:.6f},{a.cosine:.6f}"
            click.echo(f"{sid},{vals},{a.n_words}")
    valid = [a.spearman for _, a in rows if not a.degenerate]
    med = statistics.median(valid) if valid else float("nan")
    click.echo(f"median spearman {med:.4f} over {len(valid)} sentences "
               f"({len(rows) - len(valid)} degenerate)", err=True)


# -- eval --------------------------------------------------------------------


def evaluate(model, dataset):
    """Accuracy and confusion counts (rows: true class, columns: predicted)."""
    if len(dataset) == 0:
        raise DatasetError("empty dataset")
    c = model.n_classes
    confusion = np.zeros((c, c), dtype=np.int64)
    for tokens, label in dataset.samples:
        pred = forward(model, corpus.encode_for_model(model, tokens)).predicted_class
        confusion[label, pred] += 1
    return float(np.trace(confusion) / confusion.sum()), confusion


@main.command("eval")
@click.argument("model_file", type=click.Path(dir_okay=False))
@click.argument("dataset", type=click.Path(dir_okay=False))
@_guard
def cmd_eval(model_file, dataset):
    """Accuracy and per-class confusion counts on DATASET."""
    model = corpus.load_model(model_file)
    ds = corpus.load_dataset(dataset, model.class_names or None)
    if ds.n_classes != model.n_classes:
        raise DatasetError(f"dataset has {ds.n_classes} classes, model {model.n_classes}")
    acc, confusion = evaluate(model, ds)
    names = list(model.class_names) or [str(j) for j in range(model.n_classes)]
    click.echo(f"accuracy {acc:.4f} ({int(np.trace(confusion))}/{int(confusion.sum())})")
    click.echo("true\\pred," + ",".join(names))
    for name, row in zip(names, confusion):
        click.echo(name + "," + ",".join(str(int(v)) for v in row))


if __name__ == "__main__":
    main()
