import time
from pathlib import Path

import numpy as np
import pytest

from cnnexplain.cli import load_train_config, train_from_config
from cnnexplain.model import CnnModel, ConvChannel, DenseLayer

DATA = Path(__file__).resolve().parent.parent / "data"

ACCEPTANCE_LINES = []


def record(criterion, passed, detail):
    ACCEPTANCE_LINES.append(f"[{'PASS' if passed else 'FAIL'}] criterion {criterion}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def make_random_model(
    rng,
    vocab_size=12,
    d=4,
    channels=((1, 3), (2, 3)),
    hidden=(5,),
    n_classes=3,
    pad_length=8,
    zero_bias=False,
    output_activation="softmax",
    hidden_activation="relu",
    scale=1.0,
):
    vocab = ["<pad>", "<unk>"] + [f"w{i}" for i in range(vocab_size - 2)]
    emb = rng.normal(scale=scale, size=(vocab_size, d))
    emb[0] = 0.0
    chans = [ConvChannel(l, rng.normal(scale=scale, size=(m, l, d))) for l, m in channels]
    widths = [sum(m for _, m in channels), *hidden, n_classes]
    dense = []
    for k in range(len(widths) - 1):
        b = np.zeros(widths[k + 1]) if zero_bias else rng.normal(scale=0.1, size=widths[k + 1])
        act = "identity" if k == len(widths) - 2 else hidden_activation
        dense.append(DenseLayer(rng.normal(scale=scale, size=(widths[k + 1], widths[k])), b, act))
    return CnnModel(vocab, emb, chans, dense, output_activation, pad_length, 0)


def random_ids(rng, model, n_real=None):
    n = model.pad_length
    if n_real is None:
        n_real = int(rng.integers(1, n + 1))
    ids = np.zeros(n, dtype=np.int64)
    ids[:n_real] = rng.integers(1, len(model.vocab), size=n_real)
    return ids


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def toy_config():
    cfg = load_train_config(DATA / "toy_config.json")
    for key in ("model_out", "log_csv", "test_out"):
        cfg.pop(key, None)
    return cfg


@pytest.fixture(scope="session")
def trained_toy(toy_config):
    """Train the toy sentiment model once per session."""
    t0 = time.perf_counter()
    result, dataset, test_part = train_from_config(toy_config)
    return {
        "result": result,
        "model": result.model,
        "dataset": dataset,
        "test": test_part,
        "seconds": time.perf_counter() - t0,
    }
