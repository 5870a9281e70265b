import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cnnexplain.errors import (
    ForwardOverflowError,
    ModelError,
    OutOfVocabularyError,
    SequenceTooShortError,
)
from cnnexplain.model import (
    CnnModel,
    ConvChannel,
    DenseLayer,
    convolve,
    fcnn_forward,
    forward,
    global_max_pool,
)

from conftest import make_random_model, random_ids


def tiny_model(filters, dense_w, dense_b, emb=None, out="softmax", pad_length=4, kernel=1):
    emb = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 2.0], [-1.0, 0.5]]) if emb is None else emb
    vocab = ["<pad>", "<unk>", "a", "b"][: len(emb)]
    return CnnModel(
        vocab, emb, [ConvChannel(kernel, filters)], [DenseLayer(dense_w, dense_b)], out, pad_length
    )


class TestConvolve:
    def test_zero_filter_gives_zeros(self, rng):
        ch = ConvChannel(2, np.zeros((1, 2, 3)))
        out = convolve(rng.normal(size=(5, 3)), ch)
        assert out.shape == (4, 1)
        assert np.all(out == 0.0)

    def test_single_word_dot_product(self):
        ch = ConvChannel(1, np.array([[[3.0, 4.0]]]))
        assert convolve(np.array([[1.0, 2.0]]), ch)[0, 0] == 11.0

    def test_bigram_rectified(self):
        # raw window scores: 1 + (-2) = -1, (-2) + 3 = 1
        ch = ConvChannel(2, np.array([[[1.0], [1.0]]]))
        out = convolve(np.array([[1.0], [-2.0], [3.0]]), ch)
        np.testing.assert_array_equal(out[:, 0], [0.0, 1.0])

    def test_too_short(self):
        ch = ConvChannel(3, np.ones((1, 3, 2)))
        with pytest.raises(SequenceTooShortError, match="sequence shorter than kernel"):
            convolve(np.ones((2, 2)), ch)


class TestGlobalMaxPool:
    @pytest.mark.parametrize(
        "column, value, index",
        [
            ([0.2, 0.7, 0.1], 0.7, 1),
            ([0.0, 0.0, 0.0], 0.0, 0),
            ([0.5, 0.5, 0.3], 0.5, 0),
        ],
    )
    def test_examples(self, column, value, index):
        pooled, idx = global_max_pool(np.array(column)[:, None])
        assert pooled[0] == value
        assert idx[0] == index

    def test_empty(self):
        with pytest.raises(ModelError):
            global_max_pool(np.zeros((0, 3)))


class TestFcnnForward:
    def _model(self, w, b, act="identity", out="softmax"):
        d = len(w[0])
        emb = np.zeros((2, 1))
        chans = [ConvChannel(1, np.ones((d, 1, 1)))]
        hidden = DenseLayer(w, b, act)
        top = DenseLayer(np.eye(len(w)), np.zeros(len(w)))
        return CnnModel(["<pad>", "x"], emb, chans, [hidden, top], out, 3)

    def test_identity_layer(self):
        m = self._model(np.eye(2), np.zeros(2))
        _, acts, _ = fcnn_forward(m, np.array([0.3, 0.9]))
        np.testing.assert_array_equal(acts[1], [0.3, 0.9])

    def test_all_inhibited_logistic(self):
        m = tiny_model(np.ones((2, 1, 2)), np.ones((2, 2)), np.zeros(2), out="logistic")
        _, _, out = fcnn_forward(m, np.array([4.0, 2.0]), np.array([True, True]))
        np.testing.assert_array_equal(out, [0.5, 0.5])

    def test_hand_matrix_multiply(self):
        m = self._model(np.array([[1.0, -1.0], [2.0, 0.0]]), np.array([0.5, -0.5]))
        pre, _, _ = fcnn_forward(m, np.array([1.0, 1.0]))
        np.testing.assert_array_equal(pre[0], [0.5, 1.5])

    def test_overflow(self):
        m = tiny_model(np.ones((2, 1, 2)), np.full((2, 2), 1e308), np.zeros(2))
        with pytest.raises(ForwardOverflowError, match="numeric overflow in forward pass"):
            fcnn_forward(m, np.array([1e308, 1e308]))


class TestForward:
    def test_zero_filter(self):
        emb = np.array([[0.0, 0.0], [0.3, -0.2], [1.0, 2.0]])
        b = np.array([0.2, -0.1])
        m = tiny_model(np.zeros((1, 1, 2)), np.ones((2, 1)), b, emb=emb)
        tr = forward(m, [2, 1, 0, 0])
        np.testing.assert_array_equal(tr.pooled, [0.0])
        expected = np.exp(b) / np.exp(b).sum()
        np.testing.assert_allclose(tr.output, expected, rtol=0, atol=1e-15)

    def test_deterministic(self, rng):
        m = make_random_model(rng)
        ids = random_ids(rng, m)
        a, b = forward(m, ids), forward(m, ids)
        for x, y in zip(a.activations + a.feature_maps, b.activations + b.feature_maps):
            assert x.tobytes() == y.tobytes()
        assert a.argmax_index.tobytes() == b.argmax_index.tobytes()

    def test_toy_end_to_end(self):
        # embeddings a=(1,2), b=(-1,0.5); filters f1=(3,4), f2=(-1,1)
        # f1 over [a, b, pad, pad]: 11, -1 -> 0, 0, 0 -> max 11 at 0
        # f2: 1, 1.5, 0, 0 -> max 1.5 at 1
        filters = np.array([[[3.0, 4.0]], [[-1.0, 1.0]]])
        w = np.array([[0.1, 0.2], [-0.3, 0.4]])
        b = np.array([0.0, 0.1])
        m = tiny_model(filters, w, b)
        tr = forward(m, [2, 3, 0, 0])
        assert tr.argmax_index.tolist() == [0, 1]
        np.testing.assert_array_equal(tr.pooled, [11.0, 1.5])
        z1 = 0.1 * 11 + 0.2 * 1.5
        z2 = -0.3 * 11 + 0.4 * 1.5 + 0.1
        e1, e2 = math.exp(z1), math.exp(z2)
        np.testing.assert_allclose(tr.output, [e1 / (e1 + e2), e2 / (e1 + e2)], rtol=1e-14)
        assert tr.predicted_class == 0

    def test_out_of_vocabulary(self):
        m = tiny_model(np.ones((1, 1, 2)), np.ones((2, 1)), np.zeros(2))
        with pytest.raises(OutOfVocabularyError, match="out-of-vocabulary id"):
            forward(m, [2, 9, 0, 0])

    def test_wrong_length(self):
        m = tiny_model(np.ones((1, 1, 2)), np.ones((2, 1)), np.zeros(2))
        with pytest.raises(ModelError):
            forward(m, [2, 3])


class TestModelInvariants:
    def test_filter_width_must_match(self):
        with pytest.raises(ModelError, match="filter width"):
            tiny_model(np.ones((1, 1, 3)), np.ones((2, 1)), np.zeros(2))

    def test_dense_input_must_match_filters(self):
        with pytest.raises(ModelError, match="input size"):
            tiny_model(np.ones((2, 1, 2)), np.ones((2, 3)), np.zeros(2))

    def test_needs_two_classes(self):
        with pytest.raises(ModelError, match="at least 2 classes"):
            tiny_model(np.ones((1, 1, 2)), np.ones((1, 1)), np.zeros(1))

    def test_kernel_longer_than_pad_length(self):
        with pytest.raises(ModelError, match="pad_length"):
            tiny_model(np.ones((1, 5, 2)), np.ones((2, 1)), np.zeros(2), kernel=5)

    def test_pad_row_must_be_zero(self):
        emb = np.ones((3, 2))
        with pytest.raises(ModelError, match="pad embedding"):
            tiny_model(np.ones((1, 1, 2)), np.ones((2, 1)), np.zeros(2), emb=emb)

    def test_parameters_read_only(self, rng):
        m = make_random_model(rng)
        with pytest.raises(ValueError):
            m.embedding[1, 0] = 5.0


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_pooled_matches_rescan(seed):
    rng = np.random.default_rng(seed)
    m = make_random_model(rng, channels=((1, 2), (2, 3), (3, 2)))
    tr = forward(m, random_ids(rng, m))
    assert np.all(tr.pooled >= 0)
    j = 0
    for k, ch in enumerate(m.channels):
        l = ch.kernel_size
        for f in ch.filters:
            scores = [
                max(0.0, float(np.sum(tr.embedded[i:i + l] * f)))
                for i in range(m.pad_length - l + 1)
            ]
            np.testing.assert_allclose(tr.pooled[j], max(scores), rtol=1e-12, atol=1e-12)
            assert tr.pooled[j] == tr.feature_maps[k][tr.argmax_index[j], j - m.channel_offsets[k]]
            j += 1
    if m.output_activation == "softmax":
        assert abs(tr.output.sum() - 1.0) <= 1e-9
    assert tr.predicted_class == int(np.argmax(tr.output))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_composition_consistency(seed):
    rng = np.random.default_rng(seed)
    m = make_random_model(rng)
    ids = random_ids(rng, m)
    tr = forward(m, ids)
    pooled = []
    for ch in m.channels:
        pooled.append(global_max_pool(convolve(m.embedding[ids], ch))[0])
    _, _, out = fcnn_forward(m, np.concatenate(pooled), np.zeros(m.n_filters, dtype=bool))
    assert out.tobytes() == tr.output.tobytes()


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_mask_equals_zeroed_weights(seed):
    rng = np.random.default_rng(seed)
    m = make_random_model(rng)
    tr = forward(m, random_ids(rng, m))
    mask = rng.random(m.n_filters) < 0.5
    _, _, masked = fcnn_forward(m, tr.pooled, mask)

    w = m.dense_layers[0].weights.copy()
    w[:, mask] = 0.0
    layers = (DenseLayer(w, m.dense_layers[0].biases, m.dense_layers[0].activation),
              *m.dense_layers[1:])
    zeroed = CnnModel(m.vocab, m.embedding, m.channels, layers, m.output_activation,
                      m.pad_length, m.pad_token_id)
    _, _, direct = fcnn_forward(zeroed, tr.pooled)
    np.testing.assert_allclose(masked, direct, rtol=0, atol=1e-12)
