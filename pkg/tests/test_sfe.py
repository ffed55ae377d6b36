import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sfegacn.data import LabeledSet
from sfegacn.exceptions import ConfigError, RangeError, SchemaError
from sfegacn.nn import TrainConfig
from sfegacn.sfe import (ClampWarning, Quantizer, SessionFeatureEmbedding, ShortColumnWarning,
                         binarize_column, bit_width, build_cbow_dataset, compute_bit_widths,
                         decode_bits, embed, encode_bits, fit_quantizers, train_embedding)

FAST = TrainConfig(learning_rate=0.5, batch_size=16, epochs=3, seed=0)


@pytest.mark.parametrize("top, width", [(10, 4), (0, 1), (255, 8), (1, 1), (256, 9)])
def test_bit_width(top, width):
    assert bit_width(top) == width


def test_compute_bit_widths_uses_quantized_max():
    X = np.array([[0.0, 5.0], [10.0, 5.0], [3.0, 260.0]])
    # second column offset 5 -> max 255
    assert compute_bit_widths(X) == [4, 8]


def test_binarize_examples():
    assert encode_bits([5], 4).tolist() == [[0, 1, 0, 1]]
    assert encode_bits([0], 3).tolist() == [[0, 0, 0]]
    bits, bad = binarize_column([1, 2, 3], Quantizer(0.0), 2)
    assert bits.tolist() == [[0, 1], [1, 0], [1, 1]] and bad == 0


def test_binarize_out_of_range():
    with pytest.raises(RangeError, match="row 1"):
        binarize_column([1, 9], Quantizer(0.0), 3)
    bits, bad = binarize_column([1, 9, -2], Quantizer(0.0), 3, clamp=True)
    assert bad == 2
    assert decode_bits(bits).tolist() == [1, 7, 0]


def test_roundtrip_ten_thousand_integers():
    rng = np.random.default_rng(0)
    values = rng.integers(0, 2**40, size=10_000)
    width = bit_width(values.max())
    np.testing.assert_array_equal(decode_bits(encode_bits(values, width)), values)


@given(st.lists(st.integers(0, 2**50), min_size=1, max_size=50))
def test_roundtrip_property(values):
    width = bit_width(max(values))
    assert decode_bits(encode_bits(values, width)).tolist() == values


def test_quantizer_subtracts_min_and_rounds():
    X = np.array([[2.4], [5.6], [3.0]])
    (q,) = fit_quantizers(X)
    assert q.offset == 2.4 and q.scale == 1.0
    np.testing.assert_array_equal(q(X[:, 0]), [0, 3, 1])


def test_quantizer_max_bits_scales_range():
    X = np.array([[0.0], [1e6], [5e5]])
    (q,) = fit_quantizers(X, max_bits=4)
    assert q(X[:, 0]).max() == 15
    assert compute_bit_widths(X, [q]) == [4]


class TestCbow:
    rows = np.arange(1, 6, dtype=float)[:, None] * np.array([[1.0, 10.0]])

    def test_window_one(self):
        X, Y = build_cbow_dataset(self.rows[:4], 1)
        l1, l2, l3, l4 = self.rows[:4]
        np.testing.assert_array_equal(X, [l1 + l3, l2 + l4])
        np.testing.assert_array_equal(Y, [l2, l3])

    def test_window_two(self):
        X, Y = build_cbow_dataset(self.rows, 2)
        l1, l2, l3, l4, l5 = self.rows
        np.testing.assert_array_equal(X, [l1 + l2 + l4 + l5])
        np.testing.assert_array_equal(Y, [l3])

    def test_too_short(self):
        with pytest.warns(ShortColumnWarning):
            X, Y = build_cbow_dataset(self.rows[:2], 1)
        assert X.shape == (0, 2) and Y.shape == (0, 2)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 30), st.integers(1, 5))
    def test_size_and_brute_force(self, t, c):
        rng = np.random.default_rng(t * 7 + c)
        bits = rng.integers(0, 2, size=(t, 3)).astype(float)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ShortColumnWarning)
            X, Y = build_cbow_dataset(bits, c)
        assert len(X) == max(0, t - 2 * c)
        for k, j in enumerate(range(c, t - c)):
            ctx = sum(bits[i] for i in range(j - c, j + c + 1) if i != j)
            np.testing.assert_array_equal(X[k], ctx)
            np.testing.assert_array_equal(Y[k], bits[j])


@pytest.fixture(scope="module")
def counts():
    rng = np.random.default_rng(0)
    return np.rint(np.exp(rng.normal(2.0, 1.0, size=(200, 3))))


def test_model_shapes_and_determinism(counts):
    a = train_embedding(counts, 4, 2, FAST)
    b = train_embedding(counts, 4, 2, FAST)
    assert [P.shape for P in a.projections] == [(v, 4) for v in a.bit_widths]
    for pa, pb in zip(a.projections, b.projections):
        np.testing.assert_array_equal(pa, pb)


def test_training_loss_falls(counts):
    model = train_embedding(counts[:, :1], 4, 2, TrainConfig(0.5, 16, 50, 0))
    curve = model.loss_curves[0]
    assert len(curve) == 50 and curve[-1] < curve[0]


def test_embed_shape_and_zero_rows():
    X = np.array([[0.0, 0.0], [3.0, 1.0], [0.0, 0.0], [7.0, 2.0], [1.0, 0.0], [2.0, 2.0]])
    model = train_embedding(X, 4, 1, FAST)
    E = embed(X[:3], model)
    assert E.shape == (3, 8)
    # both column minima are 0, so zero rows encode to zero bits
    np.testing.assert_array_equal(E[0], 0.0)
    np.testing.assert_array_equal(E[0], E[2])


def test_embed_is_linear_per_block(counts):
    model = train_embedding(counts, 3, 2, FAST)
    rng = np.random.default_rng(1)
    a = rng.integers(0, 2, size=(5, model.bit_widths[0])).astype(float)
    b = rng.integers(0, 2, size=(5, model.bit_widths[0])).astype(float)
    W = model.projections[0]
    np.testing.assert_allclose(a @ W + b @ W, (a + b) @ W, atol=1e-12)


def test_embed_clamps_unseen_values(counts):
    model = train_embedding(counts, 2, 2, FAST)
    unseen = counts[:4].copy()
    unseen[0, 0] = 1e9
    unseen[1, 1] = -50
    with pytest.warns(ClampWarning, match="2 values"):
        E = embed(unseen, model)
    assert E.shape == (4, 6) and np.all(np.isfinite(E))
    with pytest.raises(RangeError):
        embed(unseen, model, clamp=False)


def test_embed_schema_mismatch(counts):
    model = train_embedding(counts, 2, 2, FAST)
    with pytest.raises(SchemaError):
        embed(counts[:, :2], model)


def test_embed_labeled_set_keeps_labels(counts):
    data = LabeledSet(counts[:10], ["x"] * 10)
    model = train_embedding(data, 2, 2, FAST)
    out = embed(data, model)
    assert out.columns[:3] == ["e0_0", "e0_1", "e1_0"]
    assert list(out.labels) == ["x"] * 10


@pytest.mark.parametrize("kw", [dict(embedding_dim=0), dict(window=0)])
def test_bad_settings(counts, kw):
    args = dict(embedding_dim=2, window=2) | kw
    with pytest.raises(ConfigError):
        train_embedding(counts, args["embedding_dim"], args["window"], FAST)


def test_transformer_api(counts):
    sfe = SessionFeatureEmbedding(embedding_dim=2, window=1, epochs=2)
    E = sfe.fit_transform(counts)
    assert E.shape == (200, 6)
    assert list(sfe.get_feature_names_out())[:2] == ["e0_0", "e0_1"]
    assert sfe.get_params()["embedding_dim"] == 2
