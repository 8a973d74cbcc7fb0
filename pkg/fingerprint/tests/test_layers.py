import math

import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose, assert_array_equal

from fingerprint import layers
from fingerprint import tensor as tn
from fingerprint.exceptions import ShapeError
from fingerprint.layers import (
    Conv1dParams, DenseParams, LayerNormParams, MultiHeadParams, PositionalEmbeddingTable,
)
from fingerprint.optim import AdamState, adam_step
from fingerprint.tensor import Tensor


def _param(rng, *shape, scale=1.0):
    return Tensor(scale * rng.normal(size=shape), requires_grad=True)


def _heads(rng, model_dim, heads):
    d_k = model_dim // heads
    return MultiHeadParams(
        query=[_param(rng, model_dim, d_k) for _ in range(heads)],
        key=[_param(rng, model_dim, d_k) for _ in range(heads)],
        value=[_param(rng, model_dim, d_k) for _ in range(heads)],
        output=_param(rng, heads * d_k, model_dim),
    )


class AttentionTests(SimpleTestCase):
    def test_attention_rows_sum_to_one(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            steps, width = rng.integers(1, 8, size=2)
            q = Tensor(rng.normal(scale=3.0, size=(steps, width)))
            k = Tensor(rng.normal(scale=3.0, size=(rng.integers(1, 8), width)))
            weights = layers.attention_weights(q, k).values
            assert_allclose(weights.sum(axis=-1), np.ones(steps), atol=1e-6)
            self.assertTrue((weights >= 0).all())

    def test_multi_head_keeps_shape(self):
        rng = np.random.default_rng(1)
        x = Tensor(rng.normal(size=(2, 5, 16)))
        for heads in (1, 2, 4, 16):
            p = _heads(rng, 16, heads)
            self.assertEqual(p.d_k, 16 // heads)
            self.assertEqual(layers.multi_head(x, p).shape, (2, 5, 16))

    def test_attention_rejects_mismatched_keys_and_values(self):
        rng = np.random.default_rng(2)
        with self.assertRaises(ShapeError):
            layers.attention(Tensor(rng.normal(size=(3, 4))), Tensor(rng.normal(size=(5, 4))),
                             Tensor(rng.normal(size=(6, 4))))

    def test_multi_head_params_validate_head_shapes(self):
        rng = np.random.default_rng(3)
        with self.assertRaises(ShapeError):
            MultiHeadParams([_param(rng, 4, 2)], [_param(rng, 4, 3)], [_param(rng, 4, 2)], _param(rng, 2, 4))


class ConvolutionTests(SimpleTestCase):
    def test_same_padding_matches_direct_sum(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(7, 3))
        for width in (1, 2, 3, 5):
            p = Conv1dParams(_param(rng, 4, 3, width), _param(rng, 4))
            out = layers.conv1d(Tensor(x), p).values
            padded = np.pad(x, ((p.padding, width - 1 - p.padding), (0, 0)))
            expected = np.stack([
                np.einsum('wc,ocw->o', padded[t:t + width], p.kernel.values) + p.bias.values
                for t in range(7)
            ])
            self.assertEqual(out.shape, (7, 4))
            assert_allclose(out, expected, atol=1e-12)

    def test_wrong_channel_count(self):
        rng = np.random.default_rng(5)
        p = Conv1dParams(_param(rng, 4, 3, 3), _param(rng, 4))
        with self.assertRaises(ShapeError):
            layers.conv1d(Tensor(np.ones((6, 2))), p)


class NormalisationTests(SimpleTestCase):
    def test_layer_norm_standardises_features(self):
        x = Tensor(np.random.default_rng(6).normal(loc=5.0, scale=3.0, size=(4, 10)))
        p = LayerNormParams(layers.ones((10,)), layers.zeros((10,)))
        out = layers.layer_norm(x, p).values
        assert_allclose(out.mean(axis=-1), np.zeros(4), atol=1e-10)
        assert_allclose(out.var(axis=-1), np.ones(4), atol=1e-4)

    def test_positional_embedding_longer_than_table(self):
        table = PositionalEmbeddingTable(layers.zeros((4, 3)))
        self.assertEqual(layers.positional_embed(3, table).shape, (3, 3))
        with self.assertRaises(ShapeError):
            layers.positional_embed(5, table)

    def test_residual_shapes_must_agree(self):
        with self.assertRaises(ShapeError):
            layers.residual_add(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 4))))

    def test_feed_forward_must_chain_back(self):
        rng = np.random.default_rng(7)
        with self.assertRaises(ShapeError):
            layers.feed_forward(Tensor(np.ones((2, 4))), DenseParams(_param(rng, 4, 6), _param(rng, 6)),
                                DenseParams(_param(rng, 6, 5), _param(rng, 5)))

    def test_glorot_bounds(self):
        rng = np.random.default_rng(8)
        for shape in ((8, 4), (5, 3, 3)):
            limit = layers.glorot_limit(shape)
            t = layers.glorot_uniform(rng, shape)
            self.assertTrue(t.requires_grad)
            self.assertLessEqual(np.abs(t.values).max(), limit)


class LayerGradientTests(SimpleTestCase):
    """Central differences with step 1e-5 on 20 seeds per layer."""

    def check(self, build):
        for seed in range(20):
            fn, inputs = build(np.random.default_rng(seed))
            self.assertLess(tn.gradient_check(fn, inputs), 1e-4, f'seed {seed}')

    def test_conv1d(self):
        def build(rng):
            p = Conv1dParams(_param(rng, 3, 2, 3), _param(rng, 3))
            x = _param(rng, 5, 2)
            return (lambda inputs: tn.sum(tn.mul(layers.conv1d(inputs[0], p), layers.conv1d(inputs[0], p))),
                    [x, p.kernel, p.bias])
        self.check(build)

    def test_multi_head(self):
        def build(rng):
            p = _heads(rng, 4, 2)
            x = _param(rng, 3, 4)
            target = rng.normal(size=(3, 4))
            return (lambda inputs: tn.sum(tn.mul(layers.multi_head(inputs[0], p), target)),
                    [x, *p.query, *p.key, *p.value, p.output])
        self.check(build)

    def test_layer_norm(self):
        def build(rng):
            p = LayerNormParams(_param(rng, 5), _param(rng, 5))
            x = _param(rng, 3, 5)
            target = rng.normal(size=(3, 5))
            return lambda inputs: tn.sum(tn.mul(layers.layer_norm(inputs[0], p), target)), [x, p.gain, p.shift]
        self.check(build)

    def test_feed_forward_and_residual(self):
        def build(rng):
            d1 = DenseParams(_param(rng, 4, 6), _param(rng, 6))
            d2 = DenseParams(_param(rng, 6, 4), _param(rng, 4))
            x = _param(rng, 3, 4)
            target = rng.normal(size=(3, 4))

            def fn(inputs):
                out = layers.residual_add(inputs[0], layers.feed_forward(inputs[0], d1, d2))
                return tn.sum(tn.mul(out, target))
            return fn, [x, d1.weight, d1.bias, d2.weight, d2.bias]
        self.check(build)

    def test_positional_embed_and_dense(self):
        def build(rng):
            table = PositionalEmbeddingTable(_param(rng, 6, 3))
            p = DenseParams(_param(rng, 3, 2), _param(rng, 2))
            x = _param(rng, 4, 3)
            target = rng.normal(size=(2,))

            def fn(inputs):
                h = tn.add(inputs[0], layers.positional_embed(4, table))
                return tn.sum(tn.mul(layers.dense(tn.mean(h, axis=0), p), target))
            return fn, [x, table.table, p.weight, p.bias]
        self.check(build)


class AttentionOracleTests(SimpleTestCase):
    def test_single_position_returns_value(self):
        v = Tensor([[2.0, -1.0, 0.5]])
        weights = layers.attention_weights(Tensor([[0.3, 0.1]]), Tensor([[-2.0, 4.0]]))
        assert_array_equal(weights.values, [[1.0]])
        assert_allclose(layers.attention(Tensor([[0.3, 0.1]]), Tensor([[-2.0, 4.0]]), v).values, v.values)

    def test_zero_queries_average_the_values(self):
        rng = np.random.default_rng(9)
        k, v = Tensor(rng.normal(size=(4, 3))), Tensor(rng.normal(size=(4, 2)))
        q = Tensor(np.zeros((5, 3)))
        assert_allclose(layers.attention_weights(q, k).values, np.full((5, 4), 0.25), atol=1e-15)
        out = layers.attention(q, k, v).values
        assert_allclose(out, np.tile(v.values.mean(axis=0), (5, 1)), atol=1e-12)

    def test_two_steps_against_scalar_evaluation(self):
        q = Tensor([[1.0], [0.0]])
        k = Tensor([[1.0], [0.0]])
        v = Tensor([[1.0, 0.0], [0.0, 1.0]])
        e = math.exp(1.0)
        expected = [[e / (e + 1.0), 1.0 / (e + 1.0)], [0.5, 0.5]]
        assert_allclose(layers.attention(q, k, v).values, expected, rtol=1e-14)

    def test_one_head_with_identity_output_is_plain_attention(self):
        rng = np.random.default_rng(10)
        x = Tensor(rng.normal(size=(5, 4)))
        p = MultiHeadParams([_param(rng, 4, 4)], [_param(rng, 4, 4)], [_param(rng, 4, 4)], Tensor(np.eye(4)))
        expected = layers.attention(tn.matmul(x, p.query[0]), tn.matmul(x, p.key[0]), tn.matmul(x, p.value[0]))
        assert_allclose(layers.multi_head(x, p).values, expected.values, atol=1e-12)

    def test_two_heads_against_scalar_loops(self):
        x = [[0.5, -1.0], [2.0, 0.3]]
        wq = [[[0.2], [-0.4]], [[0.7], [0.1]]]
        wk = [[[-0.3], [0.5]], [[0.6], [-0.2]]]
        wv = [[[1.1], [0.4]], [[-0.5], [0.9]]]
        wo = [[0.3, -0.7], [0.8, 0.2]]

        def project(w, t):
            return x[t][0] * w[0][0] + x[t][1] * w[1][0]

        concat = [[0.0, 0.0], [0.0, 0.0]]
        for h in range(2):
            for t in range(2):
                scores = [project(wq[h], t) * project(wk[h], s) for s in range(2)]
                e = [math.exp(score) for score in scores]
                concat[t][h] = sum(e[s] / sum(e) * project(wv[h], s) for s in range(2))
        expected = [[sum(concat[t][c] * wo[c][j] for c in range(2)) for j in range(2)] for t in range(2)]

        p = MultiHeadParams([Tensor(w) for w in wq], [Tensor(w) for w in wk], [Tensor(w) for w in wv], Tensor(wo))
        assert_allclose(layers.multi_head(Tensor(x), p).values, expected, atol=1e-14)

    def test_batched_heads_match_single_windows(self):
        rng = np.random.default_rng(11)
        p = _heads(rng, 16, 16)
        x = rng.normal(size=(3, 7, 16))
        batch = layers.multi_head(Tensor(x), p).values
        for i in range(3):
            assert_allclose(batch[i], layers.multi_head(Tensor(x[i]), p).values, atol=1e-12)


class ConvolutionCaseTests(SimpleTestCase):
    def test_width_one_identity_kernel(self):
        x = np.random.default_rng(12).normal(size=(6, 3))
        p = Conv1dParams(Tensor(np.eye(3)[:, :, None]), Tensor(np.zeros(3)))
        assert_array_equal(layers.conv1d(Tensor(x), p).values, x)

    def test_constant_input_with_ones_kernel(self):
        p = Conv1dParams(Tensor(np.ones((2, 4, 3))), Tensor([0.5, -1.0]))
        out = layers.conv1d(Tensor(np.full((6, 4), 2.0)), p).values
        assert_allclose(out[1:-1], np.tile([3 * 4 * 2.0 + 0.5, 3 * 4 * 2.0 - 1.0], (4, 1)))

    def test_zero_input_gives_bias(self):
        rng = np.random.default_rng(13)
        p = Conv1dParams(_param(rng, 5, 2, 3), _param(rng, 5))
        out = layers.conv1d(Tensor(np.zeros((4, 2))), p).values
        assert_array_equal(out, np.tile(p.bias.values, (4, 1)))


class NormalisationCaseTests(SimpleTestCase):
    def test_constant_row_is_zero(self):
        p = LayerNormParams(layers.ones((4,)), layers.zeros((4,)))
        assert_array_equal(layers.layer_norm(Tensor(np.full((2, 4), 3.5)), p).values, np.zeros((2, 4)))

    def test_two_values_map_to_minus_one_and_one(self):
        p = LayerNormParams(layers.ones((2,)), layers.zeros((2,)), epsilon=1e-12)
        assert_allclose(layers.layer_norm(Tensor([[1.0, 3.0]]), p).values, [[-1.0, 1.0]], atol=1e-10)

    def test_random_row_against_two_pass_statistics(self):
        row = np.random.default_rng(14).normal(size=7)
        gain, shift = np.linspace(0.5, 2.0, 7), np.linspace(-1.0, 1.0, 7)
        mean = sum(row) / 7
        variance = sum((r - mean) ** 2 for r in row) / 7
        expected = (row - mean) / math.sqrt(variance + 1e-5) * gain + shift
        p = LayerNormParams(Tensor(gain), Tensor(shift))
        assert_allclose(layers.layer_norm(Tensor(row[None, :]), p).values[0], expected, atol=1e-12)

    def test_normalised_features_ignore_affine_rescaling(self):
        x = np.random.default_rng(15).normal(size=(3, 6))
        base = layers.normalize_features(Tensor(x), 1e-12).values
        for a, b in ((3.0, -7.0), (0.25, 100.0)):
            assert_allclose(layers.normalize_features(Tensor(a * x + b), 1e-12).values, base, atol=1e-8)


class PositionalTableTests(SimpleTestCase):
    def test_gradient_and_adam_step_touch_only_used_rows(self):
        rng = np.random.default_rng(16)
        table = PositionalEmbeddingTable(_param(rng, 6, 3))
        assert_array_equal(layers.positional_embed(4, table).values, layers.positional_embed(4, table).values)
        tn.backward(tn.sum(tn.mul(layers.positional_embed(4, table), rng.normal(size=(4, 3)))))
        self.assertTrue((table.table.grad[:4] != 0).all())
        assert_array_equal(table.table.grad[4:], 0.0)

        before = table.table.values.copy()
        adam_step({'table': table.table.values}, {'table': table.table.grad}, AdamState())
        self.assertTrue((table.table.values[:4] != before[:4]).all())
        assert_array_equal(table.table.values[4:], before[4:])


class FeedForwardCaseTests(SimpleTestCase):
    def test_zero_weights_give_zero(self):
        d1 = DenseParams(layers.zeros((4, 6)), layers.zeros((6,)))
        d2 = DenseParams(layers.zeros((6, 4)), layers.zeros((4,)))
        x = Tensor(np.random.default_rng(17).normal(size=(3, 4)))
        assert_array_equal(layers.feed_forward(x, d1, d2).values, np.zeros((3, 4)))

    def test_identity_weights_pass_positive_input(self):
        d1 = DenseParams(Tensor(np.eye(4)), Tensor(np.zeros(4)))
        d2 = DenseParams(Tensor(np.eye(4)), Tensor(np.zeros(4)))
        x = np.random.default_rng(18).uniform(0.1, 2.0, size=(3, 4))
        assert_array_equal(layers.feed_forward(Tensor(x), d1, d2).values, x)

    def test_residual_identities(self):
        x = Tensor(np.random.default_rng(19).normal(size=(2, 3)))
        zeros = Tensor(np.zeros((2, 3)))
        assert_array_equal(layers.residual_add(x, zeros).values, x.values)
        assert_array_equal(layers.residual_add(zeros, x).values, x.values)
