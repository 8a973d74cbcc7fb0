import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose, assert_array_equal

from fingerprint import tensor as tn
from fingerprint.exceptions import NumericError, ShapeError
from fingerprint.tensor import Graph, Tensor


def _param(rng, *shape):
    return Tensor(rng.normal(size=shape), requires_grad=True)


class TensorConstructionTests(SimpleTestCase):
    def test_values_are_float64_copies(self):
        source = np.arange(6).reshape(2, 3)
        t = Tensor(source)
        self.assertEqual(t.values.dtype, np.float64)
        source[0, 0] = 99
        self.assertEqual(t.values[0, 0], 0.0)

    def test_zero_extent_rejected(self):
        with self.assertRaises(ShapeError):
            Tensor(np.zeros((0, 3)))

    def test_non_finite_rejected(self):
        with self.assertRaises(NumericError):
            Tensor([1.0, np.nan])

    def test_node_ids_are_unique(self):
        a, b = Tensor([1.0]), Tensor([1.0])
        self.assertNotEqual(a.node_id, b.node_id)


class OperationTests(SimpleTestCase):
    def test_matmul_shape_error_names_both_shapes(self):
        with self.assertRaises(ShapeError) as ctx:
            tn.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 5))))
        self.assertIn('(2, 3)', str(ctx.exception))
        self.assertIn('(4, 5)', str(ctx.exception))

    def test_overflow_raises_numeric_error(self):
        with self.assertRaises(NumericError):
            tn.exp(Tensor([1000.0]))

    def test_softmax_rows_sum_to_one(self):
        x = Tensor(np.random.default_rng(0).normal(scale=50.0, size=(4, 7)))
        assert_allclose(tn.softmax_lastdim(x).values.sum(axis=-1), np.ones(4), atol=1e-12)

    def test_log_softmax_matches_log_of_softmax(self):
        x = Tensor(np.random.default_rng(1).normal(size=(3, 5)))
        assert_allclose(tn.log_softmax_lastdim(x).values, np.log(tn.softmax_lastdim(x).values), atol=1e-12)

    def test_power_rejects_non_positive_base_for_fractional_exponent(self):
        with self.assertRaises(NumericError):
            tn.power(Tensor([0.0, 1.0]), -0.5)

    def test_operators(self):
        a, b = Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]])
        assert_array_equal((a @ b).values, [[11.0]])
        assert_array_equal((a + a - a * 2.0).values, [[0.0, 0.0]])
        assert_array_equal((-a).values, [[-1.0, -2.0]])

    def test_permute_then_inverse_is_identity(self):
        x = Tensor(np.arange(24.0).reshape(2, 3, 4))
        back = tn.permute(tn.permute(x, (2, 0, 1)), (1, 2, 0))
        assert_array_equal(back.values, x.values)


class BackwardTests(SimpleTestCase):
    def test_broadcast_gradient_reduces_to_input_shape(self):
        x = Tensor(np.ones((4, 3)), requires_grad=True)
        bias = Tensor(np.zeros(3), requires_grad=True)
        tn.backward(tn.sum(tn.add(x, bias)))
        assert_array_equal(bias.grad, [4.0, 4.0, 4.0])
        assert_array_equal(x.grad, np.ones((4, 3)))

    def test_repeated_index_accumulates(self):
        x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
        tn.backward(tn.sum(tn.index(x, np.array([0, 0, 1]))))
        assert_array_equal(x.grad, [2.0, 1.0, 0.0])

    def test_shared_input_gradients_add(self):
        x = Tensor([3.0], requires_grad=True)
        tn.backward(tn.sum(tn.mul(x, x)))
        assert_array_equal(x.grad, [6.0])

    def test_quadratic_and_matmul_cases(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        tn.backward(tn.sum(tn.mul(x, x)))
        assert_array_equal(x.grad, [2.0, 4.0])

        a = Tensor([[1.0, 2.0], [3.0, 4.0]], requires_grad=True)
        product = tn.matmul(a, Tensor(np.zeros((2, 1))))
        assert_array_equal(product.values, [[0.0], [0.0]])
        tn.backward(tn.sum(product))
        assert_array_equal(a.grad, np.zeros((2, 2)))
        assert_array_equal(tn.matmul(a.values, Tensor([[1.0], [1.0]])).values, [[3.0], [7.0]])

    def test_repeated_backward_is_bit_identical(self):
        rng = np.random.default_rng(5)
        w_values, x_values = rng.normal(size=(3, 4)), rng.normal(size=(2, 5, 3))

        def run():
            w = Tensor(w_values, requires_grad=True)
            x = Tensor(x_values, requires_grad=True)
            h = tn.softmax_lastdim(tn.matmul(x, w))
            tn.backward(tn.mean(tn.mul(tn.matmul(h, tn.transpose(w)), x)))
            return w.grad, x.grad

        first, second = run(), run()
        for a, b in zip(first, second):
            assert_array_equal(a, b)

    def test_non_scalar_loss_rejected(self):
        with self.assertRaises(ShapeError):
            tn.backward(tn.scale(Tensor([1.0, 2.0], requires_grad=True), 2.0))

    def test_inference_mode_records_nothing(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with tn.inference_mode():
            y = tn.sum(tn.mul(x, x))
        self.assertFalse(y.requires_grad)
        self.assertEqual(y.inputs, ())
        self.assertTrue(tn.sum(x).requires_grad)

    def test_graph_is_topologically_ordered(self):
        rng = np.random.default_rng(2)
        w, x = _param(rng, 3, 2), _param(rng, 4, 3)
        loss = tn.mean(tn.relu(tn.matmul(x, w)))
        graph = Graph.trace(loss)
        position = {node.node_id: i for i, node in enumerate(graph.nodes)}
        for record in graph.records:
            for parent in record.inputs:
                self.assertLess(position[parent], position[record.output])
        self.assertEqual([r.kind for r in graph.records], ['matmul', 'relu', 'mean'])
        self.assertEqual({t.node_id for t in graph.leaves()}, {w.node_id, x.node_id})

    def test_elementwise_and_layout_gradients(self):
        for seed in range(20):
            rng = np.random.default_rng(seed)
            a, b = _param(rng, 2, 3, 4), _param(rng, 4, 5)

            def fn(inputs):
                x, y = inputs
                h = tn.matmul(tn.exp(tn.scale(x, 0.3)), y)
                h = tn.concat_lastdim([tn.permute(h, (0, 2, 1)), tn.reshape(h, (2, 5, 3))])
                h = tn.transpose(tn.pad_rows(h, 1, 2))
                return tn.sum(tn.log_softmax_lastdim(tn.stack([h, tn.power(tn.mul(h, h), 1.5)])))

            self.assertLess(tn.gradient_check(fn, [a, b]), 1e-4)

    def test_softmax_and_index_gradients(self):
        for seed in range(20):
            rng = np.random.default_rng(seed)
            x = _param(rng, 3, 4)
            target = rng.normal(size=(2, 4))

            def fn(inputs):
                picked = tn.index(inputs[0], np.array([2, 0]))
                return tn.mean(tn.mul(tn.softmax_lastdim(picked), target))

            self.assertLess(tn.gradient_check(fn, [x]), 1e-4)
