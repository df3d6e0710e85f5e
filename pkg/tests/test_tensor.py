import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gpt_acn import tensor as T
from conftest import assert_grads_close


def leaf(data):
    return T.Tensor(data, requires_grad=True)


class TestMatmul:
    def test_identity(self):
        a = T.Tensor(np.eye(2))
        b = T.Tensor([[1.0, 2.0], [3.0, 4.0]])
        assert np.array_equal(T.matmul(a, b).data, b.data)

    def test_zero(self):
        z = T.Tensor(np.zeros((2, 2)))
        b = T.Tensor([[1.0, 2.0], [3.0, 4.0]])
        assert np.array_equal(T.matmul(z, b).data, np.zeros((2, 2)))

    def test_hand_case(self):
        a = T.Tensor([[1.0, 2.0], [3.0, 4.0]])
        b = T.Tensor([[5.0], [6.0]])
        assert np.array_equal(T.matmul(a, b).data, [[17.0], [39.0]])

    def test_shape_mismatch_names_shapes(self):
        with pytest.raises(T.ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
            T.matmul(T.Tensor(np.zeros((2, 3))), T.Tensor(np.zeros((2, 3))))


class TestSoftmax:
    def test_uniform(self):
        out = T.softmax(T.Tensor([0.0, 0.0, 0.0]))
        assert np.allclose(out.data, [1 / 3] * 3, atol=1e-12)

    def test_shift_invariance(self):
        x = np.array([0.3, -1.2, 4.0])
        a = T.softmax(T.Tensor(x)).data
        b = T.softmax(T.Tensor(x + 123.0)).data
        assert np.allclose(a, b, atol=1e-12)

    def test_hand_case(self):
        out = T.softmax(T.Tensor([1.0, 2.0]))
        assert np.allclose(out.data, [0.26894, 0.73106], atol=1e-5)

    @given(st.lists(st.floats(min_value=-50, max_value=50), min_size=1, max_size=20))
    @settings(max_examples=200, deadline=None)
    def test_rows_sum_to_one(self, xs):
        out = T.softmax(T.Tensor(xs))
        assert abs(out.data.sum() - 1.0) < 1e-9
        assert (out.data >= 0).all()


class TestLayerNorm:
    def test_constant_input_zero(self):
        g, b = T.Tensor(np.ones(4)), T.Tensor(np.zeros(4))
        out = T.layer_norm(T.Tensor(np.full(4, 3.0)), g, b)
        assert np.allclose(out.data, 0.0, atol=1e-9)

    def test_constant_input_beta(self):
        g, b = T.Tensor(np.ones(4)), T.Tensor(np.full(4, 2.5))
        out = T.layer_norm(T.Tensor(np.full(4, 3.0)), g, b)
        assert np.allclose(out.data, 2.5, atol=1e-9)

    def test_hand_case(self):
        g, b = T.Tensor(np.ones(2)), T.Tensor(np.zeros(2))
        out = T.layer_norm(T.Tensor([1.0, 3.0]), g, b, eps=1e-12)
        assert np.allclose(out.data, [-1.0, 1.0], atol=1e-6)


class TestElementwise:
    def test_relu(self):
        out = T.relu(T.Tensor([-1.0, 2.0]))
        assert np.array_equal(out.data, [0.0, 2.0])

    def test_sigmoid_zero(self):
        assert T.sigmoid(T.Tensor(0.0)).item() == 0.5

    def test_sigmoid_ln3(self):
        assert abs(T.sigmoid(T.Tensor(math.log(3))).item() - 0.75) < 1e-9

    def test_broadcast_bias(self):
        out = T.add(T.Tensor(np.zeros((3, 2))), T.Tensor([1.0, 2.0]))
        assert np.array_equal(out.data, np.tile([1.0, 2.0], (3, 1)))

    def test_incompatible_shapes(self):
        with pytest.raises(T.ShapeError):
            T.add(T.Tensor(np.zeros(3)), T.Tensor(np.zeros(4)))


class TestMaskedCrossEntropy:
    def test_uniform_logits(self):
        v = 7
        logits = T.Tensor(np.zeros((3, v)))
        loss = T.masked_cross_entropy(logits, [1, 2, 3], [1, 1, 1])
        assert abs(loss.item() - math.log(v)) < 1e-12

    def test_masked_position_ignored(self):
        logits = T.Tensor(np.random.default_rng(0).normal(size=(4, 5)))
        a = T.masked_cross_entropy(logits, [0, 1, 2, 3], [1, 0, 1, 1]).item()
        b = T.masked_cross_entropy(logits, [0, 4, 2, 3], [1, 0, 1, 1]).item()
        assert a == b

    def test_hand_case(self):
        logits = T.Tensor([[math.log(3), 0.0], [0.0, 0.0]])
        loss = T.masked_cross_entropy(logits, [0, 1], [1, 1])
        expected = (-math.log(0.75) - math.log(0.5)) / 2
        assert abs(loss.item() - expected) < 1e-9

    def test_empty_mask_raises(self):
        with pytest.raises(T.EmptyMaskError):
            T.masked_cross_entropy(T.Tensor(np.zeros((2, 3))), [0, 1], [0, 0])

    def test_matches_manual_aggregation(self):
        rng = np.random.default_rng(3)
        logits = rng.normal(size=(6, 5))
        targets = rng.integers(0, 5, size=6)
        mask = np.array([1, 0, 1, 1, 0, 1])
        loss = T.masked_cross_entropy(T.Tensor(logits), targets, mask).item()
        manual = 0.0
        for i in range(6):
            if mask[i]:
                p = np.exp(logits[i]) / np.exp(logits[i]).sum()
                manual += -math.log(p[targets[i]])
        manual /= mask.sum()
        assert abs(loss - manual) < 1e-12


class TestBackward:
    def test_square_sum(self):
        x = leaf([1.0, 2.0])
        with T.ComputationRecord():
            loss = T.tsum(T.mul(x, x))
            T.backward(loss)
        assert np.array_equal(x.grad, [2.0, 4.0])

    def test_frozen_leaf_gets_no_grad(self):
        x = leaf([1.0, 2.0])
        w = T.Tensor([3.0, 4.0], requires_grad=False)
        with T.ComputationRecord():
            loss = T.tsum(T.mul(x, w))
            T.backward(loss)
        assert w.grad is None
        assert x.grad is not None

    def test_non_scalar_raises(self):
        x = leaf([1.0, 2.0])
        with T.ComputationRecord():
            y = T.mul(x, x)
            with pytest.raises(T.ShapeError):
                T.backward(y)

    def test_deterministic(self):
        def run():
            x = leaf(np.linspace(-1, 1, 6).reshape(2, 3))
            w = leaf(np.linspace(0.5, 2.0, 6).reshape(3, 2))
            with T.ComputationRecord():
                loss = T.tsum(T.softmax(T.matmul(x, w)))
                T.backward(loss)
            return x.grad.copy(), w.grad.copy()

        g1, g2 = run(), run()
        assert np.array_equal(g1[0], g2[0]) and np.array_equal(g1[1], g2[1])


class TestGradientOracle:
    """Every differentiable op against central finite differences."""

    @pytest.mark.parametrize("seed", range(20))
    def test_op_grads(self, seed):
        rng = np.random.default_rng(seed)
        a = leaf(rng.normal(size=(3, 4)))
        b = leaf(rng.normal(size=(4, 2)))
        gamma = leaf(rng.normal(size=4) + 1.5)
        beta = leaf(rng.normal(size=4))
        bias = leaf(rng.normal(size=2))
        targets = rng.integers(0, 2, size=3)
        mask = np.array([1, 1, 0])

        def loss_fn():
            h = T.layer_norm(a, gamma, beta)
            h = T.relu(h)
            z = T.add(T.matmul(h, b), bias)
            s = T.sigmoid(z)
            p = T.softmax(z, axis=-1)
            l1 = T.masked_cross_entropy(z, targets, mask)
            l2 = T.tmean(T.mul(s, s))
            l3 = T.tsum(T.log(T.add(p, 1e-3)))
            return T.add(T.add(l1, l2), T.mul(l3, 0.1))

        assert_grads_close(loss_fn, [a, b, gamma, beta, bias])

    @pytest.mark.parametrize("seed", range(5))
    def test_indexing_op_grads(self, seed):
        rng = np.random.default_rng(100 + seed)
        table = leaf(rng.normal(size=(6, 3)))
        w = leaf(rng.normal(size=(4, 4)))
        ids = rng.integers(0, 6, size=4)

        def loss_fn():
            e = T.gather_rows(table, ids)
            att = T.softmax(w, axis=-1)
            cp = T.scatter_add_rows(att, ids, 6)
            picked = T.take_per_row(cp, ids)
            return T.add(T.tsum(T.mul(e, e)), T.tsum(T.mul(picked, picked)))

        assert_grads_close(loss_fn, [table, w])

    def test_nll_from_probs_grad(self):
        rng = np.random.default_rng(7)
        x = leaf(rng.normal(size=(3, 5)))

        def loss_fn():
            p = T.softmax(x, axis=-1)
            return T.masked_nll_from_probs(p, [0, 3, 2], [1, 0, 1])

        assert_grads_close(loss_fn, [x])


class TestScatterAdd:
    def test_bad_id_raises(self):
        with pytest.raises(T.ShapeError):
            T.scatter_add_rows(T.Tensor(np.ones((1, 2))), [0, 9], 5)

    def test_aggregation(self):
        w = T.Tensor([[0.3, 0.5, 0.2]])
        out = T.scatter_add_rows(w, [4, 1, 4], 6)
        assert np.allclose(out.data, [[0.0, 0.5, 0.0, 0.0, 0.5, 0.0]])
