import unittest

import numpy as np

from ecgnet.exceptions import ShapeMismatchError
from ecgnet.nn.gradcheck import GradCheckOp, grad_check
from ecgnet.nn.lstm import LstmParams, lstm_backward, lstm_forward

SEEDS = range(20)


def params_of(pt):
    return LstmParams(pt["input_weights"], pt["recurrent_weights"], pt["biases"])


def random_point(rng, batch=2, features=3, steps=5, hidden=4):
    return {
        "x": rng.normal(size=(batch, features, steps)),
        "input_weights": 0.5 * rng.normal(size=(4 * hidden, features)),
        "recurrent_weights": 0.5 * rng.normal(size=(4 * hidden, hidden)),
        "biases": 0.5 * rng.normal(size=4 * hidden),
    }


class TestLstmForward(unittest.TestCase):

    def test_single_step_by_hand(self):
        """All weights one, biases zero, x = 1"""
        p = LstmParams(np.ones((4, 1)), np.ones((4, 1)), np.zeros(4))
        result = lstm_forward(np.ones((1, 1, 1)), p)
        gate = 1 / (1 + np.exp(-1.0))
        expected = gate * np.tanh(gate * np.tanh(1.0))
        self.assertAlmostEqual(float(result.last[0, 0]), expected)
        self.assertAlmostEqual(float(result.last[0, 0]), 0.3683, places=4)

    def test_zero_weights_give_zero_state(self):
        rng = np.random.default_rng(0)
        p = LstmParams(np.zeros((12, 5)), np.zeros((12, 3)), np.zeros(12))
        result = lstm_forward(rng.normal(size=(4, 5, 7)) * 10, p)
        self.assertFalse(result.hidden.any())
        self.assertFalse(result.last.any())

    def test_shapes(self):
        rng = np.random.default_rng(1)
        point = random_point(rng, batch=3, features=2, steps=6, hidden=5)
        result = lstm_forward(point["x"], params_of(point))
        self.assertEqual(result.hidden.shape, (3, 6, 5))
        np.testing.assert_array_equal(result.hidden[:, -1], result.last)
        with self.assertRaises(ShapeMismatchError):
            lstm_forward(np.ones((1, 3, 4)), params_of(point))
        with self.assertRaises(ShapeMismatchError):
            LstmParams(np.ones((6, 2)), np.ones((6, 1)), np.ones(6))


class TestLstmBackward(unittest.TestCase):

    def test_last_state_gradients(self):
        def backward(pt, r):
            p = params_of(pt)
            bundle = lstm_backward(p, lstm_forward(pt["x"], p), r)
            return {"x": bundle.input_grad, **bundle.param_grads}

        op = GradCheckOp(forward=lambda pt: lstm_forward(pt["x"], params_of(pt)).last, backward=backward)
        for seed in SEEDS:
            point = random_point(np.random.default_rng(seed))
            self.assertLess(grad_check(op, point, seed=seed), 1e-4)

    def test_full_sequence_gradients(self):
        """Gradients flowing into every hidden state, not only the last"""
        def backward(pt, r):
            p = params_of(pt)
            result = lstm_forward(pt["x"], p)
            bundle = lstm_backward(p, result, np.zeros_like(result.last), r)
            return {"x": bundle.input_grad, **bundle.param_grads}

        op = GradCheckOp(
            forward=lambda pt: lstm_forward(pt["x"], params_of(pt)).hidden, backward=backward
        )
        for seed in SEEDS:
            point = random_point(np.random.default_rng(seed), steps=4, hidden=3)
            self.assertLess(grad_check(op, point, seed=seed), 1e-4)


if __name__ == '__main__':
    unittest.main()
