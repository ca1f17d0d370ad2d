"""Contract and oracle tests for the taped reverse-mode engine."""

import numpy as np
import pytest
from oracles import conv1d_reference

from yieldnet import autodiff as ad
from yieldnet.errors import ContractViolation


class TestConv1d:
    def test_zero_input_zero_bias_gives_zero(self):
        tape = ad.Tape()
        x = tape.leaf(np.zeros((2, 6)))
        w = tape.leaf(np.arange(2 * 2 * 3, dtype=float).reshape(2, 2, 3))
        b = tape.leaf(np.zeros(2))
        assert np.all(ad.conv1d(x, w, b).data == 0.0)

    def test_identity_kernel(self):
        tape = ad.Tape()
        x = tape.leaf(np.array([[1.0, 2.0, 3.0, 4.0]]))
        w = tape.leaf(np.array([[[0.0, 1.0, 0.0]]]))
        b = tape.leaf(np.zeros(1))
        np.testing.assert_array_equal(ad.conv1d(x, w, b).data, [[1.0, 2.0, 3.0, 4.0]])

    def test_edge_detector_kernel(self):
        # [1,0,-1] on [1,2,3,4], zero padding: hand-derived via the oracle
        tape = ad.Tape()
        x = tape.leaf(np.array([[1.0, 2.0, 3.0, 4.0]]))
        w = tape.leaf(np.array([[[1.0, 0.0, -1.0]]]))
        b = tape.leaf(np.zeros(1))
        out = ad.conv1d(x, w, b).data
        np.testing.assert_allclose(out, [[-2.0, -2.0, -2.0, 3.0]])
        ref = conv1d_reference(x.data, w.data, b.data)
        np.testing.assert_allclose(out, ref)

    def test_matches_direct_summation_oracle_random(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            ci = int(rng.integers(1, 9))
            co = int(rng.integers(1, 7))
            length = int(rng.integers(1, 65))
            k = int(rng.choice([1, 3, 5]))
            x = rng.normal(size=(ci, length))
            w = rng.normal(size=(co, ci, k))
            b = rng.normal(size=co)
            tape = ad.Tape()
            got = ad.conv1d(tape.leaf(x), tape.leaf(w), tape.leaf(b)).data
            np.testing.assert_allclose(got, conv1d_reference(x, w, b), atol=1e-12)

    def test_channel_mismatch_rejected(self):
        tape = ad.Tape()
        with pytest.raises(ContractViolation):
            ad.conv1d(tape.leaf(np.zeros((3, 5))), tape.leaf(np.zeros((2, 4, 3))),
                      tape.leaf(np.zeros(2)))

    def test_even_kernel_rejected(self):
        tape = ad.Tape()
        with pytest.raises(ContractViolation):
            ad.conv1d(tape.leaf(np.zeros((2, 5))), tape.leaf(np.zeros((2, 2, 4))),
                      tape.leaf(np.zeros(2)))


class TestAvgPool:
    def test_constant_input(self):
        tape = ad.Tape()
        out = ad.avgpool1d(tape.leaf(np.full((1, 8), 3.25)))
        np.testing.assert_array_equal(out.data, np.full((1, 4), 3.25))

    def test_pairwise_means(self):
        tape = ad.Tape()
        out = ad.avgpool1d(tape.leaf(np.array([[1.0, 2.0, 3.0, 4.0]])))
        np.testing.assert_array_equal(out.data, [[1.5, 3.5]])

    def test_odd_length_drops_tail(self):
        tape = ad.Tape()
        out = ad.avgpool1d(tape.leaf(np.array([[1.0, 2.0, 3.0, 4.0, 9.0]])))
        np.testing.assert_array_equal(out.data, [[1.5, 3.5]])

    def test_short_input_rejected(self):
        tape = ad.Tape()
        with pytest.raises(ContractViolation):
            ad.avgpool1d(tape.leaf(np.ones((2, 1))))


class TestAffine:
    def test_identity(self):
        tape = ad.Tape()
        x = tape.leaf(np.array([3.0, -1.0]))
        out = ad.affine(x, tape.leaf(np.eye(2)), tape.leaf(np.zeros(2)))
        np.testing.assert_array_equal(out.data, [3.0, -1.0])

    def test_hand_product(self):
        tape = ad.Tape()
        out = ad.affine(
            tape.leaf(np.array([1.0, 1.0])),
            tape.leaf(np.array([[1.0, 2.0], [3.0, 4.0]])),
            tape.leaf(np.array([0.0, 1.0])),
        )
        np.testing.assert_array_equal(out.data, [3.0, 8.0])

    def test_zero_weights_passes_bias(self):
        tape = ad.Tape()
        b = np.array([5.0, -2.0, 0.5])
        out = ad.affine(tape.leaf(np.array([9.0, 9.0])), tape.leaf(np.zeros((3, 2))),
                        tape.leaf(b))
        np.testing.assert_array_equal(out.data, b)

    def test_shape_mismatch(self):
        tape = ad.Tape()
        with pytest.raises(ContractViolation):
            ad.affine(tape.leaf(np.zeros(3)), tape.leaf(np.zeros((2, 2))),
                      tape.leaf(np.zeros(2)))


class TestRelu:
    def test_forward(self):
        tape = ad.Tape()
        out = ad.relu(tape.leaf(np.array([-1.0, 0.0, 2.0])))
        np.testing.assert_array_equal(out.data, [0.0, 0.0, 2.0])

    def test_standard_vs_guided_on_negative_upstream(self):
        # active unit, upstream grad -1: standard passes it, guided blocks it
        for mode, expected in ((ad.STANDARD, -1.0), (ad.GUIDED, 0.0)):
            tape = ad.Tape(mode)
            x = tape.leaf(np.array([2.0]))
            y = ad.relu(x)
            tape.backward(y, np.array([-1.0]))
            assert x.grad[0] == expected

    def test_inactive_unit_blocks_both_modes(self):
        for mode in (ad.STANDARD, ad.GUIDED):
            tape = ad.Tape(mode)
            x = tape.leaf(np.array([-1.0]))
            y = ad.relu(x)
            tape.backward(y, np.array([7.0]))
            assert x.grad[0] == 0.0


class TestLstmCell:
    @staticmethod
    def _zero_params(d, h):
        tape = ad.Tape()
        leaves = {}
        for gate in ("i", "f", "g", "o"):
            leaves[f"w_{gate}"] = tape.leaf(np.zeros((h, d + h)))
            leaves[f"b_{gate}"] = tape.leaf(np.zeros(h))
        return tape, leaves

    def test_all_zero(self):
        tape, lv = self._zero_params(3, 4)
        params = ad.LstmParams(lv["w_i"], lv["b_i"], lv["w_f"], lv["b_f"],
                               lv["w_g"], lv["b_g"], lv["w_o"], lv["b_o"])
        h, c = ad.lstm_cell_step(tape.leaf(np.zeros(3)), tape.leaf(np.zeros(4)),
                                 tape.leaf(np.zeros(4)), params)
        np.testing.assert_array_equal(h.data, np.zeros(4))
        np.testing.assert_array_equal(c.data, np.zeros(4))

    def test_saturated_forget_gate(self):
        # scalar cell, b_f = +20, everything else zero, c_prev = 3:
        # f ~ 1 so c ~ 3, i = 0.5, g = 0, o = 0.5, h = 0.5 * tanh(3)
        tape, lv = self._zero_params(1, 1)
        lv["b_f"].data[0] = 20.0
        params = ad.LstmParams(lv["w_i"], lv["b_i"], lv["w_f"], lv["b_f"],
                               lv["w_g"], lv["b_g"], lv["w_o"], lv["b_o"])
        h, c = ad.lstm_cell_step(tape.leaf(np.zeros(1)), tape.leaf(np.zeros(1)),
                                 tape.leaf(np.array([3.0])), params)
        assert abs(c.data[0] - 3.0) < 1e-6
        assert abs(h.data[0] - 0.5 * np.tanh(3.0)) < 1e-6

    def test_matches_scalar_oracle(self):
        # independent step-by-step scalar implementation of the five equations
        rng = np.random.default_rng(5)
        vals = {name: rng.normal(size=(1, 2)) for name in ("wi", "wf", "wg", "wo")}
        biases = {name: rng.normal(size=1) for name in ("bi", "bf", "bg", "bo")}
        x, h0, c0 = rng.normal(size=3)

        def sig(z):
            return 1.0 / (1.0 + np.exp(-z))

        zi = vals["wi"][0, 0] * x + vals["wi"][0, 1] * h0 + biases["bi"][0]
        zf = vals["wf"][0, 0] * x + vals["wf"][0, 1] * h0 + biases["bf"][0]
        zg = vals["wg"][0, 0] * x + vals["wg"][0, 1] * h0 + biases["bg"][0]
        zo = vals["wo"][0, 0] * x + vals["wo"][0, 1] * h0 + biases["bo"][0]
        c_ref = sig(zf) * c0 + sig(zi) * np.tanh(zg)
        h_ref = sig(zo) * np.tanh(c_ref)

        tape = ad.Tape()
        params = ad.LstmParams(
            tape.leaf(vals["wi"]), tape.leaf(biases["bi"]),
            tape.leaf(vals["wf"]), tape.leaf(biases["bf"]),
            tape.leaf(vals["wg"]), tape.leaf(biases["bg"]),
            tape.leaf(vals["wo"]), tape.leaf(biases["bo"]),
        )
        h, c = ad.lstm_cell_step(tape.leaf(np.array([x])), tape.leaf(np.array([h0])),
                                 tape.leaf(np.array([c0])), params)
        assert abs(h.data[0] - h_ref) < 1e-12
        assert abs(c.data[0] - c_ref) < 1e-12

    def test_dimension_mismatch(self):
        tape, lv = self._zero_params(3, 4)
        params = ad.LstmParams(lv["w_i"], lv["b_i"], lv["w_f"], lv["b_f"],
                               lv["w_g"], lv["b_g"], lv["w_o"], lv["b_o"])
        with pytest.raises(ContractViolation):
            ad.lstm_cell_step(tape.leaf(np.zeros(2)), tape.leaf(np.zeros(4)),
                              tape.leaf(np.zeros(4)), params)


class TestConcat:
    def test_basic(self):
        tape = ad.Tape()
        out = ad.concat([tape.leaf(np.array([1.0, 2.0])), tape.leaf(np.array([3.0]))])
        np.testing.assert_array_equal(out.data, [1.0, 2.0, 3.0])

    def test_single_part_identity(self):
        tape = ad.Tape()
        x = tape.leaf(np.array([4.0, 5.0]))
        np.testing.assert_array_equal(ad.concat([x]).data, x.data)

    def test_backward_splits_by_offsets(self):
        tape = ad.Tape()
        a = tape.leaf(np.array([1.0, 2.0]))
        b = tape.leaf(np.array([3.0]))
        out = ad.concat([a, b])
        tape.backward(out, np.array([10.0, 20.0, 30.0]))
        np.testing.assert_array_equal(a.grad, [10.0, 20.0])
        np.testing.assert_array_equal(b.grad, [30.0])

    def test_empty_rejected(self):
        with pytest.raises(ContractViolation):
            ad.concat([])


class TestBackward:
    def test_linear_chain(self):
        tape = ad.Tape()
        x = tape.leaf(np.array([2.0]))
        y = ad.mul(x, ad.constant(np.array([3.0])))
        tape.backward(y, np.array([1.0]))
        assert x.grad[0] == 3.0

    def test_inactive_relu_both_modes(self):
        for mode in (ad.STANDARD, ad.GUIDED):
            tape = ad.Tape(mode)
            x = tape.leaf(np.array([1.0]))
            y = ad.relu(ad.mul(x, ad.constant(np.array([-1.0]))))
            tape.backward(y, np.array([1.0]))
            assert x.grad is None or x.grad[0] == 0.0

    def test_seed_not_on_tape_rejected(self):
        tape = ad.Tape()
        tape.leaf(np.zeros(2))
        other = ad.Tape()
        y = other.leaf(np.ones(2))
        with pytest.raises(ContractViolation):
            tape.backward(y, np.ones(2))

    def test_seed_shape_checked(self):
        tape = ad.Tape()
        x = tape.leaf(np.zeros(3))
        y = ad.relu(x)
        with pytest.raises(ContractViolation):
            tape.backward(y, np.ones(4))

    def test_linearity_in_seed(self):
        rng = np.random.default_rng(11)
        x0 = rng.normal(size=5)
        w0 = rng.normal(size=(4, 5))
        seed = rng.normal(size=4)
        grads = {}
        for alpha in (1.0, 2.5):
            tape = ad.Tape()
            x = tape.leaf(x0)
            y = ad.tanh(ad.affine(x, tape.leaf(w0), tape.leaf(np.zeros(4))))
            tape.backward(y, alpha * seed)
            grads[alpha] = x.grad.copy()
        np.testing.assert_allclose(grads[2.5], 2.5 * grads[1.0], rtol=1e-12)

    def test_mixed_tapes_rejected(self):
        t1, t2 = ad.Tape(), ad.Tape()
        with pytest.raises(ContractViolation):
            ad.add(t1.leaf(np.zeros(2)), t2.leaf(np.zeros(2)))


class TestGuidedVsStandard:
    def test_equal_when_no_negative_upstream_at_positive_input(self):
        # weights arranged so every ReLU sees positive upstream gradient
        rng = np.random.default_rng(3)
        x0 = np.abs(rng.normal(size=4)) + 0.5
        w_pos = np.abs(rng.normal(size=(3, 4))) + 0.1
        grads = {}
        for mode in (ad.STANDARD, ad.GUIDED):
            tape = ad.Tape(mode)
            x = tape.leaf(x0)
            y = ad.relu(ad.affine(x, tape.leaf(w_pos), tape.leaf(np.zeros(3))))
            tape.backward(y, np.ones(3))
            grads[mode] = x.grad.copy()
        np.testing.assert_array_equal(grads[ad.STANDARD], grads[ad.GUIDED])

    def test_guided_never_adds_flow(self):
        rng = np.random.default_rng(13)
        for trial in range(20):
            x0 = rng.normal(size=6)
            w1 = rng.normal(size=(5, 6))
            w2 = rng.normal(size=(4, 5))
            nnz = {}
            for mode in (ad.STANDARD, ad.GUIDED):
                tape = ad.Tape(mode)
                x = tape.leaf(x0)
                h = ad.relu(ad.affine(x, tape.leaf(w1), tape.leaf(np.zeros(5))))
                y = ad.relu(ad.affine(h, tape.leaf(w2), tape.leaf(np.zeros(4))))
                tape.backward(y, np.ones(4))
                g = np.zeros(6) if x.grad is None else x.grad
                nnz[mode] = int(np.count_nonzero(g))
            assert nnz[ad.GUIDED] <= nnz[ad.STANDARD]
