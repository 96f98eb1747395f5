"""Encoder: embedding lookup, LSTM recurrence vs a straight-line oracle."""

import numpy as np
import pytest

import kbqa.autograd as ag
from kbqa.autograd import ShapeError, Tape, Tensor
from kbqa.encoder import (
    GATE_ORDER,
    EncodedQuestion,
    bilstm_encode,
    embed_words,
    init_direction,
    lstm_direction,
    lstm_encode,
)

from oracles import finite_difference, lstm_states64, max_rel_err


def direction64(rng, input_dim, hidden, prefix="lstm"):
    return init_direction(rng, input_dim, hidden, prefix, dtype=np.float64)


def gate_weights_of(direction):
    names = {"input": "i", "forget": "f", "output": "o", "candidate": "g"}
    out = {}
    for gate_name, gate in zip(GATE_ORDER, direction.gates):
        out[names[gate_name]] = (gate.wx.data.tolist(), gate.wh.data.tolist(),
                                 gate.bias.data.tolist())
    return out


class TestEmbedWords:
    def test_single_lookup(self):
        table = Tensor(np.arange(12, dtype=np.float64).reshape(4, 3))
        out = embed_words(table, [2])
        np.testing.assert_array_equal(out.data, [[6, 7, 8]])

    def test_repeated_token_identical_rows(self):
        table = Tensor(np.random.default_rng(0).normal(size=(5, 4)))
        out = embed_words(table, [3, 3])
        np.testing.assert_array_equal(out.data[0], out.data[1])

    def test_out_of_range_rejected(self):
        table = Tensor(np.zeros((4, 3)))
        with pytest.raises(ShapeError, match="range"):
            embed_words(table, [4])

    def test_unk_rows_shared(self):
        table = Tensor(np.random.default_rng(1).normal(size=(5, 4)))
        out = embed_words(table, [0, 0])
        np.testing.assert_array_equal(out.data[0], out.data[1])


class TestLstmDirection:
    def test_zero_weights_and_inputs_stay_zero(self):
        rng = np.random.default_rng(0)
        params = direction64(rng, 4, 3)
        for gate in params.gates:
            gate.wx.data[:] = 0.0
            gate.wh.data[:] = 0.0
            gate.bias.data[:] = 0.0
        states = lstm_direction(Tensor(np.zeros((3, 4))), params)
        for s in states:
            np.testing.assert_array_equal(s.data, np.zeros(3))

    def test_single_step_has_no_direction(self):
        rng = np.random.default_rng(1)
        params = direction64(rng, 4, 3)
        x = Tensor(rng.normal(size=(1, 4)))
        fwd = lstm_direction(x, params, reverse=False)
        bwd = lstm_direction(x, params, reverse=True)
        np.testing.assert_array_equal(fwd[0].data, bwd[0].data)

    def test_matches_straight_line_oracle(self):
        rng = np.random.default_rng(2)
        d, hidden, n = 8, 4, 3
        params = direction64(rng, d, hidden)
        inputs = rng.normal(size=(n, d))
        for reverse in (False, True):
            got = lstm_direction(Tensor(inputs), params, reverse=reverse)
            want = lstm_states64(inputs.tolist(), gate_weights_of(params), reverse=reverse)
            for j in range(n):
                np.testing.assert_allclose(got[j].data, want[j], atol=1e-5)

    def test_forward_causality(self):
        rng = np.random.default_rng(3)
        params = direction64(rng, 4, 3)
        base = rng.normal(size=(4, 4))
        changed = base.copy()
        changed[3] += 1.0  # only the last token differs
        a = lstm_direction(Tensor(base), params)
        b = lstm_direction(Tensor(changed), params)
        for j in range(3):
            np.testing.assert_array_equal(a[j].data, b[j].data)
        assert not np.allclose(a[3].data, b[3].data)

    def test_backward_anticausality(self):
        rng = np.random.default_rng(4)
        params = direction64(rng, 4, 3)
        base = rng.normal(size=(4, 4))
        changed = base.copy()
        changed[0] += 1.0  # only the first token differs
        a = lstm_direction(Tensor(base), params, reverse=True)
        b = lstm_direction(Tensor(changed), params, reverse=True)
        for j in range(1, 4):
            np.testing.assert_array_equal(a[j].data, b[j].data)
        assert not np.allclose(a[0].data, b[0].data)


class TestBilstmEncode:
    def test_shape_contract(self):
        rng = np.random.default_rng(5)
        fwd = direction64(rng, 4, 2, "f")
        bwd = direction64(rng, 4, 2, "b")
        enc = bilstm_encode(Tensor(rng.normal(size=(2, 4))), fwd, bwd)
        assert enc.hidden.shape == (2, 4)

    def test_reversal_swaps_roles(self):
        # backward states of the reversed sequence (run with swapped params)
        # equal forward states of the original at mirrored positions
        rng = np.random.default_rng(6)
        d, hidden, n = 6, 3, 4
        params = direction64(rng, d, hidden)
        x = rng.normal(size=(n, d))
        fwd_orig = lstm_direction(Tensor(x), params, reverse=False)
        bwd_reversed = lstm_direction(Tensor(x[::-1].copy()), params, reverse=True)
        for j in range(n):
            np.testing.assert_allclose(
                bwd_reversed[j].data, fwd_orig[n - 1 - j].data, atol=1e-12
            )

    def test_fixed_vector_concatenates_ends(self):
        rng = np.random.default_rng(7)
        fwd = direction64(rng, 4, 2, "f")
        bwd = direction64(rng, 4, 2, "b")
        x = Tensor(rng.normal(size=(3, 4)))
        enc = bilstm_encode(x, fwd, bwd)
        fixed = enc.fixed_vector()
        np.testing.assert_array_equal(
            fixed.data,
            np.concatenate([lstm_direction(x, fwd)[-1].data,
                            lstm_direction(x, bwd, reverse=True)[0].data]),
        )

    def test_unidirectional_fixed_vector_is_last_state(self):
        rng = np.random.default_rng(8)
        fwd = direction64(rng, 4, 4, "f")
        x = Tensor(rng.normal(size=(3, 4)))
        enc = lstm_encode(x, fwd)
        np.testing.assert_array_equal(enc.fixed_vector().data,
                                      lstm_direction(x, fwd)[-1].data)

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(9)
        d, hidden, n, vocab = 8, 4, 4, 6
        table = ag.parameter(rng.uniform(-0.5, 0.5, (vocab, d)), "table")
        fwd = direction64(rng, d, hidden, "f")
        bwd = direction64(rng, d, hidden, "b")
        tokens = [1, 4, 0, 3]
        params = [table] + [t for _, t in fwd.tensors("f")] + [t for _, t in bwd.tensors("b")]
        probe = Tensor(rng.normal(size=(n, 2 * hidden)))

        def forward_scalar():
            enc = bilstm_encode(embed_words(table, tokens), fwd, bwd)
            return ag.sum_all(ag.mul(enc.hidden, probe))

        with Tape() as tape:
            loss = forward_scalar()
            grads = ag.backward(tape, loss, params)
        analytic = [grads[p] for p in params]
        numeric = finite_difference(lambda: float(forward_scalar().item()),
                                    [p.data for p in params])
        assert max_rel_err(analytic, numeric) < 1e-4
