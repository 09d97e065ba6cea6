import numpy as np
import pytest

from lsd import autodiff as ad
from lsd.errors import InvalidInputError, StateError


def _loss(build, arrays, weights_seed=99):
    """Scalar loss: random linear functional of every output of ``build``."""
    tape = ad.Tape()
    vs = [tape.param(f"p{i}", a) for i, a in enumerate(arrays)]
    outs = build(*vs)
    if isinstance(outs, ad.Var):
        outs = [outs]
    rng = np.random.default_rng(weights_seed)
    terms = [ad.weighted_sum(o, rng.normal(size=o.value.shape)) for o in outs]
    total = terms[0]
    for term in terms[1:]:
        total = ad.add(total, term)
    return tape, total


def check_gradients(build, arrays, h=1e-6, tol=1e-6):
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    tape, loss = _loss(build, arrays)
    tape.backward(loss)
    grads = tape.gradients()
    for i, a in enumerate(arrays):
        num = np.zeros_like(a)
        for idx in np.ndindex(a.shape):
            old = a[idx]
            a[idx] = old + h
            up = float(_loss(build, arrays)[1].value)
            a[idx] = old - h
            down = float(_loss(build, arrays)[1].value)
            a[idx] = old
            num[idx] = (up - down) / (2 * h)
        np.testing.assert_allclose(grads[f"p{i}"], num, rtol=tol, atol=tol)


rng = np.random.default_rng(0)


def R(*shape):
    return rng.normal(size=shape)


class TestOpGradients:
    def test_add_broadcast(self):
        check_gradients(ad.add, [R(3, 4), R(4)])

    def test_mul(self):
        check_gradients(ad.mul, [R(2, 3), R(2, 3)])

    def test_scale_tanh_sigmoid(self):
        check_gradients(lambda a: ad.sigmoid(ad.tanh(ad.scale(a, 1.7))), [R(3, 2)])

    def test_matmul_and_affine(self):
        check_gradients(ad.matmul, [R(3, 4), R(4, 2)])
        check_gradients(ad.affine, [R(2, 3, 4), R(4, 5), R(5)])

    def test_concat_stack_unstack(self):
        check_gradients(lambda a, b: ad.concat([a, b], axis=-1), [R(2, 3), R(2, 2)])
        check_gradients(lambda a, b: ad.stack([a, b], axis=1), [R(2, 3), R(2, 3)])
        check_gradients(lambda a: ad.unstack(a, axis=1)[1:], [R(2, 3, 2)])

    def test_reshape_pad_rows(self):
        check_gradients(lambda a: ad.reshape(a, (2, 6)), [R(2, 3, 2)])
        check_gradients(lambda a: ad.pad(a, ((0, 1), (1, 0))), [R(2, 3)])
        check_gradients(lambda w: ad.rows(w, 1, 3), [R(4, 2)])

    def test_take_repeated_ids(self):
        check_gradients(lambda w: ad.take(w, [0, 2, 2, 1]), [R(3, 2)])

    def test_mask_rows_and_pick(self):
        check_gradients(lambda a: ad.mask_rows(a, np.array([1, 0, 1])), [R(3, 2)])
        check_gradients(lambda a: ad.pick(a, [1, 0, 2]), [R(3, 3)])

    def test_log_softmax(self):
        check_gradients(ad.log_softmax, [R(3, 5)])

    def test_lstm_cell(self):
        check_gradients(lambda p, h, c: ad.lstm_cell(p, h, c), [R(2, 8), R(2, 2), R(2, 2)])

    def test_lstm_cell_masked(self):
        m = np.array([1.0, 0.0, 1.0])
        check_gradients(lambda p, h, c: ad.lstm_cell(p, h, c, m), [R(3, 8), R(3, 2), R(3, 2)])

    def test_attention(self):
        mask = np.array([[True, True, True], [True, True, False]])

        def build(s, hp, v, h):
            c, alpha, _ = ad.attention(s, hp, v, h, mask)
            return [c, alpha]

        check_gradients(build, [R(2, 4), R(2, 3, 4), R(4), R(2, 3, 5)])


class TestValues:
    def test_log_softmax_normalized(self):
        tape = ad.Tape()
        out = ad.log_softmax(tape.const(R(4, 6) * 50))
        np.testing.assert_allclose(np.exp(out.value).sum(axis=1), 1.0, atol=1e-12)

    def test_attention_uniform_when_energies_equal(self):
        tape = ad.Tape(record=False)
        h = tape.const(R(1, 4, 3))
        c, alpha, e = ad.attention(tape.const(np.zeros((1, 2))), tape.const(np.zeros((1, 4, 2))),
                                   tape.const(R(2)), h)
        np.testing.assert_allclose(alpha.value, 0.25)
        np.testing.assert_allclose(c.value, h.value.mean(axis=1))

    def test_attention_single_position(self):
        tape = ad.Tape(record=False)
        h = tape.const(R(2, 1, 3))
        c, alpha, _ = ad.attention(tape.const(R(2, 2)), tape.const(R(2, 1, 2)), tape.const(R(2)), h)
        np.testing.assert_allclose(alpha.value, 1.0)
        np.testing.assert_allclose(c.value, h.value[:, 0])

    def test_attention_mask_zeroes_weights(self):
        tape = ad.Tape(record=False)
        mask = np.array([[True, False, True]])
        _, alpha, _ = ad.attention(tape.const(R(1, 2)), tape.const(R(1, 3, 2)), tape.const(R(2)),
                                   tape.const(R(1, 3, 4)), mask)
        assert alpha.value[0, 1] == 0.0
        assert alpha.value.sum() == pytest.approx(1.0)

    def test_masked_lstm_carries_state(self):
        tape = ad.Tape(record=False)
        h0, c0 = tape.const(R(2, 3)), tape.const(R(2, 3))
        h, c = ad.lstm_cell(tape.const(R(2, 12)), h0, c0, np.array([0, 1]))
        np.testing.assert_array_equal(h.value[0], h0.value[0])
        np.testing.assert_array_equal(c.value[0], c0.value[0])
        assert not np.allclose(h.value[1], h0.value[1])


class TestTape:
    def test_single_use(self):
        tape = ad.Tape()
        loss = ad.weighted_sum(tape.param("w", R(3)))
        tape.backward(loss)
        with pytest.raises(StateError):
            tape.backward(loss)

    def test_unrecorded_tape(self):
        tape = ad.Tape(record=False)
        loss = ad.weighted_sum(tape.param("w", R(3)))
        with pytest.raises(StateError):
            tape.backward(loss)

    def test_non_scalar_loss(self):
        tape = ad.Tape()
        with pytest.raises(InvalidInputError):
            tape.backward(ad.tanh(tape.param("w", R(3))))

    def test_unreached_params_get_zeros(self):
        tape = ad.Tape()
        w = tape.param("w", R(3))
        tape.param("unused", R(2, 2))
        tape.backward(ad.weighted_sum(w))
        g = tape.gradients()
        np.testing.assert_array_equal(g["unused"], np.zeros((2, 2)))
        np.testing.assert_array_equal(g["w"], np.ones(3))

    def test_constants_get_no_gradient(self):
        tape = ad.Tape()
        c = tape.const(R(3))
        w = tape.param("w", R(3))
        tape.backward(ad.weighted_sum(ad.mul(c, w)))
        assert c.grad is None
        np.testing.assert_array_equal(w.grad, c.value)
