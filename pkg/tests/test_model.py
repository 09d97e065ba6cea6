import numpy as np
import pytest

from lsd import autodiff as ad
from lsd.errors import ConfigError, InvalidInputError, ShapeMismatchError
from lsd.model import INIT_SCALE, ModelConfig, ModelParams, Seq2Seq, is_bias, param_shapes
from lsd.tokens import EOS_ID

from conftest import tiny_input, tiny_model


def fd_check(model, loss_fn, n_coords=None, seed=0, h=1e-4):
    """Compare ``model.params.grads`` with central differences of ``loss_fn``."""
    analytic = model.params.flat_grad().copy()
    flat = model.params.flat().copy()
    idx = np.arange(flat.size)
    if n_coords is not None and n_coords < flat.size:
        idx = np.random.default_rng(seed).choice(flat.size, size=n_coords, replace=False)
    worst = 0.0
    for i in idx:
        e = np.zeros_like(flat)
        e[i] = h
        model.params.set_flat(flat + e)
        up = loss_fn()
        model.params.set_flat(flat - e)
        down = loss_fn()
        num = (up - down) / (2 * h)
        worst = max(worst, abs(analytic[i] - num) / max(abs(analytic[i]), abs(num), 1e-6))
    model.params.set_flat(flat)
    return worst


class TestConfig:
    def test_subsample_factor(self):
        assert ModelConfig(input_dim=2, vocab_size=5).subsample_factor == 4

    def test_invalid(self):
        with pytest.raises(ConfigError):
            ModelConfig(input_dim=2, vocab_size=5, enc_layers=2, subsample_layers=2)
        with pytest.raises(ConfigError):
            ModelConfig(input_dim=0, vocab_size=5)
        with pytest.raises(ConfigError):
            ModelConfig(input_dim=2, vocab_size=5, dtype="float16")

    def test_desk_scale_defaults(self):
        c = ModelConfig(input_dim=2, vocab_size=5)
        assert (c.enc_hidden, c.dec_hidden, c.att_hidden, c.embed_dim) == (32, 64, 32, 16)


class TestParams:
    def test_init_range_and_zero_biases(self):
        p = ModelParams.initialize(ModelConfig(input_dim=3, vocab_size=7), seed=1)
        for name, v in p.values.items():
            if is_bias(name):
                assert np.all(v == 0), name
            else:
                assert np.all(np.abs(v) <= INIT_SCALE), name
                assert v.std() > 0.02

    def test_init_deterministic(self):
        cfg = ModelConfig(input_dim=3, vocab_size=7)
        a, b = ModelParams.initialize(cfg, 5), ModelParams.initialize(cfg, 5)
        np.testing.assert_array_equal(a.flat(), b.flat())
        assert not np.array_equal(a.flat(), ModelParams.initialize(cfg, 6).flat())

    def test_shapes(self):
        cfg = ModelConfig(input_dim=3, vocab_size=7)
        shapes = param_shapes(cfg)
        assert shapes["dec.embed"] == (8, 16)
        assert shapes["att.phi.W"] == (64 + 64, 32)
        assert shapes["out.W2"] == (64, 7)
        assert shapes["enc.l0.fw.W"] == (3 + 32, 128)
        assert shapes["enc.l1.fw.W"] == (2 * 64 + 32, 128)

    def test_flat_round_trip(self):
        p = ModelParams.initialize(ModelConfig(input_dim=3, vocab_size=7))
        v = np.arange(p.size(), dtype=np.float32)
        p.set_flat(v)
        np.testing.assert_array_equal(p.flat(), v)

    def test_check_compatible_names_tensor(self):
        a = ModelParams.zeros(ModelConfig(input_dim=3, vocab_size=7))
        b = ModelParams.zeros(ModelConfig(input_dim=3, vocab_size=8))
        with pytest.raises(ShapeMismatchError) as info:
            a.check_compatible(b)
        assert info.value.name == "dec.embed"

    def test_bias_names(self):
        assert is_bias("out.b2") and is_bias("enc.l0.fw.b")
        assert not is_bias("dec.embed") and not is_bias("att.v")


class TestEncoder:
    def test_length_reduction(self):
        model = Seq2Seq(ModelConfig(input_dim=3, vocab_size=5))
        enc = model.encode([np.zeros((8, 3)), np.zeros((5, 3))])
        assert enc.h.value.shape == (2, 2, 64)
        np.testing.assert_array_equal(enc.lengths, [2, 2])
        np.testing.assert_array_equal(enc.mask.sum(axis=1), [2, 2])

    @pytest.mark.parametrize("T", [4, 5, 7, 9, 13])
    def test_ceil_division(self, T):
        model = Seq2Seq(ModelConfig(input_dim=3, vocab_size=5))
        enc = model.encode([np.ones((T, 3))])
        assert enc.h.value.shape[1] == -(-T // 4)

    def test_zero_weights_zero_input(self):
        cfg = ModelConfig(input_dim=3, vocab_size=5)
        model = Seq2Seq(cfg, ModelParams.zeros(cfg))
        enc = model.encode([np.zeros((8, 3))])
        np.testing.assert_array_equal(enc.h.value, np.zeros((1, 2, 64)))

    def test_too_short(self):
        model = Seq2Seq(ModelConfig(input_dim=3, vocab_size=5))
        with pytest.raises(InvalidInputError, match="subsampling"):
            model.encode([np.zeros((3, 3))])

    def test_wrong_width(self):
        model = Seq2Seq(ModelConfig(input_dim=3, vocab_size=5))
        with pytest.raises(InvalidInputError):
            model.encode([np.zeros((8, 4))])

    def test_padding_does_not_change_states(self):
        model = tiny_model(5, seed=2, scale=0.5)
        x = tiny_input(1, length=6)
        alone = model.encode([x]).h.value[0]
        batched = model.encode([x, tiny_input(2, length=11)]).h.value[0, :alone.shape[0]]
        np.testing.assert_allclose(batched, alone, atol=1e-12)


class TestDecoder:
    def test_step_distributions_normalized(self):
        model = tiny_model(6, seed=1, scale=0.5)
        rows = model.step_distributions(tiny_input(), [2, 3, EOS_ID])
        np.testing.assert_allclose(np.exp(rows).sum(axis=1), 1.0, atol=1e-12)

    def test_sequence_score_is_sum_of_steps(self):
        model = tiny_model(6, seed=1, scale=0.5)
        z = [2, 5, 3, EOS_ID]
        rows = model.step_distributions(tiny_input(), z)
        expected = sum(rows[i, t] for i, t in enumerate(z))
        assert model.log_prob_sequence(tiny_input(), z) == pytest.approx(expected, abs=1e-12)

    def test_batch_equals_single(self):
        model = tiny_model(6, seed=1, scale=0.5)
        xs = [tiny_input(0, 4), tiny_input(1, 9)]
        zs = [[2, EOS_ID], [3, 4, 5, 2, EOS_ID]]
        batch = model.log_prob_sequences(xs, zs)
        single = [model.log_prob_sequence(x, z) for x, z in zip(xs, zs)]
        np.testing.assert_allclose(batch, single, atol=1e-12)

    def test_attention_weights_sum_to_one(self):
        model = tiny_model(6, seed=1, scale=0.5)
        b = model.bind()
        enc = model.encode([tiny_input(0, 9), tiny_input(1, 4)], b)
        hp = model.prepare(enc, b)
        state, _ = model.decode_step([6, 6], model.initial_state(2, b), enc, hp, b)
        np.testing.assert_allclose(state.alpha.value.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(state.alpha.value[1, 2:] == 0)
        assert state.e.shape == (2, 5)

    def test_requires_eos(self):
        model = tiny_model(6)
        with pytest.raises(InvalidInputError, match="EOS"):
            model.log_prob_sequence(tiny_input(), [2, 3])

    def test_token_range(self):
        model = tiny_model(6)
        with pytest.raises(InvalidInputError):
            model.log_prob_sequence(tiny_input(), [7, EOS_ID])

    def test_float32_close_to_float64(self):
        m64 = tiny_model(6, seed=3, scale=0.5)
        m32 = tiny_model(6, seed=3, dtype="float32")
        for k, v in m64.params.values.items():
            m32.params.values[k][...] = v
        z = [2, 3, EOS_ID]
        assert m32.log_prob_sequence(tiny_input(), z) == pytest.approx(
            m64.log_prob_sequence(tiny_input(), z), abs=1e-4)


class TestGradients:
    def test_log_prob_sequence_all_coordinates(self):
        model = tiny_model(6, seed=7, scale=0.4)
        x, z = tiny_input(3, length=7), [2, 4, 5, 1, EOS_ID]
        tape = ad.Tape()
        model.backward(model.log_prob_sequence(x, z, tape))
        worst = fd_check(model, lambda: model.log_prob_sequence(x, z))
        assert worst <= 1e-4

    def test_batch_loss_gradient(self):
        model = tiny_model(6, seed=8, scale=0.4)
        xs = [tiny_input(0, 4), tiny_input(1, 6)]
        zs = [[2, EOS_ID], [3, 4, 5, EOS_ID]]

        def loss():
            return float(model.log_prob_sequences(xs, zs).sum())

        tape = ad.Tape()
        lp, mask = model.step_logprobs(xs, zs, model.bind(tape))
        model.backward(ad.weighted_sum(lp, mask))
        assert fd_check(model, loss, n_coords=200) <= 1e-4

    def test_accumulate(self):
        model = tiny_model(6, seed=8)
        x, z = tiny_input(), [2, EOS_ID]
        model.backward(model.log_prob_sequence(x, z, ad.Tape()))
        once = model.params.flat_grad().copy()
        model.backward(model.log_prob_sequence(x, z, ad.Tape()), accumulate=True)
        np.testing.assert_allclose(model.params.flat_grad(), 2 * once)


class TestWeightNoise:
    def test_noise_skips_biases(self):
        model = tiny_model(6)
        b = model.bind(ad.Tape(), noise_std=0.1, rng=np.random.default_rng(0))
        for name, v in model.params.values.items():
            if is_bias(name):
                np.testing.assert_array_equal(b.P[name].value, v)
            else:
                assert not np.array_equal(b.P[name].value, v)

    def test_noise_does_not_touch_stored_params(self):
        model = tiny_model(6)
        before = model.params.flat().copy()
        model.bind(ad.Tape(), noise_std=0.1, rng=np.random.default_rng(0))
        np.testing.assert_array_equal(model.params.flat(), before)
