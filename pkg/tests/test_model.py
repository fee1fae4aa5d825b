import math

import numpy as np
import pytest

from productae.classical import all_messages, encode_product, single_parity_check_code
from productae.errors import DimensionError
from productae.gradcheck import TINY_ARCH, tiny_model_gradcheck
from productae.model import Architecture, ProductAE, ProductEncoder, decoder_layout
from productae.nn import Fcnn

from conftest import TINY


def record_decoder(model):
    """Wrap every decoder net so its raw input and output are captured by stage t."""
    inputs, outputs = {}, {}
    for t, net in enumerate(model.decoder.nets, start=1):
        inner = net.forward

        def forward(x, t=t, inner=inner):
            inputs[t] = x.data.copy()
            out = inner(x)
            outputs[t] = out.data.copy()
            return out

        net.forward = forward
    return inputs, outputs


def canonical(raw, F, column):
    """Oracle for the documented layout: F contiguous length-m vectors per decoder output."""
    B, L, FM = raw.shape
    m = FM // F
    out = np.zeros((B, F, m, L) if column else (B, F, L, m))
    for f in range(F):
        block = raw[:, :, f * m:(f + 1) * m]
        out[:, f] = np.swapaxes(block, 1, 2) if column else block
    return out


class TestShapes:
    def test_encode_decode_shapes(self, tiny_model, rng):
        U = rng.integers(0, 2, (5, 2, 2))
        c = tiny_model.encode(U)
        assert c.shape == (5, 3, 3)
        assert tiny_model.decode(c).shape == (5, 2, 2)

    @pytest.mark.parametrize("I,F", [(1, 1), (1, 3), (2, 1), (3, 2)])
    def test_any_iterations_and_features(self, I, F, rng):
        arch = Architecture(**{**TINY, "iterations": I, "features": F, "k1": 3, "n1": 5})
        model = ProductAE.build(arch, seed=0)
        Y = rng.standard_normal((4, 3, 5))
        assert model.decode(Y).shape == (4, 2, 3)
        assert len(model.decoder.nets) == 2 * I

    def test_encoder_wrong_shape(self, tiny_model):
        with pytest.raises(DimensionError):
            tiny_model.encode(np.zeros((2, 3, 2)))

    def test_decoder_error_names_stage(self, tiny_model):
        with pytest.raises(DimensionError, match="stage t=1"):
            tiny_model.decode(np.zeros((2, 3, 4)))

    def test_invalid_architecture(self):
        with pytest.raises(DimensionError):
            Architecture(k1=4, k2=2, n1=3, n2=3)


def test_reference_instantiation_sizing_table():
    arch = Architecture(k1=10, k2=10, n1=15, n2=15, iterations=4, features=3)
    model = ProductAE.build(arch, seed=0, dtype=np.float32)
    nets = model.decoder.nets
    assert len(nets) == 8
    F, n, k = 3, 15, 10
    expected = [
        ("D2^(1)", n, F * n), ("D1^(1)", (F + 1) * n, F * n),
        ("D2^(2)", (F + 1) * n, F * n), ("D1^(2)", (F + 1) * n, F * n),
        ("D2^(3)", (F + 1) * n, F * n), ("D1^(3)", (F + 1) * n, F * n),
        ("D2^(4)", (F + 1) * n, F * k), ("D1^(4)", F * n, k),
    ]
    layout = decoder_layout(arch)
    for (name, i, o), spec, net in zip(expected, layout, nets):
        assert (spec["name"], net.input_dim, net.output_dim) == (name, i, o)
        assert net.hidden_width == 250
        assert net.hidden_count == (9 if name.endswith("(4)") else 7)
    assert model.encoder.enc1.hidden_count == 7 and model.encoder.enc1.hidden_width == 200
    assert float(model.rate) == pytest.approx(4 / 9)


def test_linear_instantiation_matches_classical_oracle():
    spc = single_parity_check_code(3)
    enc1, enc2 = Fcnn(2, 3, 0, 1), Fcnn(2, 3, 0, 1)
    enc1.layers[0].weight.data = spc.G.astype(np.float64)
    enc2.layers[0].weight.data = spc.G.astype(np.float64)
    encoder = ProductEncoder(enc1, enc2, normalize=False)
    U = all_messages(4).reshape(16, 2, 2)
    real = encoder.encode(U.astype(np.float64)).data
    assert np.array_equal(real, np.round(real))
    for u, c in zip(U, real):
        assert np.array_equal(np.round(c).astype(int) % 2, encode_product([spc, spc], u))


class TestNormalization:
    def test_codeword_power(self, rng):
        # Zero biases would send the all-zero message to the (unnormalizable) zero codeword.
        model = ProductAE.build(Architecture(**TINY), seed=1, dtype=np.float32)
        for p in model.encoder_parameters():
            if p.ndim == 1:
                p.data = (0.1 * rng.standard_normal(p.shape)).astype(np.float32)
        U = rng.integers(0, 2, (1000, 2, 2))
        sq = np.sum(model.encode(U).data.astype(np.float64) ** 2, axis=(1, 2))
        assert np.max(np.abs(sq - 9)) < 1e-6 * 9

    def test_scaling_enc2_output_layer_is_invisible(self, tiny_model, rng):
        U = rng.integers(0, 2, (1, 2, 2))
        for layer in tiny_model.encoder.enc1.layers + tiny_model.encoder.enc2.layers:
            layer.bias.data = 0.1 * rng.standard_normal(layer.bias.shape)
        before = tiny_model.encode(U).data.copy()
        last = tiny_model.encoder.enc2.layers[-1]
        last.weight.data = 3.7 * last.weight.data
        last.bias.data = 3.7 * last.bias.data
        np.testing.assert_allclose(tiny_model.encode(U).data, before, rtol=1e-12, atol=1e-14)


class TestDecoderPipeline:
    @pytest.fixture
    def traced(self, rng):
        arch = Architecture(**{**TINY, "iterations": 3, "features": 2, "k1": 2, "k2": 3, "n1": 4, "n2": 5})
        model = ProductAE.build(arch, seed=7)
        for p in model.decoder_parameters():
            if p.ndim == 1:
                p.data = 0.1 * rng.standard_normal(p.shape)
        hooks = {}
        inputs, outputs = record_decoder(model)
        Y = rng.standard_normal((3, 5, 4))
        model.decode(Y, hook=lambda t, s, c: hooks.__setitem__(t, (s, c)))
        return model, Y, hooks, inputs, outputs

    def test_soft_blocks_follow_subtraction_rule(self, traced):
        model, Y, hooks, inputs, outputs = traced
        F, last = model.arch.features, 2 * model.arch.iterations
        canon = {t: canonical(outputs[t], F, column=(t % 2 == 1)) for t in outputs if t < last}
        assert hooks[1][0] is None
        np.testing.assert_array_equal(hooks[2][0].data, canon[1])
        for t in range(3, last):
            np.testing.assert_array_equal(hooks[t][0].data, canon[t - 1] - hooks[t - 1][0].data)
        np.testing.assert_array_equal(hooks[last][0].data, canon[last - 1])

    def test_channel_injected_everywhere_but_last(self, traced):
        model, Y, hooks, inputs, outputs = traced
        last = 2 * model.arch.iterations
        for t in range(1, last):
            expected = np.swapaxes(Y, 1, 2) if t % 2 == 1 else Y
            np.testing.assert_array_equal(hooks[t][1].data, expected)
            np.testing.assert_array_equal(inputs[t][..., -Y.shape[1 if t % 2 == 1 else 2]:], expected)
        assert hooks[last][1] is None

    def test_feature_major_input_layout(self, traced):
        model, Y, hooks, inputs, outputs = traced
        F = model.arch.features
        for t in range(2, 2 * model.arch.iterations):
            soft = hooks[t][0].data
            column = t % 2 == 1
            x = inputs[t]
            for f in range(F):
                block = soft[:, f]
                want = np.swapaxes(block, 1, 2) if column else block
                m = want.shape[-1]
                np.testing.assert_array_equal(x[..., f * m:(f + 1) * m], want)

    def test_each_intermediate_decoder_exchanges_f_blocks(self, traced):
        model, *_ = traced
        F = model.arch.features
        for spec in decoder_layout(model.arch)[1:-2]:
            m = model.arch.n2 if spec["column"] else model.arch.n1
            assert (spec["in_dim"], spec["out_dim"]) == ((F + 1) * m, F * m)


def test_pipeline_determinism(rng):
    U = rng.integers(0, 2, (8, 2, 2))
    noise = rng.standard_normal((8, 3, 3))
    a = ProductAE.build(Architecture(**TINY), seed=9).forward(U, noise).data
    b = ProductAE.build(Architecture(**TINY), seed=9).forward(U, noise).data
    assert np.array_equal(a, b)


def test_named_parameters_cover_everything(tiny_model):
    named = tiny_model.named_parameters()
    assert len(named) == len(tiny_model.parameters())
    assert "enc1.0.weight" in named and "dec4.1.bias" in named


def test_end_to_end_gradient_one_percent_subset():
    model = ProductAE.build(Architecture(**TINY_ARCH), seed=0)
    total = sum(p.size for p in model.parameters())
    report = tiny_model_gradcheck(n_params=math.ceil(0.01 * total), seed=4)
    assert report.passed(1e-3), report.worst
