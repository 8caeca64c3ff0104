import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sparseproof.domain import DimensionError, SparseDomainSpec
from sparseproof.model import (Decoder, DecoderParams, SensingSpec, decode_support, expand, forward,
                               forward_measurements, gaussian_sensing, init_params, load_model,
                               measure, reconstruct, save_model, sign)

from conftest import random_decoder


class TestMeasure:
    def test_linear(self):
        s = SensingSpec([[1.0, 0, 2], [0, 1.0, -1]])
        np.testing.assert_allclose(measure(s, [0.5, 0, 1]), [2.5, -1.0])

    def test_binary_boundary_is_positive(self):
        s = SensingSpec([[1.0, 0, 0]], a2=[[0, 1.0, 0]], tau=[0.5])
        np.testing.assert_array_equal(measure(s, [0, 0.5, 0]), [0, 1.0])
        np.testing.assert_array_equal(measure(s, [0, 0.4, 0]), [0, -1.0])
        assert sign(0.0) == 1.0

    def test_wrong_length(self):
        with pytest.raises(DimensionError):
            measure(SensingSpec(np.ones((2, 4))), np.ones(3))

    def test_needs_compression(self):
        with pytest.raises(ValueError):
            SensingSpec(np.ones((3, 3)))
        with pytest.raises(ValueError):
            SensingSpec(np.full((2, 4), np.nan))

    def test_batched(self):
        rng = np.random.default_rng(0)
        s = gaussian_sensing(6, 3, rng, m2=2, tau=0.1)
        X = rng.random((5, 6))
        np.testing.assert_allclose(measure(s, X), np.stack([measure(s, x) for x in X]))


class TestArchitecture:
    def test_init_shapes(self):
        p = init_params(50, 20, np.random.default_rng(0), depth=2, width=128)
        assert [w.shape for w, _ in p.hidden] == [(128, 160), (128, 208)]
        assert p.output[0].shape == (50, 128)
        assert all(np.all(b == 0) for _, b in p.hidden)

    def test_no_hidden_layers(self):
        p = init_params(10, 4, np.random.default_rng(0), depth=0)
        assert p.output[0].shape == (10, 16)

    def test_expansion(self):
        np.testing.assert_array_equal(expand(np.array([0.5, 1, 2, 4]), np.array([1.0, -2.0])),
                                      [0.5, 1, 2, 4, -1, -2, -4, -8])

    def test_scales_positive(self):
        with pytest.raises(ValueError):
            init_params(4, 2, np.random.default_rng(0), scales=(1.0, 0.0))

    def test_shape_mismatch(self):
        rng = np.random.default_rng(0)
        p = init_params(5, 3, rng, width=4)
        with pytest.raises(DimensionError):
            Decoder(SparseDomainSpec(5, 2, 0.5), gaussian_sensing(5, 2, rng), p)

    def test_skip_connection_reaches_every_layer(self):
        # with all layer-to-layer weights zero, the last hidden layer still sees y
        rng = np.random.default_rng(1)
        p = init_params(4, 2, rng, scales=(1.0,), depth=3, width=3)
        for w, _ in p.hidden[1:]:
            w[:, :3] = 0.0
        y = np.array([0.3, -0.7])
        _, pre = forward_measurements(p, y, trace=True)
        w3, b3 = p.hidden[2]
        np.testing.assert_allclose(pre[2], w3[:, 3:] @ y + b3)

    def test_manual_forward(self):
        w1 = np.array([[1.0, -1.0, 2.0, 0.0], [0.5, 0.5, 0.0, -1.0]])
        b1 = np.array([0.1, -0.2])
        wo = np.array([[1.0, -1.0], [0.0, 2.0], [1.0, 1.0]])
        bo = np.array([0.0, -0.5, 0.25])
        p = DecoderParams([2.0], [(w1, b1)], (wo, bo))
        y = np.array([0.5, -1.0])
        h0 = 2.0 * y
        a = np.maximum(w1 @ np.concatenate([h0, h0]) + b1, 0)
        np.testing.assert_allclose(forward_measurements(p, y), wo @ a + bo)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_forward_is_piecewise_linear(seed):
    # on a segment where no ReLU changes state the logits are affine in t
    rng = np.random.default_rng(seed)
    dec = random_decoder(rng, 6, 3, width=6)
    x0 = rng.random(6)
    d = rng.standard_normal(6) * 1e-6
    z = [forward(dec.params, dec.sensing, x0 + t * d, trace=True) for t in (0.0, 0.5, 1.0)]
    same = all(np.array_equal(p0 > 0, p1 > 0) for k in (1, 2) for p0, p1 in zip(z[0][1], z[k][1]))
    if same:
        np.testing.assert_allclose(z[1][0], 0.5 * (z[0][0] + z[2][0]), atol=1e-10)


def test_decode_support_strict():
    p = DecoderParams([1.0], [], (np.zeros((3, 2)), np.array([0.0, 1.0, -1.0])))
    assert decode_support(p, y=np.zeros(2)) == frozenset({1})
    with pytest.raises(ValueError):
        decode_support(p)


def test_reconstruct_recovers_signal():
    rng = np.random.default_rng(0)
    s = gaussian_sensing(10, 6, rng)
    x = np.zeros(10)
    x[[2, 7]] = [0.6, 0.9]
    np.testing.assert_allclose(reconstruct(s, measure(s, x), {2, 7}), x, atol=1e-12)


def test_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    dec = random_decoder(rng, 7, 3, m2=2)
    path = tmp_path / "model.json"
    save_model(dec, path)
    back = load_model(path)
    assert back.domain == dec.domain
    for a, b in zip(back.params.arrays() + [back.sensing.a1, back.sensing.a2, back.sensing.tau],
                    dec.params.arrays() + [dec.sensing.a1, dec.sensing.a2, dec.sensing.tau]):
        np.testing.assert_array_equal(a, b)
    X = rng.random((20, 7))
    np.testing.assert_array_equal(back.logits(X), dec.logits(X))
