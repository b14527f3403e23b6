import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from contrast_lab.encoder import (
    Params,
    Shape,
    apply_perturbation,
    backprop_matrix,
    forward_batch,
    forward_trace,
    init_params,
    sign_correction,
    zeros_like_params,
)
from contrast_lab.errors import ShapeError
from contrast_lab.rng import RngState


def _params_from(shape, arrays_):
    return Params(shape=shape, weights=tuple(np.asarray(a, dtype=np.float64) for a in arrays_))


class TestShape:
    def test_layer_dims(self):
        dims = Shape(L=3, m=5, d=2, b=4).layer_dims()
        assert dims == [(5, 4), (5, 5), (5, 5), (2, 5)]

    def test_rejects_nonpositive(self):
        with pytest.raises(ShapeError):
            Shape(L=0, m=5, d=2, b=4)


def test_hand_evaluated_single_hidden_layer():
    # W0 = [[1, -1], [0, 2]], W1 = [[1, 1]], x = (0.6, 0.8)
    # pre = (-0.2, 1.6) -> hidden (0, 1.6) -> output 1.6
    shape = Shape(L=1, m=2, d=1, b=2)
    p = _params_from(shape, [[[1.0, -1.0], [0.0, 2.0]], [[1.0, 1.0]]])
    t = forward_trace(p, np.array([0.6, 0.8]))
    assert np.allclose(t.hidden[0], [0.0, 1.6])
    assert t.output == pytest.approx(np.array([1.6]))
    assert t.masks[0].tolist() == [False, True]


def test_zero_preactivation_counts_as_active():
    shape = Shape(L=1, m=2, d=1, b=2)
    p = _params_from(shape, [[[0.0, 0.0], [1.0, 0.0]], [[1.0, 1.0]]])
    t = forward_trace(p, np.array([1.0, 0.0]))
    assert t.masks[0].tolist() == [True, True]
    assert t.hidden[0][0] == 0.0


def test_forward_batch_matches_single_traces(small_nets, small_data):
    qp, _ = small_nets
    batch = forward_batch(qp, small_data.points)
    for i, x in enumerate(small_data.points):
        single = forward_trace(qp, x)
        assert np.allclose(batch.outputs[:, i], single.output, atol=1e-14)
        for l in range(qp.shape.L):
            assert np.array_equal(batch.masks[l][:, i], single.masks[l])


def test_init_variances():
    shape = Shape(L=2, m=2000, d=100, b=50)
    p = init_params(RngState(seed=13), shape)
    assert p.weights[0].var() == pytest.approx(2 / 2000, rel=0.05)
    assert p.weights[1].var() == pytest.approx(2 / 2000, rel=0.05)
    assert p.weights[-1].var() == pytest.approx(1 / 100, rel=0.05)


def test_hidden_norms_concentrate_at_large_width(small_data):
    shape = Shape(L=2, m=8192, d=16, b=8)
    p = init_params(RngState(seed=17), shape)
    batch = forward_batch(p, small_data.points)
    for h in batch.hidden:
        assert np.allclose(np.linalg.norm(h, axis=0), 1.0, atol=0.1)


class TestBackpropMatrix:
    def test_top_layer_is_output_weights(self, small_nets, small_data):
        qp, _ = small_nets
        t = forward_trace(qp, small_data.points[0])
        assert np.array_equal(backprop_matrix(qp, t, qp.shape.L), qp.weights[-1])

    def test_descending_chain_identity(self, small_nets, small_data):
        qp, _ = small_nets
        t = forward_trace(qp, small_data.points[0])
        for l in range(qp.shape.L - 1, 0, -1):
            above = backprop_matrix(qp, t, l + 1)
            expected = (above * t.masks[l]) @ qp.weights[l]
            assert np.allclose(backprop_matrix(qp, t, l), expected, atol=1e-12)


def test_bytes_round_trip_is_bit_exact(small_nets):
    qp, _ = small_nets
    back = Params.from_bytes(qp.to_bytes())
    assert back.shape == qp.shape
    for a, b in zip(back.weights, qp.weights):
        assert a.tobytes() == b.tobytes()


def test_params_are_immutable(small_nets):
    qp, _ = small_nets
    with pytest.raises(ValueError):
        qp.weights[0][0, 0] = 1.0


def test_apply_perturbation_reports_layer_norms(small_nets, small_shape):
    qp, _ = small_nets
    direction = init_params(RngState(seed=23), small_shape)
    shifted, report = apply_perturbation(qp, direction, scale=0.1)
    assert len(report.layer_spectral_norms) == small_shape.L + 1
    assert shifted.frobenius_distance(qp) == pytest.approx(
        report.total_frobenius, rel=1e-12)
    unchanged, report0 = apply_perturbation(qp, direction, scale=0.0)
    assert unchanged.frobenius_distance(qp) == 0.0
    assert report0.total_frobenius == 0.0


def test_zeros_like_params(small_shape):
    z = zeros_like_params(small_shape)
    assert all(np.all(w == 0.0) for w in z.weights)


class TestSignCorrection:
    @given(
        arrays(np.float64, (6,), elements=st.floats(-5, 5)),
        arrays(np.float64, (6,), elements=st.floats(-5, 5)),
    )
    @settings(max_examples=200, deadline=None)
    def test_reconstruction_is_exact(self, a, b):
        d = (a >= 0).astype(np.float64)
        corr = sign_correction(a, b)
        got = (d + corr) * (a - b)
        want = np.maximum(a, 0) - np.maximum(b, 0)
        assert np.allclose(got, want, atol=1e-12 * (1 + np.abs(want).max()))

    def test_zero_where_signs_agree(self):
        a = np.array([1.0, -1.0, 2.0])
        b = np.array([3.0, -0.5, 0.25])
        assert np.array_equal(sign_correction(a, b), np.zeros(3))

    def test_mixed_sign_entry(self):
        # a = 1 active, b = -1 inactive: sigma(a) - sigma(b) = 1, a - b = 2,
        # so the correction must shift the indicator from 1 to 1/2
        corr = sign_correction(np.array([1.0]), np.array([-1.0]))
        assert corr[0] == pytest.approx(-0.5)
