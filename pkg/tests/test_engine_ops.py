"""Forward-value and gradient oracles for the tensor engine ops.

Every differentiable op is checked against central finite differences on
several random shapes (the oracle is independent of the backward rules:
it only re-runs the forward pass at perturbed inputs). Closed-form cases
pin down the exact conventions (padding, stride arithmetic, shuffle
layout, normalization statistics).
"""

import numpy as np
import pytest

from cyclestack.engine import Tape, Tensor, gradcheck, ops
from cyclestack.errors import ShapeError


def rand(rng, shape, scale=1.0):
    return Tensor(rng.standard_normal(shape).astype(np.float32) * scale, requires_grad=True)


def run_backward(fn, *tensors):
    """Evaluate fn on a fresh tape and backprop from its scalar output."""
    with Tape() as tape:
        loss = fn(*tensors)
        tape.backward(loss)
    return loss


# =============================================================================
# Elementwise forward values
# =============================================================================


class TestPointwiseForward:
    def test_relu_values(self):
        x = Tensor(np.array([-1.0, 0.0, 2.0]).reshape(1, 3, 1, 1))
        out = ops.relu(x)
        assert np.array_equal(out.data.ravel(), [0.0, 0.0, 2.0])

    def test_sigmoid_at_zero(self):
        assert ops.sigmoid(Tensor.scalar(0.0)).item() == 0.5

    def test_sigmoid_range_open(self):
        x = Tensor(np.linspace(-80, 80, 64, dtype=np.float32).reshape(1, 1, 8, 8))
        out = ops.sigmoid(x).data
        assert np.all(out > 0.0) and np.all(out < 1.0)

    def test_tanh_matches_numpy(self):
        rng = np.random.default_rng(0)
        x = rand(rng, (2, 3, 4, 4), scale=2.0)
        assert np.allclose(ops.tanh(x).data, np.tanh(x.data), atol=1e-6)

    def test_leaky_relu_slope(self):
        x = Tensor(np.array([-2.0, 3.0]).reshape(1, 2, 1, 1))
        out = ops.leaky_relu(x, 0.2)
        assert np.allclose(out.data.ravel(), [-0.4, 3.0])

    def test_clamp_interval(self):
        x = Tensor(np.array([-3.0, 0.5, 3.0]).reshape(1, 3, 1, 1))
        out = ops.clamp(x, -1.0, 1.0)
        assert np.array_equal(out.data.ravel(), [-1.0, 0.5, 1.0])

    def test_pointwise_dispatch_matches_direct(self):
        rng = np.random.default_rng(1)
        x = rand(rng, (1, 2, 5, 5))
        for kind, fn in (("relu", ops.relu), ("sigmoid", ops.sigmoid), ("tanh", ops.tanh)):
            assert np.array_equal(ops.pointwise(x, kind).data, fn(x).data)
        assert np.array_equal(ops.pointwise(x, "leaky_relu").data, ops.leaky_relu(x).data)

    def test_pointwise_unknown_kind(self):
        with pytest.raises(Exception):
            ops.pointwise(Tensor.scalar(0.0), "selu")


# =============================================================================
# Finite-difference gradient oracles, >= 5 random shapes per op
# =============================================================================

SHAPES = [(1, 1, 3, 3), (1, 2, 4, 4), (2, 3, 5, 5), (1, 4, 2, 6), (3, 1, 6, 4)]


def check_op(build, seed, shapes=SHAPES, tol=1e-3, scale=1.0):
    """build(x) -> scalar loss tensor; FD-checked over every shape."""
    for i, shape in enumerate(shapes):
        rng = np.random.default_rng(seed + i)
        x = rand(rng, shape, scale=scale)
        err = gradcheck(lambda: build(x), [x])
        assert err <= tol, f"shape {shape}: rel err {err:.2e}"


class TestPointwiseGradients:
    def test_relu(self):
        # keep samples away from the kink at 0
        def build(x):
            shifted = ops.sadd(x, 0.05)
            return ops.mean_all(ops.relu(shifted))

        for i, shape in enumerate(SHAPES):
            rng = np.random.default_rng(10 + i)
            data = rng.standard_normal(shape).astype(np.float32)
            data[np.abs(data) < 1e-2] = 0.5
            x = Tensor(data, requires_grad=True)
            assert gradcheck(lambda: ops.mean_all(ops.relu(x)), [x]) <= 1e-3

    def test_leaky_relu(self):
        for i, shape in enumerate(SHAPES):
            rng = np.random.default_rng(20 + i)
            data = rng.standard_normal(shape).astype(np.float32)
            data[np.abs(data) < 1e-2] = -0.5
            x = Tensor(data, requires_grad=True)
            assert gradcheck(lambda: ops.mean_all(ops.leaky_relu(x)), [x]) <= 1e-3

    def test_sigmoid(self):
        check_op(lambda x: ops.mean_all(ops.sigmoid(x)), seed=30)

    def test_tanh(self):
        check_op(lambda x: ops.mean_all(ops.tanh(x)), seed=40)

    def test_exp(self):
        check_op(lambda x: ops.mean_all(ops.exp(x)), seed=50, scale=0.5)

    def test_log(self):
        check_op(lambda x: ops.mean_all(ops.log(ops.sadd(ops.sigmoid(x), 0.5))), seed=60)

    def test_sqrt(self):
        check_op(lambda x: ops.mean_all(ops.sqrt(ops.sadd(ops.sigmoid(x), 1.0))), seed=70)

    def test_pow_const(self):
        check_op(lambda x: ops.mean_all(ops.pow_const(ops.sadd(ops.sigmoid(x), 1.0), -0.5)), seed=80)

    def test_abs_away_from_zero(self):
        for i, shape in enumerate(SHAPES):
            rng = np.random.default_rng(90 + i)
            data = rng.standard_normal(shape).astype(np.float32)
            data[np.abs(data) < 5e-2] = 0.7
            x = Tensor(data, requires_grad=True)
            assert gradcheck(lambda: ops.mean_all(ops.abs_(x)), [x]) <= 1e-3

    def test_mul_both_sides(self):
        for i, shape in enumerate(SHAPES):
            rng = np.random.default_rng(100 + i)
            a, b = rand(rng, shape), rand(rng, shape)
            assert gradcheck(lambda: ops.mean_all(ops.mul(a, b)), [a, b]) <= 1e-3

    def test_add_sub_neg(self):
        rng = np.random.default_rng(110)
        a, b = rand(rng, (2, 2, 3, 3)), rand(rng, (2, 2, 3, 3))
        err = gradcheck(lambda: ops.mean_all(ops.add(ops.neg(a), ops.sub(a, b))), [a, b])
        assert err <= 1e-3


class TestReduceAndBroadcastGradients:
    def test_reduce_sum_axes(self):
        for i, axes in enumerate([(0,), (2, 3), (1, 2), (0, 1, 2, 3)]):
            rng = np.random.default_rng(120 + i)
            x = rand(rng, (2, 3, 4, 4))
            err = gradcheck(lambda: ops.mean_all(ops.mul(ops.broadcast_to(ops.reduce_sum(x, axes), x.shape), x)), [x])
            assert err <= 1e-3

    def test_reduce_mean_values(self):
        x = Tensor(np.arange(8, dtype=np.float32).reshape(1, 2, 2, 2))
        m = ops.reduce_mean(x, (2, 3))
        assert m.shape == (1, 2, 1, 1)
        assert np.allclose(m.data.ravel(), [1.5, 5.5])

    def test_mean_all_gradient(self):
        check_op(lambda x: ops.mean_all(ops.mul(x, x)), seed=130)

    def test_broadcast_gradient(self):
        rng = np.random.default_rng(140)
        x = rand(rng, (1, 3, 1, 1))
        err = gradcheck(lambda: ops.mean_all(ops.mul(ops.broadcast_to(x, (2, 3, 4, 4)), ops.broadcast_to(x, (2, 3, 4, 4)))), [x])
        assert err <= 1e-3


# =============================================================================
# conv2d
# =============================================================================


class TestConv2d:
    def test_scalar_kernel(self):
        x = Tensor(np.ones((1, 1, 3, 3), dtype=np.float32))
        w = Tensor(np.full((1, 1, 1, 1), 2.0, dtype=np.float32))
        b = Tensor.zeros((1, 1, 1, 1))
        out = ops.conv2d(x, w, b, stride=1, pad=0)
        assert out.shape == (1, 1, 3, 3)
        assert np.array_equal(out.data, np.full((1, 1, 3, 3), 2.0, dtype=np.float32))

    def test_downsample_shape(self):
        x = Tensor.zeros((1, 3, 128, 128))
        w = Tensor.zeros((64, 3, 3, 3))
        b = Tensor.zeros((1, 64, 1, 1))
        out = ops.conv2d(x, w, b, stride=2, pad=1)
        assert out.shape == (1, 64, 64, 64)

    def test_matches_direct_convolution(self):
        # independent oracle: explicit loop over output positions
        rng = np.random.default_rng(150)
        x = rng.standard_normal((2, 3, 6, 7)).astype(np.float32)
        w = rng.standard_normal((4, 3, 3, 3)).astype(np.float32)
        b = rng.standard_normal((1, 4, 1, 1)).astype(np.float32)
        stride, pad = 2, 1
        xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
        Ho = (6 + 2 * pad - 3) // stride + 1
        Wo = (7 + 2 * pad - 3) // stride + 1
        ref = np.zeros((2, 4, Ho, Wo), dtype=np.float64)
        for n in range(2):
            for co in range(4):
                for i in range(Ho):
                    for j in range(Wo):
                        patch = xp[n, :, i * stride:i * stride + 3, j * stride:j * stride + 3]
                        ref[n, co, i, j] = np.sum(patch.astype(np.float64) * w[co]) + b[0, co, 0, 0]
        out = ops.conv2d(Tensor(x), Tensor(w), Tensor(b), stride=stride, pad=pad)
        assert np.allclose(out.data, ref, atol=1e-4)

    @pytest.mark.parametrize("case", [
        ((1, 2, 5, 5), (3, 2, 3, 3), 1, 1),
        ((1, 1, 4, 4), (2, 1, 2, 2), 2, 0),
        ((2, 3, 6, 6), (4, 3, 3, 3), 2, 1),
        ((1, 2, 7, 5), (2, 2, 4, 4), 2, 1),
        ((1, 3, 8, 8), (1, 3, 7, 7), 1, 3),
        ((1, 2, 6, 6), (3, 2, 4, 4), 2, 2),
    ])
    def test_gradients(self, case):
        shape_x, shape_w, stride, pad = case
        rng = np.random.default_rng(hash(case) % (2**32))
        x = rand(rng, shape_x)
        w = rand(rng, shape_w, scale=0.5)
        b = rand(rng, (1, shape_w[0], 1, 1))
        err = gradcheck(lambda: ops.mean_all(ops.tanh(ops.conv2d(x, w, b, stride=stride, pad=pad))), [x, w, b])
        assert err <= 1e-3, f"{case}: rel err {err:.2e}"

    def test_channel_mismatch(self):
        x = Tensor.zeros((1, 3, 8, 8))
        w = Tensor.zeros((4, 2, 3, 3))
        b = Tensor.zeros((1, 4, 1, 1))
        with pytest.raises(ShapeError):
            ops.conv2d(x, w, b, stride=1, pad=1)

    def test_nonpositive_output(self):
        x = Tensor.zeros((1, 1, 2, 2))
        w = Tensor.zeros((1, 1, 5, 5))
        b = Tensor.zeros((1, 1, 1, 1))
        with pytest.raises(ShapeError):
            ops.conv2d(x, w, b, stride=1, pad=0)


# =============================================================================
# instance_norm
# =============================================================================


class TestInstanceNorm:
    def test_constant_channel_goes_to_zero(self):
        x = Tensor(np.full((1, 1, 4, 4), 5.0, dtype=np.float32))
        gamma = Tensor.channel_vector([1.0])
        beta = Tensor.channel_vector([0.0])
        out = ops.instance_norm(x, gamma, beta, eps=1e-5)
        assert np.allclose(out.data, 0.0, atol=1e-4)

    def test_two_values_normalize_to_unit(self):
        # channel [1, 3]: mean 2, population sigma 1
        x = Tensor(np.array([1.0, 3.0], dtype=np.float32).reshape(1, 1, 1, 2))
        out = ops.instance_norm(x, Tensor.channel_vector([1.0]), Tensor.channel_vector([0.0]), eps=1e-12)
        assert np.allclose(out.data.ravel(), [-1.0, 1.0], atol=1e-3)

    def test_affine_stage(self):
        rng = np.random.default_rng(160)
        x = rand(rng, (1, 2, 5, 5))
        base = ops.instance_norm(x, Tensor.channel_vector([1.0, 1.0]), Tensor.channel_vector([0.0, 0.0]))
        scaled = ops.instance_norm(x, Tensor.channel_vector([2.0, 2.0]), Tensor.channel_vector([1.0, 1.0]))
        assert np.allclose(scaled.data, 2.0 * base.data + 1.0, atol=1e-5)

    def test_normalized_statistics(self):
        rng = np.random.default_rng(170)
        for _ in range(20):
            n, c = int(rng.integers(1, 3)), int(rng.integers(1, 4))
            h = int(rng.integers(4, 9))
            x = rand(rng, (n, c, h, h), scale=float(rng.uniform(0.5, 3.0)))
            var_in = x.data.var(axis=(2, 3))
            if np.any(var_in < 1e-4):
                continue
            out = ops.instance_norm(x, Tensor.channel_vector([1.0] * c), Tensor.channel_vector([0.0] * c), eps=1e-9).data
            assert np.all(np.abs(out.mean(axis=(2, 3))) <= 1e-5)
            assert np.all(np.abs(out.var(axis=(2, 3)) - 1.0) <= 1e-3)

    def test_gradients(self):
        for i, shape in enumerate([(1, 1, 3, 3), (1, 2, 4, 4), (2, 2, 3, 5), (1, 3, 5, 5), (2, 1, 6, 4)]):
            rng = np.random.default_rng(180 + i)
            c = shape[1]
            x = rand(rng, shape)
            gamma = Tensor(rng.uniform(0.5, 1.5, (1, c, 1, 1)).astype(np.float32), requires_grad=True)
            beta = rand(rng, (1, c, 1, 1), scale=0.2)
            err = gradcheck(
                lambda: ops.mean_all(ops.tanh(ops.instance_norm(x, gamma, beta))), [x, gamma, beta]
            )
            assert err <= 1e-3

    def test_bad_param_shape(self):
        x = Tensor.zeros((1, 3, 4, 4))
        with pytest.raises(ShapeError):
            ops.instance_norm(x, Tensor.channel_vector([1.0]), Tensor.channel_vector([0.0, 0.0, 0.0]))


# =============================================================================
# pixel_shuffle
# =============================================================================


class TestPixelShuffle:
    def test_definition_case(self):
        x = Tensor(np.array([1.0, 2.0, 3.0, 4.0], dtype=np.float32).reshape(1, 4, 1, 1))
        out = ops.pixel_shuffle(x, 2)
        assert out.shape == (1, 1, 2, 2)
        assert np.array_equal(out.data[0, 0], np.array([[1.0, 2.0], [3.0, 4.0]], dtype=np.float32))

    def test_shape_arithmetic(self):
        out = ops.pixel_shuffle(Tensor.zeros((2, 16, 4, 4)), 2)
        assert out.shape == (2, 4, 8, 8)

    def test_r3_bijection(self):
        # scatter indices through a (1,9,2,2) -> (1,1,6,6) shuffle; every
        # output position must be hit exactly once
        x = Tensor(np.arange(36, dtype=np.float32).reshape(1, 9, 2, 2))
        out = ops.pixel_shuffle(x, 3)
        assert out.shape == (1, 1, 6, 6)
        seen = np.zeros(36, dtype=int)
        for c in range(9):
            for h in range(2):
                for w in range(2):
                    i, j = divmod(c, 3)
                    oh, ow = h * 3 + i, w * 3 + j
                    assert out.data[0, 0, oh, ow] == x.data[0, c, h, w]
                    seen[oh * 6 + ow] += 1
        assert np.all(seen == 1)

    def test_inverse_roundtrip(self):
        rng = np.random.default_rng(190)
        x = rand(rng, (2, 8, 3, 3))
        back = ops.pixel_unshuffle(ops.pixel_shuffle(x, 2), 2)
        assert np.array_equal(back.data, x.data)

    def test_gradient(self):
        for i, (shape, r) in enumerate([((1, 4, 2, 2), 2), ((1, 9, 2, 2), 3), ((2, 8, 3, 3), 2), ((1, 16, 1, 2), 4), ((1, 4, 4, 4), 2)]):
            rng = np.random.default_rng(200 + i)
            x = rand(rng, shape)
            err = gradcheck(lambda: ops.mean_all(ops.mul(ops.pixel_shuffle(x, r), ops.pixel_shuffle(x, r))), [x])
            assert err <= 1e-3

    def test_indivisible_channels(self):
        with pytest.raises(ShapeError):
            ops.pixel_shuffle(Tensor.zeros((1, 3, 2, 2)), 2)


# =============================================================================
# resample
# =============================================================================


class TestResample:
    def test_nearest_up_definition(self):
        x = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]], dtype=np.float32).reshape(1, 1, 2, 2))
        out = ops.nearest_up_2x(x)
        expect = np.array(
            [[1, 1, 2, 2], [1, 1, 2, 2], [3, 3, 4, 4], [3, 3, 4, 4]], dtype=np.float32
        )
        assert np.array_equal(out.data[0, 0], expect)

    def test_down_inverts_up(self):
        rng = np.random.default_rng(210)
        x = rand(rng, (2, 3, 5, 4))
        back = ops.area_down_2x(ops.nearest_up_2x(x))
        assert np.allclose(back.data, x.data, atol=1e-6)

    def test_single_block_mean(self):
        x = Tensor(np.array([[0.0, 1.0], [1.0, 2.0]], dtype=np.float32).reshape(1, 1, 2, 2))
        out = ops.area_down_2x(x)
        assert out.shape == (1, 1, 1, 1)
        assert out.item() == 1.0

    def test_odd_dims_rejected(self):
        with pytest.raises(ShapeError):
            ops.area_down_2x(Tensor.zeros((1, 1, 3, 4)))

    def test_dispatch(self):
        rng = np.random.default_rng(220)
        x = rand(rng, (1, 2, 4, 4))
        assert np.array_equal(ops.resample(x, "nearest_up_2x").data, ops.nearest_up_2x(x).data)
        assert np.array_equal(ops.resample(x, "area_down_2x").data, ops.area_down_2x(x).data)

    def test_gradients(self):
        for i, shape in enumerate([(1, 1, 2, 2), (1, 2, 3, 3), (2, 1, 4, 2), (1, 3, 2, 4), (1, 1, 5, 5)]):
            rng = np.random.default_rng(230 + i)
            x = rand(rng, shape)
            err = gradcheck(lambda: ops.mean_all(ops.mul(ops.nearest_up_2x(x), ops.nearest_up_2x(x))), [x])
            assert err <= 1e-3
        for i, shape in enumerate([(1, 1, 2, 2), (1, 2, 4, 4), (2, 1, 6, 2), (1, 3, 2, 4), (1, 1, 4, 6)]):
            rng = np.random.default_rng(240 + i)
            x = rand(rng, shape)
            err = gradcheck(lambda: ops.mean_all(ops.mul(ops.area_down_2x(x), ops.area_down_2x(x))), [x])
            assert err <= 1e-3


# =============================================================================
# channel concat / slice
# =============================================================================


class TestConcatChannels:
    def test_shape(self):
        out = ops.concat_channels(Tensor.zeros((1, 3, 8, 8)), Tensor.zeros((1, 3, 8, 8)))
        assert out.shape == (1, 6, 8, 8)

    def test_slice_recovers_first_input(self):
        rng = np.random.default_rng(250)
        a, b = rand(rng, (1, 3, 4, 4)), rand(rng, (1, 2, 4, 4))
        cat = ops.concat_channels(a, b)
        assert np.array_equal(ops.slice_channels(cat, 0, 3).data, a.data)
        assert np.array_equal(ops.slice_channels(cat, 3, 5).data, b.data)

    def test_gradient_splits(self):
        for i in range(5):
            rng = np.random.default_rng(260 + i)
            a = rand(rng, (1, int(rng.integers(1, 4)), 3, 3))
            b = rand(rng, (1, int(rng.integers(1, 4)), 3, 3))
            err = gradcheck(lambda: ops.mean_all(ops.tanh(ops.concat_channels(a, b))), [a, b])
            assert err <= 1e-3

    def test_spatial_mismatch(self):
        with pytest.raises(ShapeError):
            ops.concat_channels(Tensor.zeros((1, 1, 4, 4)), Tensor.zeros((1, 1, 5, 4)))


# =============================================================================
# l1_mean
# =============================================================================


class TestL1Mean:
    def test_equal_inputs(self):
        rng = np.random.default_rng(270)
        a = rand(rng, (1, 3, 4, 4))
        assert ops.l1_mean(a, a.copy()).item() == 0.0

    def test_constant_difference(self):
        a = Tensor.full((1, 3, 4, 4), 0.5)
        b = Tensor.full((1, 3, 4, 4), 0.25)
        assert abs(ops.l1_mean(a, b).item() - 0.25) < 1e-7

    def test_mean_not_sum(self):
        # doubling the spatial size must not change the value
        a16 = Tensor.full((1, 3, 16, 16), 0.5)
        b16 = Tensor.zeros((1, 3, 16, 16))
        a32 = Tensor.full((1, 3, 32, 32), 0.5)
        b32 = Tensor.zeros((1, 3, 32, 32))
        assert abs(ops.l1_mean(a16, b16).item() - ops.l1_mean(a32, b32).item()) < 1e-7

    def test_subgradient_away_from_ties(self):
        for i in range(5):
            rng = np.random.default_rng(280 + i)
            a = rand(rng, (1, 2, 3, 3))
            b = Tensor(a.data + np.sign(rng.standard_normal(a.shape)).astype(np.float32) * 0.5, requires_grad=True)
            err = gradcheck(lambda: ops.l1_mean(a, b), [a, b])
            assert err <= 1e-3

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            ops.l1_mean(Tensor.zeros((1, 1, 2, 2)), Tensor.zeros((1, 1, 2, 3)))


# =============================================================================
# pad / crop / dilate / flip plumbing used by conv backward
# =============================================================================


class TestSpatialPlumbing:
    def test_pad_crop_inverse(self):
        rng = np.random.default_rng(290)
        x = rand(rng, (1, 2, 4, 5))
        padded = ops.pad2d(x, (1, 2, 0, 3))
        assert padded.shape == (1, 2, 7, 8)
        back = ops.crop2d(padded, (1, 2, 0, 3))
        assert np.array_equal(back.data, x.data)

    def test_dilate_inserts_zeros(self):
        x = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]], dtype=np.float32).reshape(1, 1, 2, 2))
        out = ops.dilate2d(x, 2)
        assert out.shape == (1, 1, 3, 3)
        expect = np.array([[1, 0, 2], [0, 0, 0], [3, 0, 4]], dtype=np.float32)
        assert np.array_equal(out.data[0, 0], expect)

    def test_flip_and_swap(self):
        rng = np.random.default_rng(300)
        x = rand(rng, (2, 3, 4, 5))
        assert np.array_equal(ops.flip2d(x).data, x.data[:, :, ::-1, ::-1])
        assert np.array_equal(ops.swap01(x).data, x.data.transpose(1, 0, 2, 3))

    def test_gradients(self):
        rng = np.random.default_rng(310)
        x = rand(rng, (1, 2, 3, 4))
        builders = (
            lambda t: ops.mean_all(ops.mul(ops.pad2d(t, (1, 1, 2, 0)), ops.pad2d(t, (1, 1, 2, 0)))),
            lambda t: ops.mean_all(ops.mul(ops.crop2d(t, (1, 0, 1, 1)), ops.crop2d(t, (1, 0, 1, 1)))),
            lambda t: ops.mean_all(ops.mul(ops.dilate2d(t, 2), ops.dilate2d(t, 2))),
            lambda t: ops.mean_all(ops.mul(ops.flip2d(t), t)),
            lambda t: ops.mean_all(ops.mul(ops.swap01(t), ops.swap01(t))),
        )
        for build in builders:
            y = x.copy(requires_grad=True)
            assert gradcheck(lambda: build(y), [y]) <= 1e-3


# =============================================================================
# purity / determinism
# =============================================================================


class TestPurity:
    def test_forward_ops_bit_identical(self):
        rng = np.random.default_rng(320)
        x = rand(rng, (2, 4, 6, 6))
        w = rand(rng, (3, 4, 3, 3), scale=0.3)
        b = rand(rng, (1, 3, 1, 1))

        def pipeline():
            h = ops.conv2d(x, w, b, stride=2, pad=1)
            h = ops.instance_norm(h, Tensor.channel_vector([1.0] * 3), Tensor.channel_vector([0.0] * 3))
            return ops.tanh(h).data.copy()

        first = pipeline()
        for _ in range(3):
            assert np.array_equal(pipeline(), first)

    def test_inputs_not_mutated(self):
        rng = np.random.default_rng(330)
        x = rand(rng, (1, 2, 4, 4))
        snapshot = x.data.copy()
        ops.relu(x)
        ops.sigmoid(x)
        ops.nearest_up_2x(x)
        ops.pixel_shuffle(x, 1)
        assert np.array_equal(x.data, snapshot)
