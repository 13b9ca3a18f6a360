"""
Unit Tests for the Tensor Core.

Covers elementwise arithmetic and its gradients, graph bookkeeping,
convolutions against scipy, pixel shuffling, bilinear sampling, modules,
the optimizer and the learning-rate schedule.
"""

import numpy as np
import pytest
from scipy.signal import correlate2d

from compenkit.core.exceptions import InvalidArgumentError, InvalidShapeError, NonFiniteError
from compenkit.tensor import (
    Adam,
    Conv2d,
    ConvTranspose2d,
    Module,
    PixelAttention,
    Tensor,
    activation,
    as_tensor,
    clamp01,
    conv2d,
    conv_transpose2d,
    elementwise,
    expand_batch,
    grid_sample_bilinear,
    is_grad_enabled,
    no_grad,
    pixel_shuffle,
    pixel_unshuffle,
    step_decay_lr,
)


class TestTensorArithmetic:
    """Test elementwise arithmetic and reverse-mode gradients."""

    def test_default_dtype_is_float32(self):
        """Test that integer and float32 inputs are stored as float32."""
        assert Tensor([1, 2, 3]).dtype == np.float32
        assert Tensor(np.zeros(2, dtype=np.float64)).dtype == np.float64

    def test_add_mul_gradients(self):
        """Test d(a*b + a)/da = b + 1 and d/db = a."""
        a = Tensor(np.array([1.0, 2.0, 3.0]), requires_grad=True)
        b = Tensor(np.array([4.0, 5.0, 6.0]), requires_grad=True)
        (a * b + a).sum().backward()
        np.testing.assert_allclose(a.grad, [5.0, 6.0, 7.0])
        np.testing.assert_allclose(b.grad, [1.0, 2.0, 3.0])

    def test_scalar_operands(self):
        """Test scalar broadcasting on both sides of an operator."""
        a = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        out = (2.0 * a - 1.0) / 4.0 + (1.0 - a)
        out.sum().backward()
        np.testing.assert_allclose(out.data, [0.25, -0.25])
        np.testing.assert_allclose(a.grad, [-0.5, -0.5])

    def test_division_and_power(self):
        """Test quotient and power rules."""
        a = Tensor(np.array([2.0, 4.0]), requires_grad=True)
        b = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        (a / b + a**2).sum().backward()
        np.testing.assert_allclose(a.grad, [1.0 + 4.0, 0.5 + 8.0])
        np.testing.assert_allclose(b.grad, [-2.0, -1.0])

    def test_gradients_accumulate(self):
        """Test that two backward passes add their gradients."""
        a = Tensor(np.ones(3), requires_grad=True)
        (a * 2.0).sum().backward()
        (a * 3.0).sum().backward()
        np.testing.assert_allclose(a.grad, [5.0, 5.0, 5.0])

    def test_shared_subexpression(self):
        """Test a node used twice receives both contributions."""
        a = Tensor(np.array([3.0]), requires_grad=True)
        b = a * a
        (b + b).sum().backward()
        np.testing.assert_allclose(a.grad, [12.0])

    def test_shape_mismatch_raises(self):
        """Test that non-scalar operands must have equal shapes."""
        with pytest.raises(InvalidShapeError):
            Tensor(np.ones(3)) + Tensor(np.ones(4))

    def test_backward_needs_scalar(self):
        """Test backward on a vector without an upstream gradient."""
        a = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(InvalidArgumentError):
            (a * 2.0).backward()

    def test_non_finite_result_raises(self):
        """Test that producing Inf raises NonFiniteError."""
        with np.errstate(all="ignore"):
            with pytest.raises(NonFiniteError):
                Tensor(np.array([1.0])) / Tensor(np.array([0.0]))

    def test_no_grad_records_nothing(self):
        """Test that no_grad disables graph construction."""
        a = Tensor(np.ones(2), requires_grad=True)
        with no_grad():
            assert not is_grad_enabled()
            out = a * 2.0
        assert is_grad_enabled()
        assert not out.requires_grad

    def test_reductions_and_reshape(self):
        """Test mean over an axis, reshape and permute gradients."""
        a = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
        out = a.permute(1, 0).reshape(6).mean()
        out.backward()
        assert out.item() == pytest.approx(2.5)
        np.testing.assert_allclose(a.grad, np.full((2, 3), 1.0 / 6.0))

    def test_matmul_gradient(self):
        """Test matrix-product gradients."""
        a = Tensor(np.array([[1.0, 2.0]]), requires_grad=True)
        b = Tensor(np.array([[3.0], [4.0]]), requires_grad=True)
        (a @ b).sum().backward()
        np.testing.assert_allclose(a.grad, [[3.0, 4.0]])
        np.testing.assert_allclose(b.grad, [[1.0], [2.0]])

    def test_astype_keeps_graph(self):
        """Test that a dtype cast passes gradients back in the source dtype."""
        a = Tensor(np.array([1.0, 2.0], dtype=np.float32), requires_grad=True)
        b = a.astype(np.float64)
        (b * b).sum().backward()
        assert b.dtype == np.float64
        assert a.grad.dtype == np.float32
        np.testing.assert_allclose(a.grad, [2.0, 4.0])

    def test_as_tensor_cast_is_differentiable(self):
        """Test that casting an existing tensor does not detach it."""
        a = Tensor(np.array([0.5, -1.5]), requires_grad=True)
        cast = as_tensor(a, dtype=np.float32)
        (cast * 3.0).sum().backward()
        assert cast.requires_grad
        np.testing.assert_allclose(a.grad, [3.0, 3.0])
        assert as_tensor(a) is a
        assert a.astype(np.float64) is a

    def test_astype_rejects_non_float(self):
        """Test that tensors stay floating point."""
        with pytest.raises(InvalidArgumentError):
            Tensor(np.ones(2)).astype(np.int32)


class TestActivations:
    """Test activations, clamp and the elementwise dispatcher."""

    def test_relu(self):
        x = Tensor(np.array([-1.0, 0.5, 2.0]), requires_grad=True)
        out = activation(x, "relu")
        out.sum().backward()
        np.testing.assert_allclose(out.data, [0.0, 0.5, 2.0])
        np.testing.assert_allclose(x.grad, [0.0, 1.0, 1.0])

    def test_sigmoid_at_zero(self):
        x = Tensor(np.zeros(1), requires_grad=True)
        out = activation(x, "sigmoid")
        out.sum().backward()
        assert out.item() == pytest.approx(0.5)
        assert x.grad[0] == pytest.approx(0.25)

    def test_clamp01_gradient_mask(self):
        x = Tensor(np.array([-0.5, 0.5, 1.5]), requires_grad=True)
        clamp01(x).sum().backward()
        np.testing.assert_allclose(x.grad, [0.0, 1.0, 0.0])

    def test_unknown_kinds_raise(self):
        x = Tensor(np.ones(2))
        with pytest.raises(InvalidArgumentError):
            activation(x, "tanh")  # type: ignore[arg-type]
        with pytest.raises(InvalidArgumentError):
            elementwise("div", x, x)  # type: ignore[arg-type]
        with pytest.raises(InvalidArgumentError):
            elementwise("add", x)

    def test_expand_batch_sums_gradient(self):
        x = Tensor(np.ones((1, 2, 3, 3)), requires_grad=True)
        out = expand_batch(x, 4)
        assert out.shape == (4, 2, 3, 3)
        out.sum().backward()
        np.testing.assert_allclose(x.grad, np.full((1, 2, 3, 3), 4.0))


class TestConvolution:
    """Test conv2d and conv_transpose2d."""

    def test_conv2d_matches_scipy(self, rng):
        """Test valid cross-correlation against scipy.signal.correlate2d."""
        x = rng.standard_normal((2, 3, 7, 6))
        w = rng.standard_normal((4, 3, 3, 3))
        b = rng.standard_normal(4)
        out = conv2d(Tensor(x), Tensor(w), Tensor(b)).data
        expected = np.zeros((2, 4, 5, 4))
        for n in range(2):
            for o in range(4):
                taps = (correlate2d(x[n, c], w[o, c], mode="valid") for c in range(3))
                expected[n, o] = b[o] + sum(taps)
        np.testing.assert_allclose(out, expected, atol=1e-10)

    def test_conv2d_stride_and_padding_shape(self):
        x = Tensor(np.zeros((1, 2, 9, 8)))
        w = Tensor(np.zeros((5, 2, 3, 3)))
        assert conv2d(x, w, stride=2, padding=1).shape == (1, 5, 5, 4)

    def test_conv2d_channel_mismatch(self):
        with pytest.raises(InvalidShapeError):
            conv2d(Tensor(np.zeros((1, 2, 5, 5))), Tensor(np.zeros((3, 4, 3, 3))))

    def test_conv2d_bad_stride(self):
        with pytest.raises(InvalidArgumentError):
            conv2d(Tensor(np.zeros((1, 1, 5, 5))), Tensor(np.zeros((1, 1, 3, 3))), stride=0)

    def test_conv_transpose_output_size(self):
        x = Tensor(np.zeros((1, 3, 4, 5)))
        w = Tensor(np.zeros((3, 2, 4, 4)))
        assert conv_transpose2d(x, w, stride=2, padding=1).shape == (1, 2, 8, 10)

    def test_conv_transpose_single_pixel_stamps_kernel(self, rng):
        """Test that one input pixel places the kernel into the output."""
        w = rng.standard_normal((1, 1, 3, 3))
        x = np.zeros((1, 1, 3, 3))
        x[0, 0, 1, 1] = 1.0
        out = conv_transpose2d(Tensor(x), Tensor(w), stride=1, padding=1).data
        np.testing.assert_allclose(out[0, 0], w[0, 0], atol=1e-12)

    def test_layer_param_counts(self):
        """Test the single 3x3 conv from 2 to 4 channels with bias has 76 parameters."""
        assert Conv2d(2, 4).count_params() == 76
        assert ConvTranspose2d(3, 2).count_params() == 3 * 2 * 16 + 2
        assert PixelAttention(5).count_params() == 5 * 5 + 5


class TestPixelShuffle:
    """Test the space/channel rearrangements."""

    def test_unshuffle_channel_layout(self):
        """Test output channel c*k*k + dy*k + dx holds pixel (dy, dx) of each block."""
        x = np.arange(2 * 4 * 4, dtype=np.float64).reshape(1, 2, 4, 4)
        out = pixel_unshuffle(Tensor(x), 2).data
        assert out.shape == (1, 8, 2, 2)
        for c in range(2):
            for dy in range(2):
                for dx in range(2):
                    channel = c * 4 + dy * 2 + dx
                    np.testing.assert_array_equal(out[0, channel], x[0, c, dy::2, dx::2])

    def test_round_trip_bit_exact(self, rng):
        x = rng.standard_normal((2, 3, 6, 4))
        back = pixel_shuffle(pixel_unshuffle(Tensor(x), 2), 2).data
        np.testing.assert_array_equal(back, x)

    def test_indivisible_size_raises(self):
        with pytest.raises(InvalidShapeError):
            pixel_unshuffle(Tensor(np.zeros((1, 3, 5, 4))), 2)
        with pytest.raises(InvalidShapeError):
            pixel_shuffle(Tensor(np.zeros((1, 3, 2, 2))), 2)


class TestGridSample:
    """Test bilinear sampling conventions."""

    def test_corner_coordinates_hit_corner_pixels(self):
        image = np.arange(12, dtype=np.float64).reshape(1, 1, 3, 4)
        grid = np.array([[[-1.0, -1.0], [1.0, -1.0]], [[-1.0, 1.0], [1.0, 1.0]]])
        out = grid_sample_bilinear(Tensor(image), Tensor(grid)).data
        np.testing.assert_allclose(out[0, 0], [[0.0, 3.0], [8.0, 11.0]])

    def test_midpoint_interpolates(self):
        image = np.array([[[[0.0, 2.0], [4.0, 6.0]]]])
        grid = np.zeros((1, 1, 2))
        out = grid_sample_bilinear(Tensor(image), Tensor(grid)).data
        assert out[0, 0, 0, 0] == pytest.approx(3.0)

    def test_outside_is_border_clamped_without_grid_gradient(self):
        image = Tensor(np.array([[[[1.0, 2.0], [3.0, 4.0]]]]))
        grid = Tensor(np.array([[[3.0, -1.0]]]), requires_grad=True)
        out = grid_sample_bilinear(image, grid)
        out.sum().backward()
        assert out.item() == pytest.approx(2.0)
        assert grid.grad[0, 0, 0] == 0.0

    def test_bad_grid_shape(self):
        with pytest.raises(InvalidShapeError):
            grid_sample_bilinear(Tensor(np.zeros((1, 1, 3, 3))), Tensor(np.zeros((2, 2, 3))))


class _Pair(Module):
    def __init__(self) -> None:
        super().__init__()
        self.first = Conv2d(1, 2, rng=np.random.default_rng(0))
        self.second = Conv2d(2, 1, rng=np.random.default_rng(1))
        self.frozen = Tensor(np.ones(3))

    def forward(self, x: Tensor) -> Tensor:
        return self.second(self.first(x))


class TestModule:
    """Test parameter registration and state handling."""

    def test_named_parameters_are_dotted_and_ordered(self):
        names = [name for name, _ in _Pair().named_parameters()]
        assert names == ["first.weight", "first.bias", "second.weight", "second.bias"]

    def test_empty_module_has_no_parameters(self):
        assert Module().count_params() == 0

    def test_state_dict_round_trip(self):
        a, b = _Pair(), _Pair()
        for _, tensor in b.named_parameters():
            tensor.data = tensor.data + 1.0
        b.load_state_dict(a.state_dict())
        for (_, ta), (_, tb) in zip(a.named_parameters(), b.named_parameters()):
            np.testing.assert_array_equal(ta.data, tb.data)

    def test_load_state_dict_rejects_wrong_names_and_shapes(self):
        model = _Pair()
        state = model.state_dict()
        with pytest.raises(InvalidArgumentError):
            model.load_state_dict({**state, "extra": np.zeros(1)})
        state["first.bias"] = np.zeros(5)
        with pytest.raises(InvalidShapeError):
            model.load_state_dict(state)

    def test_astype_converts_parameters(self):
        model = _Pair().astype(np.float64)
        assert all(t.dtype == np.float64 for _, t in model.named_parameters())


class TestOptimizer:
    """Test Adam and the learning-rate schedule."""

    def test_step_decay(self):
        assert step_decay_lr(1e-3, 5.0, 1500, 1499) == pytest.approx(1e-3)
        assert step_decay_lr(1e-3, 5.0, 1500, 1500) == pytest.approx(1e-3 / 5)
        assert step_decay_lr(1e-3, 5.0, 1500, 3000) == pytest.approx(1e-3 / 25)

    def test_first_adam_step_moves_by_lr(self):
        """Test the bias-corrected first step equals lr * sign(grad)."""
        x = Tensor(np.array([1.0, -1.0]), requires_grad=True)
        model = Module()
        model.x = x
        optimizer = Adam(model.parameters(), lr=0.1)
        (x * Tensor(np.array([3.0, -2.0]))).sum().backward()
        optimizer.step()
        np.testing.assert_allclose(x.data, [0.9, -0.9], atol=1e-6)

    def test_adam_minimizes_quadratic(self):
        x = Tensor(np.array([5.0]), requires_grad=True)
        model = Module()
        model.x = x
        optimizer = Adam(model.parameters(), lr=0.05)
        for _ in range(1000):
            optimizer.zero_grad()
            ((x - 2.0) ** 2).sum().backward()
            optimizer.step()
        assert x.data[0] == pytest.approx(2.0, abs=0.05)

    def test_invalid_lr(self):
        with pytest.raises(InvalidArgumentError):
            Adam([], lr=0.0)
