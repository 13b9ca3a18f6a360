"""Unit tests for the photometric network."""

import numpy as np
import pytest

from compenkit.core.exceptions import InvalidShapeError
from compenkit.photometric import PANet, decode, encode
from compenkit.tensor import Tensor, pixel_unshuffle

PANET_DEFAULT_PARAMS = 518_856


def _tiny(**kwargs) -> PANet:
    return PANet(widths=(4, 6, 8), rng=np.random.default_rng(0), **kwargs)


class TestPANetShapes:
    """Test forward shapes and value range."""

    def test_default_parameter_count(self):
        assert PANet().count_params() == PANET_DEFAULT_PARAMS

    def test_output_matches_input_and_is_clamped(self, rng):
        net = _tiny()
        x = Tensor(rng.uniform(size=(3, 3, 16, 24)))
        s = Tensor(rng.uniform(size=(1, 3, 16, 24)))

        out = net(x, s).data

        assert out.shape == (3, 3, 16, 24)
        assert out.min() >= 0.0
        assert out.max() <= 1.0

    def test_surface_batch_may_match_images(self, rng):
        net = _tiny()
        x = rng.uniform(size=(2, 3, 16, 16))
        s = rng.uniform(size=(1, 3, 16, 16))

        shared = net(Tensor(x), Tensor(s)).data
        repeated = net(Tensor(x), Tensor(np.repeat(s, 2, axis=0))).data

        np.testing.assert_allclose(shared, repeated, atol=1e-12)

    def test_pyramid_levels(self, rng):
        net = _tiny()
        m0 = pixel_unshuffle(Tensor(rng.uniform(size=(2, 3, 32, 32))), 2)

        f0, f1, f2 = encode(net, m0)

        assert f0.shape == (2, 4, 16, 16)
        assert f1.shape == (2, 6, 8, 8)
        assert f2.shape == (2, 8, 4, 4)
        assert decode(net, (f0, f1, f2), (f0, f1, f2)).shape == (2, 12, 16, 16)

    @pytest.mark.parametrize("k", [1, 2, 4])
    def test_shuffle_factor_sets_channels(self, k, rng):
        net = PANet(k=k, widths=(4, 6, 8))
        size = 16 * k

        assert net.in_channels == 3 * k * k
        x = Tensor(rng.uniform(size=(1, 3, size, size)))
        assert net(x, x).shape == (1, 3, size, size)


class TestPANetValidation:
    """Test input validation."""

    def test_size_not_divisible_by_k(self, rng):
        net = _tiny()
        x = Tensor(rng.uniform(size=(1, 3, 15, 16)))
        with pytest.raises(InvalidShapeError):
            net(x, x)

    def test_unshuffled_size_not_divisible_by_four(self, rng):
        net = _tiny()
        x = Tensor(rng.uniform(size=(1, 3, 12, 12)))
        with pytest.raises(InvalidShapeError):
            net(x, x)

    def test_surface_shape_mismatch(self, rng):
        net = _tiny()
        x = Tensor(rng.uniform(size=(2, 3, 16, 16)))
        s = Tensor(rng.uniform(size=(1, 3, 16, 8)))
        with pytest.raises(InvalidShapeError):
            net(x, s)

    def test_surface_batch_must_be_one_or_n(self, rng):
        net = _tiny()
        x = Tensor(rng.uniform(size=(3, 3, 16, 16)))
        s = Tensor(rng.uniform(size=(2, 3, 16, 16)))
        with pytest.raises(InvalidShapeError):
            net(x, s)

    def test_decode_rejects_mismatched_pyramids(self, rng):
        net = _tiny()
        f = encode(net, pixel_unshuffle(Tensor(rng.uniform(size=(1, 3, 16, 16))), 2))
        g = encode(net, pixel_unshuffle(Tensor(rng.uniform(size=(1, 3, 32, 32))), 2))
        with pytest.raises(InvalidShapeError):
            decode(net, f, g)


class TestAttentionSwitches:
    """Test the two attention gates."""

    def test_gates_add_parameters(self):
        full = _tiny().count_params()
        without_p1 = _tiny(use_p1=False).count_params()
        without_both = _tiny(use_p1=False, use_p2=False).count_params()

        # each gate is a 1x1 convolution over its channel count
        assert full - without_p1 == 12 * 12 + 12
        assert without_p1 - without_both == 4 * 4 + 4

    def test_second_gate_only_on_captured_branch(self, rng):
        net = _tiny()
        m0 = pixel_unshuffle(Tensor(rng.uniform(size=(1, 3, 16, 16))), 2)

        captured = encode(net, m0, captured=True)[0].data
        surface = encode(net, m0, captured=False)[0].data

        assert not np.allclose(captured, surface)
        np.testing.assert_allclose(captured, net.p2(Tensor(surface)).data, atol=1e-12)

    def test_identical_inputs_give_bias_only_output(self, rng):
        net = _tiny(use_p2=False)
        x = Tensor(rng.uniform(size=(1, 3, 16, 16)))
        other = Tensor(rng.uniform(size=(1, 3, 16, 16)))

        # without the second gate both branches match, so every difference is zero
        np.testing.assert_allclose(net(x, x).data, net(other, other).data, atol=1e-12)
