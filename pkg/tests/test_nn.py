import numpy as np
import pytest

import bingan.tensor as T
from bingan.errors import ConfigError, DimensionError
from bingan.nn import (
    LayerSpec,
    Network,
    _downsample_plan,
    build_discriminator,
    build_generator,
)
from bingan.tensor import Tensor


class TestDownsamplePlan:
    def test_paper_input_yields_tap_grid(self):
        (s1, p1), (s2, p2), out = _downsample_plan(32)
        h1 = (32 + 2 * p1 - 3) // s1 + 1
        h2 = (h1 + 2 * p2 - 3) // s2 + 1
        assert (h2, out) == (6, 6)

    def test_desk_input(self):
        (s1, p1), (s2, p2), out = _downsample_plan(16)
        h1 = (16 + 2 * p1 - 3) // s1 + 1
        h2 = (h1 + 2 * p2 - 3) // s2 + 1
        assert h2 == out and out >= 1

    @pytest.mark.parametrize("hw", [8, 12, 16, 20, 24, 32, 48, 64])
    def test_divisibility_holds_for_many_sizes(self, hw):
        # both reductions must satisfy the exact-output contract
        (s1, p1), (s2, p2), out = _downsample_plan(hw)
        assert (hw + 2 * p1 - 3) % s1 == 0
        h1 = (hw + 2 * p1 - 3) // s1 + 1
        assert (h1 + 2 * p2 - 3) % s2 == 0
        assert (h1 + 2 * p2 - 3) // s2 + 1 == out


class TestDiscriminatorShapes:
    def test_matching_paper_tap_width(self):
        # 32x32 single-channel patches -> 256 channels on a 6x6 grid
        net = build_discriminator("matching", profile="paper", in_hw=32)
        x = Tensor(np.zeros((2, 1, 32, 32)))
        logit, f, h = net.forward(x)
        assert h.shape == (2, 9216)
        assert f.shape == (2, 256)
        assert logit.shape == (2, 1)

    def test_retrieval_paper_tap_width(self):
        net = build_discriminator("retrieval", code_bits=32, profile="paper")
        x = Tensor(np.zeros((2, 3, 32, 32)))
        logit, f, h = net.forward(x)
        assert f.shape == (2, 32)
        assert h.shape == (2, 192)
        assert logit.shape == (2, 1)

    def test_high_dim_exceeds_code_dim(self):
        for task in ("matching", "retrieval"):
            net = build_discriminator(task, code_bits=16, profile="desk")
            x = Tensor(np.zeros((2, net.input_shape[0], 16, 16)))
            _, f, h = net.forward(x)
            assert h.shape[1] > f.shape[1]

    def test_retrieval_code_widths(self):
        for bits in (16, 32, 64):
            net = build_discriminator("retrieval", code_bits=bits)
            _, f, _ = net.forward(Tensor(np.zeros((1, 3, 32, 32))))
            assert f.shape == (1, bits)

    def test_invalid_configs_rejected(self):
        with pytest.raises(ConfigError):
            build_discriminator("segmentation")
        with pytest.raises(ConfigError):
            build_discriminator("retrieval", code_bits=24, profile="paper")
        with pytest.raises(ConfigError):
            build_discriminator("retrieval", profile="cluster")
        with pytest.raises(ConfigError):
            build_discriminator("matching", in_hw=4)

    def test_desk_profile_quarters_channels(self):
        desk = build_discriminator("matching", profile="desk", in_hw=16)
        _, f, _ = desk.forward(Tensor(np.zeros((1, 1, 16, 16))))
        assert f.shape == (1, 64)  # 256 / 4


class TestGenerator:
    def test_output_shape_and_range(self, rng):
        gen = build_generator(z_dim=10, out_shape=(3, 16, 16), base_channels=16)
        z = Tensor(rng.standard_normal((4, 10)))
        out, _, _ = gen(z)
        assert out.shape == (4, 3, 16, 16)
        assert np.all(np.abs(out.data) < 1.0)  # tanh output

    def test_32x32(self, rng):
        gen = build_generator(z_dim=8, out_shape=(1, 32, 32), base_channels=8)
        assert gen(Tensor(rng.standard_normal((2, 8))))[0].shape == (2, 1, 32, 32)

    def test_invalid_z(self):
        with pytest.raises(ConfigError):
            build_generator(z_dim=0, out_shape=(3, 16, 16))


class TestNetworkMechanics:
    def small_net(self, seed=0):
        specs = [
            LayerSpec("conv3x3", units=4, stride=1, pad=1),
            LayerSpec("leaky_relu"),
            LayerSpec("avg_pool_global"),
            LayerSpec("dense", units=3),
            LayerSpec("dense", units=1),
        ]
        return Network(specs, (2, 6, 6), tap_f=3, tap_h=2, seed=seed)

    def test_parameter_names_stable_and_unique(self):
        net = self.small_net()
        names = [n for n, _ in net.parameters()]
        assert names == sorted(set(names), key=names.index)
        assert all("." in n for n in names)
        assert names == [n for n, _ in net.parameters()]

    def test_seed_reproducibility(self):
        a, b = self.small_net(seed=5), self.small_net(seed=5)
        for (na, pa), (nb, pb) in zip(a.parameters(), b.parameters()):
            assert na == nb
            np.testing.assert_array_equal(pa.data, pb.data)
        c = self.small_net(seed=6)
        assert any(
            not np.array_equal(pa.data, pc.data)
            for (_, pa), (_, pc) in zip(a.parameters(), c.parameters())
        )

    def test_biases_zero_at_init(self):
        net = self.small_net()
        for name, p in net.parameters():
            if name.endswith(".b"):
                assert not np.any(p.data)

    def test_forward_deterministic(self, rng):
        net = self.small_net()
        x = rng.standard_normal((3, 2, 6, 6))
        l1, f1, h1 = net.forward(Tensor(x))
        l2, f2, h2 = net.forward(Tensor(x.copy()))
        np.testing.assert_array_equal(l1.data, l2.data)
        np.testing.assert_array_equal(f1.data, f2.data)
        np.testing.assert_array_equal(h1.data, h2.data)

    def test_wrong_input_shape_rejected(self):
        net = self.small_net()
        with pytest.raises(DimensionError):
            net.forward(Tensor(np.zeros((1, 3, 6, 6))))

    def test_gradients_reach_every_parameter(self, rng):
        net = build_discriminator(
            "retrieval", code_bits=8, profile="desk", in_hw=8, seed=1
        )
        x = Tensor(rng.standard_normal((2, 3, 8, 8)))
        logit, f, h = net.forward(x)
        loss = T.sum_(T.square(logit)) + T.sum_(T.square(f))
        T.backward(loss)
        for name, p in net.parameters():
            assert p.grad is not None, name
            assert np.all(np.isfinite(p.grad)), name

    def test_activation_scale_preserved_through_depth(self, rng):
        # fan-in-scaled init: deep taps keep O(1) magnitudes instead of
        # collapsing toward zero
        net = build_discriminator("retrieval", code_bits=16, profile="desk", seed=3)
        x = Tensor(rng.standard_normal((8, 3, 16, 16)))
        _, f, h = net.forward(x)
        assert 0.05 < np.abs(f.data).mean() < 50.0
        assert 0.05 < np.abs(h.data).mean() < 50.0


class TestGeneratorDiscriminatorLoop:
    def test_end_to_end_gradient_flow(self, rng):
        gen = build_generator(z_dim=6, out_shape=(3, 16, 16), base_channels=8, seed=2)
        disc = build_discriminator("retrieval", code_bits=8, profile="desk", seed=3)
        z = Tensor(rng.standard_normal((2, 6)))
        fake, _, _ = gen(z)
        logit, _, _ = disc.forward(fake)
        T.backward(T.mean(T.softplus(-logit)))
        grads = [p.grad for _, p in gen.parameters()]
        assert all(g is not None for g in grads)
        assert any(np.any(g) for g in grads)
