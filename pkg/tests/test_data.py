import numpy as np
import pytest

from bingan.data import (
    ImageSet,
    PatchPairSet,
    downsample,
    load_container,
    normalize,
    save_container,
    synth_toy_pairs,
    synth_toy_retrieval,
)
from bingan.errors import ContractError, DataError, DimensionError, FormatError


class TestNormalize:
    def test_endpoints_and_midpoint(self):
        np.testing.assert_allclose(
            normalize(np.array([0, 255, 128], dtype=np.uint8)),
            [-1.0, 1.0, 128 / 127.5 - 1.0],
        )

    def test_range(self, rng):
        x = rng.integers(0, 256, size=(4, 3, 8, 8), dtype=np.uint8)
        y = normalize(x)
        assert y.dtype == np.float64
        assert y.min() >= -1.0 and y.max() <= 1.0


class TestImageSet:
    def test_validation(self, rng):
        imgs = rng.integers(0, 256, (5, 3, 8, 8), dtype=np.uint8)
        with pytest.raises(DimensionError):
            ImageSet(imgs[0], np.zeros(5, np.int32))
        with pytest.raises(DataError):
            ImageSet(imgs, np.zeros(4, np.int32))
        with pytest.raises(DataError):
            ImageSet(imgs, np.zeros(5, np.int32), split="validation")
        with pytest.raises(DataError):
            ImageSet(imgs, np.full(5, -1, np.int32))

    def test_float_images_match_normalize(self, rng):
        imgs = rng.integers(0, 256, (3, 1, 4, 4), dtype=np.uint8)
        ds = ImageSet(imgs, np.zeros(3, np.int32))
        np.testing.assert_array_equal(ds.float_images(), normalize(imgs))
        assert len(ds) == 3


class TestPatchPairSet:
    def test_validation(self, rng):
        a = rng.integers(0, 256, (4, 1, 8, 8), dtype=np.uint8)
        with pytest.raises(DimensionError):
            PatchPairSet(a, a[:3], np.ones(4, bool))
        with pytest.raises(DimensionError):
            PatchPairSet(a[:, 0], a[:, 0], np.ones(4, bool))
        with pytest.raises(DataError):
            PatchPairSet(a, a, np.ones(3, bool))

    def test_all_patches_pools_both_sides(self, rng):
        a = rng.integers(0, 256, (4, 1, 8, 8), dtype=np.uint8)
        b = rng.integers(0, 256, (4, 1, 8, 8), dtype=np.uint8)
        ds = PatchPairSet(a, b, np.zeros(4, bool))
        pool = ds.all_patches()
        assert pool.shape == (8, 1, 8, 8)
        np.testing.assert_array_equal(pool[:4], a)
        np.testing.assert_array_equal(pool[4:], b)


class TestContainer:
    def test_imageset_roundtrip_bytes(self, rng, tmp_path):
        ds = ImageSet(
            rng.integers(0, 256, (6, 3, 8, 8), dtype=np.uint8),
            rng.integers(0, 4, 6).astype(np.int32),
            split="test",
        )
        p = tmp_path / "a.bgds"
        first = save_container(ds, p)
        back = load_container(p)
        np.testing.assert_array_equal(back.images, ds.images)
        np.testing.assert_array_equal(back.labels, ds.labels)
        assert back.split == "test"
        assert save_container(back, p) == first

    def test_pairs_roundtrip_bytes(self, rng, tmp_path):
        ds = PatchPairSet(
            rng.integers(0, 256, (5, 1, 8, 8), dtype=np.uint8),
            rng.integers(0, 256, (5, 1, 8, 8), dtype=np.uint8),
            rng.random(5) < 0.5,
        )
        p = tmp_path / "b.bgds"
        first = save_container(ds, p)
        back = load_container(p)
        np.testing.assert_array_equal(back.match, ds.match)
        assert save_container(back, p) == first

    def test_corruption_rejected(self, rng, tmp_path):
        ds = ImageSet(
            rng.integers(0, 256, (2, 1, 4, 4), dtype=np.uint8),
            np.zeros(2, np.int32),
        )
        p = tmp_path / "c.bgds"
        save_container(ds, p)
        blob = bytearray(p.read_bytes())
        blob[-1] ^= 0x01  # flip a CRC bit
        p.write_bytes(bytes(blob))
        with pytest.raises(FormatError):
            load_container(p)

    def test_wrong_magic_rejected(self, tmp_path):
        p = tmp_path / "d.bgds"
        p.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(FormatError):
            load_container(p)

    def test_unsupported_type_rejected(self, tmp_path):
        with pytest.raises(ContractError):
            save_container([1, 2, 3], tmp_path / "e.bgds")


class TestDownsample:
    def test_checkerboard_rounds_half_even(self):
        # each 2x2 block averages (0+255+255+0)/4 = 127.5 -> rounds to 128
        board = np.zeros((4, 4), dtype=np.uint8)
        board[::2, 1::2] = 255
        board[1::2, ::2] = 255
        np.testing.assert_array_equal(downsample(board), np.full((2, 2), 128))

    def test_constant_preserved(self):
        np.testing.assert_array_equal(
            downsample(np.full((1, 1, 6, 6), 77, np.uint8)),
            np.full((1, 1, 3, 3), 77),
        )

    def test_block_mean_oracle(self, rng):
        p = rng.integers(0, 256, (10, 10), dtype=np.uint8)
        got = downsample(p)
        for i in range(5):
            for j in range(5):
                want = np.round(
                    p[2 * i : 2 * i + 2, 2 * j : 2 * j + 2].astype(float).mean()
                )
                assert got[i, j] == want

    def test_odd_dims_rejected(self):
        with pytest.raises(DimensionError):
            downsample(np.zeros((5, 4), dtype=np.uint8))


class TestSynthRetrieval:
    def test_shape_and_labels(self):
        ds = synth_toy_retrieval(seed=3, n_per_class=10, n_classes=4, hw=16)
        assert ds.images.shape == (40, 3, 16, 16)
        assert ds.images.dtype == np.uint8
        counts = np.bincount(ds.labels)
        np.testing.assert_array_equal(counts, [10] * 4)

    def test_seed_determinism(self):
        a = synth_toy_retrieval(seed=11, n_per_class=5)
        b = synth_toy_retrieval(seed=11, n_per_class=5)
        np.testing.assert_array_equal(a.images, b.images)
        c = synth_toy_retrieval(seed=12, n_per_class=5)
        assert not np.array_equal(a.images, c.images)

    def test_classes_are_separable_in_pixel_space(self):
        # class structure must be learnable: same-class images sit closer to
        # their own class centroid than to the best other centroid on average
        ds = synth_toy_retrieval(seed=5, n_per_class=40, n_classes=4, hw=16)
        x = ds.float_images().reshape(len(ds), -1)
        cents = np.stack([x[ds.labels == c].mean(0) for c in range(4)])
        d = ((x[:, None, :] - cents[None]) ** 2).sum(-1)
        assert (d.argmin(1) == ds.labels).mean() > 0.5


class TestSynthPairs:
    def test_shapes_and_balance(self):
        ds = synth_toy_pairs(seed=2, n_pairs=50, hw=16)
        assert ds.patches_a.shape == (50, 1, 16, 16)
        frac = ds.match.mean()
        assert 0.3 < frac < 0.7

    def test_seed_determinism(self):
        a = synth_toy_pairs(seed=8, n_pairs=20)
        b = synth_toy_pairs(seed=8, n_pairs=20)
        np.testing.assert_array_equal(a.patches_a, b.patches_a)
        np.testing.assert_array_equal(a.patches_b, b.patches_b)
        np.testing.assert_array_equal(a.match, b.match)

    def test_zero_jitter_gives_identical_matched_pairs(self):
        ds = synth_toy_pairs(seed=4, n_pairs=30, jitter=0)
        m = ds.match
        np.testing.assert_array_equal(ds.patches_a[m], ds.patches_b[m])

    def test_matched_closer_than_unmatched(self):
        ds = synth_toy_pairs(seed=6, n_pairs=200, hw=16)
        a, b = ds.float_pairs()
        d = ((a - b) ** 2).sum((1, 2, 3))
        assert d[ds.match].mean() < d[~ds.match].mean()
