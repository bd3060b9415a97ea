import numpy as np
import pytest

from vqp.datasets import (
    ANCHORS,
    Dataset,
    average_pool,
    center_crop,
    image_features,
    make_image_dataset,
    make_split,
    make_synthetic_dataset,
)
from vqp.exceptions import DatasetError


class TestSynthetic:
    def test_anchors_at_zero_jitter(self):
        d = make_synthetic_dataset(20, jitter=0.0, seed=3)
        np.testing.assert_array_equal(d.features[d.labels == 0], np.tile([0.2, 0.6], (10, 1)))
        np.testing.assert_array_equal(d.features[d.labels == 1], np.tile([0.8, 0.8], (10, 1)))

    def test_balance(self):
        assert make_synthetic_dataset(20).class_counts() == (10, 10)

    def test_jitter_bound(self):
        d = make_synthetic_dataset(200, jitter=0.05, seed=1)
        centers = np.array(ANCHORS)[d.labels]
        assert np.max(np.abs(d.features - centers)) <= 0.05

    def test_clipped(self):
        d = make_synthetic_dataset(200, jitter=0.5, seed=1)
        assert d.features.min() >= 0 and d.features.max() <= 1

    def test_deterministic(self):
        a, b = make_synthetic_dataset(20, seed=7), make_synthetic_dataset(20, seed=7)
        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_train_test_differ(self):
        tr, te = make_split("synthetic2", 20, 20, 0)
        assert not np.array_equal(tr.features, te.features)

    def test_odd_n(self):
        with pytest.raises(DatasetError):
            make_synthetic_dataset(7)


class TestImages:
    def test_constant_image_pools_to_constant(self):
        img = np.full((24, 24), 0.37)
        np.testing.assert_allclose(average_pool(img), np.full((4, 4), 0.37))

    def test_pool_block_means(self, rng):
        img = rng.random((24, 24))
        out = average_pool(img)
        assert out[1, 2] == pytest.approx(img[6:12, 12:18].mean())

    def test_center_crop(self):
        img = np.arange(28 * 28).reshape(28, 28)
        np.testing.assert_array_equal(center_crop(img), img[2:26, 2:26])

    def test_features_constant_255(self):
        np.testing.assert_allclose(image_features(np.full((28, 28), 255, dtype=np.uint8)), 1.0)

    def test_bundled_sample(self, monkeypatch):
        monkeypatch.delenv("VQP_DATA_DIR", raising=False)
        d = make_image_dataset(100, seed=0)
        assert d.features.shape == (100, 16)
        assert d.class_counts() == (50, 50)
        assert d.features.min() >= 0 and d.features.max() <= 1

    def test_splits_disjoint(self, monkeypatch):
        monkeypatch.delenv("VQP_DATA_DIR", raising=False)
        tr, te = make_split("image4x4", 20, 20, 1)
        rows = {tuple(r) for r in tr.features}
        assert not any(tuple(r) in rows for r in te.features)

    def test_too_many(self, monkeypatch):
        monkeypatch.delenv("VQP_DATA_DIR", raising=False)
        with pytest.raises(DatasetError, match="VQP_DATA_DIR"):
            make_image_dataset(400)

    def test_missing_source(self, monkeypatch, tmp_path):
        monkeypatch.setenv("VQP_DATA_DIR", str(tmp_path))
        with pytest.raises(DatasetError, match="mnist.npz"):
            make_image_dataset(10)

    def test_external_archive(self, monkeypatch, tmp_path):
        imgs = np.zeros((8, 28, 28), dtype=np.uint8)
        imgs[:4] = 255
        np.savez(tmp_path / "mnist.npz", x_train=imgs, y_train=np.array([3, 3, 3, 3, 6, 6, 6, 6]))
        monkeypatch.setenv("VQP_DATA_DIR", str(tmp_path))
        d = make_image_dataset(8)
        np.testing.assert_array_equal(d.features[d.labels == 0], 1.0)
        np.testing.assert_array_equal(d.features[d.labels == 1], 0.0)


def test_dataset_validation():
    with pytest.raises(DatasetError):
        Dataset(np.array([[1.5, 0.0]]), np.array([0]))
    with pytest.raises(DatasetError):
        Dataset(np.array([[0.5, 0.0]]), np.array([2]))


def test_unknown_task():
    with pytest.raises(DatasetError):
        make_split("cifar", 4, 4, 0)
