import numpy as np
import pytest

from streamkd import datasets
from streamkd.datasets import (ArrayDataset, digits_dataset, load_dataset,
                               load_dataset_dir, save_dataset_dir,
                               synthetic_dataset)


def test_synthetic_shapes_and_range():
    ds = synthetic_dataset(n_classes=5, train_per_class=12, test_per_class=4, size=9)
    assert ds.train_images.shape == (60, 1, 9, 9)
    assert ds.test_images.shape == (20, 1, 9, 9)
    assert ds.train_images.dtype == np.float32
    assert ds.train_labels.dtype == np.int64
    assert 0.0 <= ds.train_images.min() and ds.train_images.max() <= 1.0
    assert ds.class_universe == tuple(range(5))
    assert ds.n_classes == 5
    assert ds.image_shape == (1, 9, 9)
    counts = np.bincount(ds.train_labels)
    assert (counts == 12).all()


def test_synthetic_is_deterministic():
    # built-in datasets play the role of files on disk: identical every call,
    # regardless of surrounding rng state
    np.random.seed(123)
    a = synthetic_dataset(n_classes=3, train_per_class=6, test_per_class=2)
    np.random.seed(999)
    b = synthetic_dataset(n_classes=3, train_per_class=6, test_per_class=2)
    assert np.array_equal(a.train_images, b.train_images)
    assert np.array_equal(a.train_labels, b.train_labels)
    assert np.array_equal(a.test_images, b.test_images)


def test_synthetic_knobs_change_content():
    base = dict(n_classes=3, train_per_class=6, test_per_class=2)
    plain = synthetic_dataset(**base)
    noisy_field = synthetic_dataset(**base, field_noise=0.2)
    multi = synthetic_dataset(**base, modes_per_class=2)
    assert not np.array_equal(plain.train_images, noisy_field.train_images)
    assert not np.array_equal(plain.train_images, multi.train_images)


def test_templates_are_flip_symmetric():
    rng = np.random.default_rng(5)
    t = datasets._smooth_templates(4, 12, rng)
    assert np.allclose(t, t[:, :, ::-1])
    assert t.min() >= 0.15 - 1e-6 and t.max() <= 0.85 + 1e-6


def test_dataset_validation():
    imgs = np.zeros((4, 1, 5, 5), dtype=np.float32)
    labels = np.zeros(4, dtype=np.int64)
    with pytest.raises(ValueError, match="N, C, H, W"):
        ArrayDataset("bad", imgs[:, 0], labels, imgs, labels)
    with pytest.raises(ValueError, match="sample count"):
        ArrayDataset("bad", imgs, labels[:2], imgs, labels)


def test_digits_dataset():
    ds = digits_dataset()
    assert ds.image_shape == (1, 8, 8)
    assert ds.n_classes == 10
    assert 0.0 <= ds.train_images.min() and ds.train_images.max() <= 1.0
    # 80/20 split per class, train and test cover every class
    assert set(np.unique(ds.train_labels)) == set(range(10))
    assert set(np.unique(ds.test_labels)) == set(range(10))
    assert len(ds.train_images) > 3 * len(ds.test_images)


def test_registry_builtins():
    ds = load_dataset("synthetic")
    assert ds.n_classes == 10
    assert len(ds.train_images) == 5000
    small = load_dataset("synthetic_small")
    assert len(small.train_images) == 1200
    with pytest.raises(ValueError, match="unknown dataset id"):
        load_dataset("no_such_dataset")


def test_directory_round_trip(tmp_path):
    ds = synthetic_dataset(n_classes=3, train_per_class=5, test_per_class=2, size=6)
    save_dataset_dir(ds, tmp_path / "toy")
    back = load_dataset_dir(tmp_path / "toy")
    # synthetic data is written class-ordered, so the round trip is exact
    assert np.array_equal(back.train_images, ds.train_images)
    assert np.array_equal(back.train_labels, ds.train_labels)
    assert np.array_equal(back.test_images, ds.test_images)
    assert back.name == "toy"


def test_directory_uint8_conversion(tmp_path):
    root = tmp_path / "u8"
    for split in ("train", "test"):
        (root / split).mkdir(parents=True)
        np.save(root / split / "0.npy",
                np.full((3, 1, 4, 4), 255, dtype=np.uint8))
    ds = load_dataset_dir(root)
    assert ds.train_images.dtype == np.float32
    assert np.allclose(ds.train_images, 1.0)


def test_directory_errors(tmp_path):
    with pytest.raises(FileNotFoundError, match="missing dataset split"):
        load_dataset_dir(tmp_path / "nowhere")
    (tmp_path / "empty" / "train").mkdir(parents=True)
    (tmp_path / "empty" / "test").mkdir(parents=True)
    with pytest.raises(FileNotFoundError, match="no per-class"):
        load_dataset_dir(tmp_path / "empty")


def test_data_root_env_fallback(tmp_path, monkeypatch):
    ds = synthetic_dataset(n_classes=2, train_per_class=4, test_per_class=2, size=6)
    save_dataset_dir(ds, tmp_path / "envdata")
    monkeypatch.setenv(datasets.DATA_ROOT_ENV, str(tmp_path))
    back = load_dataset("envdata")
    assert np.array_equal(back.train_images, ds.train_images)
