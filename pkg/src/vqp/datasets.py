"""Two-class datasets: a jittered two-point synthetic task and 4x4 digit images.

Features always lie in [0, 1]; labels are 0/1 and every dataset is class
balanced. Image sources, in order of preference:

* ``$VQP_DATA_DIR/mnist.npz`` (the standard ``x_train``/``y_train`` archive),
* the bundled 200-image sample (``digits_sample.npz``: 100 each of digits 3
  and 6, upsampled from the 8x8 scikit-learn digits into the 28x28 layout).
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import DatasetError
from .rng import stream

ANCHORS = ((0.2, 0.6), (0.8, 0.8))  # class 0, class 1
IMAGE_CLASSES = (3, 6)
CROP = 24
POOL = 4
BUNDLED = Path(__file__).parent / "data" / "digits_sample.npz"


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray  # (n, d) in [0, 1]
    labels: np.ndarray  # (n,) in {0, 1}
    name: str = ""

    def __post_init__(self):
        f = np.asarray(self.features, dtype=float)
        y = np.asarray(self.labels, dtype=np.int64)
        if f.ndim != 2 or len(f) != len(y):
            raise DatasetError("features must be (n, d) with one label per row")
        if np.any((f < 0) | (f > 1)):
            raise DatasetError("features must lie in [0, 1]")
        if np.any((y != 0) & (y != 1)):
            raise DatasetError("labels must be 0 or 1")
        object.__setattr__(self, "features", f)
        object.__setattr__(self, "labels", y)

    def __len__(self):
        return len(self.labels)

    def __iter__(self):
        return iter(zip(self.features, self.labels))

    def class_counts(self) -> tuple[int, int]:
        return int(np.sum(self.labels == 0)), int(np.sum(self.labels == 1))


def _check_even(n):
    if n < 2 or n % 2:
        raise DatasetError(f"n must be a positive even number, got {n}")


def make_synthetic_dataset(n: int, jitter: float = 0.05, seed: int = 0, part: str = "train") -> Dataset:
    """``n/2`` points near each anchor with uniform jitter in ``[-jitter, jitter]^2``.

    ``part`` selects an independent stream, so train and test sets drawn with
    the same seed differ.
    """
    _check_even(n)
    rng = stream(seed, f"synthetic-{part}")
    labels = np.repeat([0, 1], n // 2)
    centers = np.array(ANCHORS)[labels]
    x = np.clip(centers + rng.uniform(-jitter, jitter, size=centers.shape), 0.0, 1.0)
    order = rng.permutation(n)
    return Dataset(x[order], labels[order], f"synthetic2-{part}")


def center_crop(img: np.ndarray, size: int = CROP) -> np.ndarray:
    h, w = img.shape
    top, left = (h - size) // 2, (w - size) // 2
    return img[top : top + size, left : left + size]


def average_pool(img: np.ndarray, out: int = POOL) -> np.ndarray:
    h, w = img.shape
    if h % out or w % out:
        raise DatasetError(f"{h}x{w} image does not pool evenly to {out}x{out}")
    return img.reshape(out, h // out, out, w // out).mean(axis=(1, 3))


def image_features(img: np.ndarray) -> np.ndarray:
    """28x28 (or any size >= 24) image in [0, 255] -> 16 features in [0, 1]."""
    img = np.asarray(img, dtype=float) / 255.0
    return np.clip(average_pool(center_crop(img)).ravel(), 0.0, 1.0)


def load_image_source() -> tuple[np.ndarray, np.ndarray]:
    """Images (uint8, 28x28) and digit labels for the two image classes."""
    data_dir = os.environ.get("VQP_DATA_DIR")
    if data_dir:
        path = Path(data_dir) / "mnist.npz"
        if not path.exists():
            raise DatasetError(
                f"VQP_DATA_DIR is set but {path} does not exist; place the standard mnist.npz "
                "(arrays x_train, y_train) there, or unset VQP_DATA_DIR to use the bundled sample"
            )
        with np.load(path) as z:
            images, labels = z["x_train"], z["y_train"]
    else:
        if not BUNDLED.exists():
            raise DatasetError(f"bundled digit sample missing at {BUNDLED}; run tools/build_digit_sample.py")
        with np.load(BUNDLED) as z:
            images, labels = z["images"], z["labels"]
    keep = np.isin(labels, IMAGE_CLASSES)
    return images[keep], labels[keep]


def make_image_dataset(n: int, seed: int = 0, part: str = "train", exclude: int = 0) -> Dataset:
    """Class-balanced 4x4 digit features (digit 3 -> label 0, digit 6 -> label 1).

    Images are shuffled per class with the seed; ``exclude`` skips that many
    images per class first, so a test split can be drawn disjoint from a
    training split of size ``exclude * 2``.
    """
    _check_even(n)
    images, digits = load_image_source()
    rng = stream(seed, "images")
    feats, labels = [], []
    for label, digit in enumerate(IMAGE_CLASSES):
        idx = rng.permutation(np.flatnonzero(digits == digit))
        take = idx[exclude : exclude + n // 2]
        if len(take) < n // 2:
            raise DatasetError(
                f"only {len(idx)} images of digit {digit} available; need {exclude + n // 2} "
                "(set VQP_DATA_DIR to a full mnist.npz for larger runs)"
            )
        feats += [image_features(images[i]) for i in take]
        labels += [label] * len(take)
    order = stream(seed, f"images-{part}").permutation(n)
    return Dataset(np.array(feats)[order], np.array(labels)[order], f"image4x4-{part}")


def make_split(task: str, n_train: int, n_test: int, seed: int, jitter: float = 0.05) -> tuple[Dataset, Dataset]:
    if task == "synthetic2":
        return (
            make_synthetic_dataset(n_train, jitter, seed, "train"),
            make_synthetic_dataset(n_test, jitter, seed, "test"),
        )
    if task == "image4x4":
        return make_image_dataset(n_train, seed, "train"), make_image_dataset(n_test, seed, "test", exclude=n_train // 2)
    raise DatasetError(f"unknown task {task!r}; expected 'synthetic2' or 'image4x4'")
