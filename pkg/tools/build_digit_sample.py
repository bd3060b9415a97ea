"""Regenerate ``src/vqp/data/digits_sample.npz``, the bundled offline image sample.

Takes 100 images each of digits 3 and 6 from scikit-learn's 8x8 handwritten
digits, upsamples each to a 20x20 box and pads it to 28x28 (the MNIST layout),
stored as uint8 in [0, 255]. Only needed to rebuild the file; the package reads
the npz with numpy alone.

Usage: python tools/build_digit_sample.py
"""

from pathlib import Path

import numpy as np
from scipy.ndimage import zoom
from sklearn.datasets import load_digits

CLASSES = (3, 6)
PER_CLASS = 100
OUT = Path(__file__).resolve().parents[1] / "src" / "vqp" / "data" / "digits_sample.npz"


def to_mnist_layout(img8: np.ndarray) -> np.ndarray:
    box = np.clip(zoom(img8 / 16.0, 2.5, order=1), 0.0, 1.0)  # 20x20
    out = np.zeros((28, 28))
    out[4:24, 4:24] = box
    return np.round(out * 255).astype(np.uint8)


def main():
    digits = load_digits()
    images, labels = [], []
    for cls in CLASSES:
        idx = np.flatnonzero(digits.target == cls)[:PER_CLASS]
        images += [to_mnist_layout(digits.images[i]) for i in idx]
        labels += [cls] * len(idx)
    np.savez_compressed(OUT, images=np.stack(images), labels=np.array(labels, dtype=np.int64))
    print(f"wrote {OUT} ({len(labels)} images)")


if __name__ == "__main__":
    main()
