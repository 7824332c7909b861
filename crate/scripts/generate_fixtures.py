#!/usr/bin/env python3
"""Generate IDX-format digit fixtures for tests and examples.

Uses the scikit-learn handwritten-digits set (1797 real 8x8 scans, offline)
upsampled to 28x28, so the files are drop-in compatible with the standard
MNIST IDX layout. To run against real MNIST instead, place the original
train-images-idx3-ubyte / train-labels-idx1-ubyte pairs in fixtures/ under
the same names.

Deterministic: a fixed seed drives the stratified train/test split.
"""
import struct
import sys
from pathlib import Path

import numpy as np
from sklearn.datasets import load_digits

SEED = 20260823
TEST_FRACTION = 0.2
OUT_DIR = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).parent.parent / "fixtures"


def upsample_28(img8):
    """8x8 -> 28x28 by nearest-neighbor index mapping."""
    idx = (np.arange(28) * 8) // 28
    return img8[np.ix_(idx, idx)]


def write_idx_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x0803, len(images), 28, 28))
        f.write(np.asarray(images, dtype=np.uint8).tobytes())


def write_idx_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x0801, len(labels)))
        f.write(np.asarray(labels, dtype=np.uint8).tobytes())


def main():
    digits = load_digits()
    # scale 0..16 -> 0..255
    imgs = np.clip(digits.images * 255.0 / 16.0, 0, 255).astype(np.uint8)
    labels = digits.target.astype(np.uint8)

    rng = np.random.default_rng(SEED)
    train_idx, test_idx = [], []
    for cls in range(10):
        members = np.flatnonzero(labels == cls)
        members = members[rng.permutation(len(members))]
        n_test = max(1, int(round(len(members) * TEST_FRACTION)))
        test_idx.extend(members[:n_test])
        train_idx.extend(members[n_test:])
    train_idx = np.sort(np.array(train_idx))
    test_idx = np.sort(np.array(test_idx))

    OUT_DIR.mkdir(parents=True, exist_ok=True)
    for split, idx in (("train", train_idx), ("t10k", test_idx)):
        images = np.stack([upsample_28(imgs[i]) for i in idx])
        write_idx_images(OUT_DIR / f"{split}-images-idx3-ubyte", images)
        write_idx_labels(OUT_DIR / f"{split}-labels-idx1-ubyte", labels[idx])
        print(f"{split}: {len(idx)} samples -> {OUT_DIR}")


if __name__ == "__main__":
    main()
