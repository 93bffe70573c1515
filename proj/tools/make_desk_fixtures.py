#!/usr/bin/env python3
"""Regenerates the desk-scale IDX fixtures under tests/data/.

Exports the scikit-learn 8x8 handwritten-digit images as an in-distribution
train/test pair, and 8x8 grayscale patches cut from the scikit-image sample
photographs as an out-of-distribution set. Both are written in the IDX
format so they exercise the same loader as full-size MNIST-family files.

The outputs are committed; rerun this only to rebuild them from scratch.
"""

import struct
import numpy as np

OUT = "tests/data"


def write_idx_images(path, images):
    n, rows, cols = images.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, n, rows, cols))
        f.write(images.astype(np.uint8).tobytes())


def write_idx_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(labels.astype(np.uint8).tobytes())


def export_digits(rng):
    from sklearn.datasets import load_digits

    d = load_digits()
    images = np.round(d.images * (255.0 / 16.0)).astype(np.uint8)
    labels = d.target.astype(np.uint8)
    order = rng.permutation(len(images))
    images, labels = images[order], labels[order]
    n_train = 1500
    write_idx_images(f"{OUT}/digits-train-images-idx3-ubyte", images[:n_train])
    write_idx_labels(f"{OUT}/digits-train-labels-idx1-ubyte", labels[:n_train])
    write_idx_images(f"{OUT}/digits-test-images-idx3-ubyte", images[n_train:])
    write_idx_labels(f"{OUT}/digits-test-labels-idx1-ubyte", labels[n_train:])
    print("digits:", n_train, "train,", len(images) - n_train, "test")


def export_patches(rng, n_patches=900):
    import skimage.data as sd

    photos = [sd.camera(), sd.coins(), sd.moon(), sd.text(), sd.brick(), sd.grass()]
    patches = []
    per_photo = n_patches // len(photos) + 1
    for img in photos:
        h, w = img.shape
        for _ in range(per_photo):
            r = rng.integers(0, h - 8)
            c = rng.integers(0, w - 8)
            patches.append(img[r : r + 8, c : c + 8])
    patches = np.stack(patches)
    order = rng.permutation(len(patches))[:n_patches]
    patches = patches[order]
    write_idx_images(f"{OUT}/patches-test-images-idx3-ubyte", patches)
    write_idx_labels(f"{OUT}/patches-test-labels-idx1-ubyte", np.zeros(n_patches, dtype=np.uint8))
    print("patches:", n_patches)


def main():
    rng = np.random.default_rng(20240901)
    export_digits(rng)
    export_patches(rng)


if __name__ == "__main__":
    main()
