"""Rebuild data/mnist/ from the 10 000 MNIST digits shipped in the npm ``mnist`` package.

    npm pack mnist@1.1.0 && tar xzf mnist-1.1.0.tgz
    python tools/build_mnist_subset.py package/src/digits data/mnist

The package stores each digit as 784 floats rounded to three decimals; there
are exactly 256 distinct levels, so ``round(v * 255)`` recovers the original
bytes.  Samples are shuffled with a fixed seed and split 8000 / 2000.
"""
import argparse
import json
from pathlib import Path

import numpy as np

from dynstruct.data import write_idx_images, write_idx_labels

N_TRAIN = 8000


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("digits_dir", type=Path)
    ap.add_argument("out_dir", type=Path)
    ap.add_argument("--seed", type=int, default=20190917)
    args = ap.parse_args()

    images, labels = [], []
    for digit in range(10):
        data = json.loads((args.digits_dir / f"{digit}.json").read_text())["data"]
        x = np.asarray(data, dtype=np.float64).reshape(-1, 784)
        images.append(x)
        labels.append(np.full(len(x), digit))
    x = np.concatenate(images)
    y = np.concatenate(labels)
    pixels = np.rint(x * 255)
    assert np.abs(pixels / 255 - x).max() < 5e-4
    pixels = pixels.astype(np.uint8).reshape(-1, 28, 28)

    order = np.random.default_rng(args.seed).permutation(len(y))
    pixels, y = pixels[order], y[order]
    args.out_dir.mkdir(parents=True, exist_ok=True)
    for name, sl in (("train", slice(0, N_TRAIN)), ("test", slice(N_TRAIN, None))):
        write_idx_images(args.out_dir / f"{name}-images-idx3-ubyte.gz", pixels[sl])
        write_idx_labels(args.out_dir / f"{name}-labels-idx1-ubyte.gz", y[sl])
        print(f"{name}: {len(y[sl])} samples, class counts {np.bincount(y[sl], minlength=10).tolist()}")


if __name__ == "__main__":
    main()
