#!/usr/bin/env python3
"""Regenerates tests/data/digits-*.idx from the digits set bundled with scikit-learn.

8x8 grayscale images rescaled to 0..255, 1000 train and 500 eval samples
from a fixed permutation.
"""

import argparse
import pathlib
import struct

import numpy as np
from sklearn.datasets import load_digits


def write(prefix, images, labels):
    with open(f"{prefix}-images.idx", "wb") as f:
        f.write(struct.pack(">IIII", 2051, len(labels), 8, 8))
        f.write(images.tobytes())
    with open(f"{prefix}-labels.idx", "wb") as f:
        f.write(struct.pack(">II", 2049, len(labels)))
        f.write(labels.tobytes())


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default=str(pathlib.Path(__file__).resolve().parent.parent / "tests" / "data"))
    args = parser.parse_args()
    digits = load_digits()
    x = (digits.images * (255.0 / 16.0)).round().astype(np.uint8)
    y = digits.target.astype(np.uint8)
    idx = np.random.default_rng(20240601).permutation(len(y))
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write(str(out / "digits-train"), x[idx[:1000]], y[idx[:1000]])
    write(str(out / "digits-eval"), x[idx[1000:1500]], y[idx[1000:1500]])


if __name__ == "__main__":
    main()
