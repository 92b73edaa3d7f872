#!/usr/bin/env python3
"""Write scikit-learn's 8x8 digits as 28x28 IDX files (MNIST layout).

Each digit is resized to 20x20 and centered on a 28x28 canvas, like MNIST.
"""
import argparse
import struct
from pathlib import Path

import numpy as np
from PIL import Image
from sklearn.datasets import load_digits


def to_mnist_canvas(img8):
    pixels = np.clip(img8 * (255.0 / 16.0), 0, 255).astype(np.uint8)
    box = Image.fromarray(pixels, mode="L").resize((20, 20), Image.BILINEAR)
    canvas = np.zeros((28, 28), dtype=np.uint8)
    canvas[4:24, 4:24] = np.asarray(box)
    return canvas


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="tests/data", help="output directory")
    ap.add_argument("--prefix", default="digits")
    args = ap.parse_args()

    digits = load_digits()
    images = np.stack([to_mnist_canvas(im) for im in digits.images])
    labels = digits.target.astype(np.uint8)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / f"{args.prefix}-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x803, len(images), 28, 28))
        f.write(images.tobytes())
    with open(out / f"{args.prefix}-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x801, len(labels)))
        f.write(labels.tobytes())
    print(f"wrote {len(images)} images to {out}")


if __name__ == "__main__":
    main()
