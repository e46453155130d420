#!/usr/bin/env python3
"""Convert the digit arrays shipped in the npm `mnist` package into IDX files.

The package bundles 10,000 real MNIST digits as JSON arrays of 784 floats in
[0, 1] per image, grouped by class. This script rebuilds an IDX image/label
pair (magic 0x803 / 0x801) with a deterministic interleaved order so the
loader can treat it like any other IDX dataset.

Usage:
    npm pack mnist && tar xzf mnist-*.tgz
    python3 tools/mnist_from_npm.py package/src/digits data/mnist
"""
import argparse
import json
import pathlib
import struct


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("digits_dir", type=pathlib.Path)
    ap.add_argument("out_dir", type=pathlib.Path)
    args = ap.parse_args()

    per_class = []
    for c in range(10):
        flat = json.loads((args.digits_dir / f"{c}.json").read_text())["data"]
        n = len(flat) // 784
        per_class.append([flat[i * 784:(i + 1) * 784] for i in range(n)])

    # Round-robin over classes keeps any prefix roughly class-balanced.
    images, labels = [], []
    i = 0
    while any(i < len(rows) for rows in per_class):
        for c, rows in enumerate(per_class):
            if i < len(rows):
                images.append(rows[i])
                labels.append(c)
        i += 1

    args.out_dir.mkdir(parents=True, exist_ok=True)
    with open(args.out_dir / "images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x803, len(images), 28, 28))
        f.write(bytes(min(255, max(0, round(v * 255))) for img in images for v in img))
    with open(args.out_dir / "labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x801, len(labels)))
        f.write(bytes(labels))
    print(f"wrote {len(images)} images to {args.out_dir}")


if __name__ == "__main__":
    main()
