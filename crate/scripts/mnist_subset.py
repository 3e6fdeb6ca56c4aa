#!/usr/bin/env python3
"""Build a 5,000/5,000 MNIST subset in IDX format from the npm `mnist` package.

The package ships 10,000 real MNIST digits as JSON (pixel/255, 3 decimals).
Pixels are restored with round(v * 255), shuffled with a fixed seed, and split
into train/test halves written under <out>/mnist/ with the standard file names.

    npm pack mnist && tar xzf mnist-1.1.0.tgz
    python3 scripts/mnist_subset.py package/src/digits data
"""

import argparse
import json
import random
import struct
from pathlib import Path

PIXELS = 28 * 28


def load_digits(digits_dir):
    images, labels = [], []
    for label in range(10):
        data = json.loads((digits_dir / f"{label}.json").read_text())["data"]
        if len(data) % PIXELS:
            raise SystemExit(f"{label}.json: {len(data)} values is not a multiple of {PIXELS}")
        for i in range(0, len(data), PIXELS):
            images.append(bytes(min(255, max(0, round(v * 255))) for v in data[i : i + PIXELS]))
            labels.append(label)
    return images, labels


def write_idx(path_images, path_labels, images, labels):
    with open(path_images, "wb") as f:
        f.write(struct.pack(">IIII", 0x803, len(images), 28, 28))
        for img in images:
            f.write(img)
    with open(path_labels, "wb") as f:
        f.write(struct.pack(">II", 0x801, len(labels)))
        f.write(bytes(labels))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("digits_dir", type=Path)
    ap.add_argument("out_root", type=Path)
    ap.add_argument("--train", type=int, default=5000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    images, labels = load_digits(args.digits_dir)
    order = list(range(len(images)))
    random.Random(args.seed).shuffle(order)
    train, test = order[: args.train], order[args.train :]

    out = args.out_root / "mnist"
    out.mkdir(parents=True, exist_ok=True)
    for prefix, idx in (("train", train), ("t10k", test)):
        write_idx(
            out / f"{prefix}-images-idx3-ubyte",
            out / f"{prefix}-labels-idx1-ubyte",
            [images[i] for i in idx],
            [labels[i] for i in idx],
        )
    print(f"wrote {len(train)} train and {len(test)} test images to {out}")


if __name__ == "__main__":
    main()
