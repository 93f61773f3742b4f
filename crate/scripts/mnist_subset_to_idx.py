#!/usr/bin/env python3
"""Convert the digit sample shipped in the `mnist` npm package into IDX files.

The npm package stores 1000 digits per class as JSON arrays of 784 floats in
[0, 1] (pixel/255 rounded to three decimals). This writes gzip-compressed IDX
files: 900 digits per class as the train split and 100 per class as t10k.

    npm pack mnist && tar xzf mnist-*.tgz
    python3 scripts/mnist_subset_to_idx.py package/src/digits data/mnist-subset
"""
import gzip
import json
import random
import struct
import sys
from pathlib import Path

PER_CLASS_TEST = 100


def write_idx(out_dir, stem, images, labels):
    with gzip.GzipFile(out_dir / f"{stem}-images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))
    with gzip.GzipFile(out_dir / f"{stem}-labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    src, out = Path(sys.argv[1]), Path(sys.argv[2])
    out.mkdir(parents=True, exist_ok=True)
    train, test = [], []
    for digit in range(10):
        flat = json.loads((src / f"{digit}.json").read_text())["data"]
        assert len(flat) % 784 == 0
        imgs = [
            [min(255, max(0, round(v * 255))) for v in flat[i : i + 784]]
            for i in range(0, len(flat), 784)
        ]
        train += [(img, digit) for img in imgs[:-PER_CLASS_TEST]]
        test += [(img, digit) for img in imgs[-PER_CLASS_TEST:]]
    rng = random.Random(20200101)
    rng.shuffle(train)
    rng.shuffle(test)
    write_idx(out, "train", [i for i, _ in train], [l for _, l in train])
    write_idx(out, "t10k", [i for i, _ in test], [l for _, l in test])
    print(f"train={len(train)} test={len(test)} -> {out}")


if __name__ == "__main__":
    main()
