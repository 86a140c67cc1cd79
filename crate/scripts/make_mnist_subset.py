#!/usr/bin/env python3
"""Build the 5000-digit MNIST subset shipped in data/.

Source: the digit arrays bundled with the `mnist` npm package (1000 digits per
class, pixel values pre-scaled to [0, 1] with three decimals). Pixels are
rescaled to u8 and written as gzipped IDX files.

usage: make_mnist_subset.py <path-to-npm-package> <out-dir>
"""
import gzip
import json
import random
import struct
import sys
from pathlib import Path

PER_CLASS = 500
SEED = 20240601


def main() -> None:
    pkg, out = Path(sys.argv[1]), Path(sys.argv[2])
    rng = random.Random(SEED)
    samples = []
    for digit in range(10):
        data = json.loads((pkg / "src" / "digits" / f"{digit}.json").read_text())["data"]
        count = len(data) // 784
        picks = rng.sample(range(count), PER_CLASS)
        for p in picks:
            pixels = data[p * 784:(p + 1) * 784]
            samples.append((digit, bytes(min(255, round(v * 255)) for v in pixels)))
    rng.shuffle(samples)

    n = len(samples)
    images = struct.pack(">IIII", 0x00000803, n, 28, 28) + b"".join(s[1] for s in samples)
    labels = struct.pack(">II", 0x00000801, n) + bytes(s[0] for s in samples)
    out.mkdir(parents=True, exist_ok=True)
    with gzip.GzipFile(out / "mnist-subset-images.idx.gz", "wb", mtime=0) as f:
        f.write(images)
    with gzip.GzipFile(out / "mnist-subset-labels.idx.gz", "wb", mtime=0) as f:
        f.write(labels)


if __name__ == "__main__":
    main()
