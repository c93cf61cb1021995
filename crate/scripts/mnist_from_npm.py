#!/usr/bin/env python3
"""Rebuild data/mnist/*.gz from the `mnist` npm package.

The package ships 10,000 MNIST digits as per-class JSON arrays of
pixel/255 rounded to three decimals, which round-trips to the original
u8 values. Samples are interleaved with a fixed shuffle and written as
standard big-endian IDX files.

    npm pack mnist && tar xzf mnist-*.tgz
    python3 scripts/mnist_from_npm.py package/src/digits data/mnist
"""
import gzip
import json
import random
import struct
import sys
from pathlib import Path


def main(src: Path, dst: Path) -> None:
    samples = []
    for digit in range(10):
        flat = json.loads((src / f"{digit}.json").read_text())["data"]
        assert len(flat) % 784 == 0
        for i in range(0, len(flat), 784):
            pixels = bytes(round(v * 255) for v in flat[i : i + 784])
            samples.append((pixels, digit))
    random.Random(20160613).shuffle(samples)

    dst.mkdir(parents=True, exist_ok=True)
    n = len(samples)
    images = struct.pack(">IIII", 0x00000803, n, 28, 28) + b"".join(p for p, _ in samples)
    labels = struct.pack(">II", 0x00000801, n) + bytes(d for _, d in samples)
    # mtime=0 keeps the archives reproducible
    with gzip.GzipFile(dst / "digits-images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(images)
    with gzip.GzipFile(dst / "digits-labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(labels)
    print(f"wrote {n} samples to {dst}")


if __name__ == "__main__":
    main(Path(sys.argv[1]), Path(sys.argv[2]))
