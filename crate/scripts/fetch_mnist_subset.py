#!/usr/bin/env python3
"""Build a small MNIST subset in IDX format from the digits bundled with the
`mnist` npm package (10000 digits, 28x28).

Usage: scripts/fetch_mnist_subset.py [OUT_DIR]

Produces train-{images-idx3,labels-idx1}-ubyte (8000 samples) and
t10k-{images-idx3,labels-idx1}-ubyte (2000 samples), stratified per class.
"""
import json
import os
import random
import struct
import subprocess
import sys
import tarfile
import tempfile

OUT = sys.argv[1] if len(sys.argv) > 1 else os.path.join(os.path.dirname(__file__), "..", "data", "mnist-subset")
TEST_FRACTION = 0.2


def write_idx(prefix, samples):
    with open(prefix + "-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x803, len(samples), 28, 28))
        for pixels, _ in samples:
            f.write(bytes(pixels))
    with open(prefix + "-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x801, len(samples)))
        f.write(bytes(label for _, label in samples))


def main():
    os.makedirs(OUT, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(["npm", "pack", "mnist@1.1.0", "--silent"], cwd=tmp, check=True)
        with tarfile.open(os.path.join(tmp, "mnist-1.1.0.tgz")) as tar:
            tar.extractall(tmp)
        train, test = [], []
        rng = random.Random(20240229)
        for digit in range(10):
            with open(os.path.join(tmp, "package", "src", "digits", f"{digit}.json")) as f:
                flat = json.load(f)["data"]
            items = []
            for i in range(len(flat) // 784):
                pixels = [max(0, min(255, round(v * 255))) for v in flat[i * 784:(i + 1) * 784]]
                items.append((pixels, digit))
            rng.shuffle(items)
            n_test = round(len(items) * TEST_FRACTION)
            test.extend(items[:n_test])
            train.extend(items[n_test:])
        rng.shuffle(train)
        rng.shuffle(test)
    write_idx(os.path.join(OUT, "train"), train)
    write_idx(os.path.join(OUT, "t10k"), test)
    print(f"wrote {len(train)} train / {len(test)} test samples to {OUT}")


if __name__ == "__main__":
    main()
