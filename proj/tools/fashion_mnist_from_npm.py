#!/usr/bin/env python3
# Copyright 2026 The HGA Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Rebuild FashionMNIST IDX files from the `fashion-mnist` npm package.

The npm package stores the 70000 images grouped by class. The first 6000
images of each class become the training split and the next 1000 the test
split; both splits are shuffled with a fixed seed so the output is stable.

    npm pack fashion-mnist && tar xzf fashion-mnist-*.tgz
    python3 tools/fashion_mnist_from_npm.py package/src/clothes /data/fashion_mnist
"""
import json
import random
import struct
import sys
from pathlib import Path

TRAIN_PER_CLASS = 6000
TEST_PER_CLASS = 1000


def write_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))


def write_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    if len(sys.argv) != 3:
        sys.exit(__doc__)
    src, dst = Path(sys.argv[1]), Path(sys.argv[2])
    dst.mkdir(parents=True, exist_ok=True)
    train, test = [], []
    for label in range(10):
        rows = json.loads((src / f"{label}.json").read_text())["data"]
        rows = [r for r in rows if len(r) == 784]
        if len(rows) < TRAIN_PER_CLASS + TEST_PER_CLASS:
            sys.exit(f"class {label}: only {len(rows)} images")
        train += [(r, label) for r in rows[:TRAIN_PER_CLASS]]
        test += [(r, label) for r in rows[TRAIN_PER_CLASS:TRAIN_PER_CLASS + TEST_PER_CLASS]]
    rng = random.Random(20230101)
    rng.shuffle(train)
    rng.shuffle(test)
    for name, split in (("train", train), ("t10k", test)):
        write_images(dst / f"{name}-images-idx3-ubyte", [r for r, _ in split])
        write_labels(dst / f"{name}-labels-idx1-ubyte", [l for _, l in split])
    print(f"wrote {len(train)} train / {len(test)} test images to {dst}")


if __name__ == "__main__":
    main()
