#!/usr/bin/env python3
"""Build the bundled MNIST subset (IDX format) from the `mnist` npm package.

    npm pack mnist@1.1.0 && tar xzf mnist-1.1.0.tgz
    python3 tools/make_mnist_subset.py package/src/digits data

Takes the first N digits of every class (default 200), interleaved by class.
"""
import argparse
import json
import pathlib
import struct


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("digits_dir", type=pathlib.Path)
    ap.add_argument("out_dir", type=pathlib.Path)
    ap.add_argument("--per-class", type=int, default=200)
    args = ap.parse_args()

    per_class = []
    for c in range(10):
        flat = json.loads((args.digits_dir / f"{c}.json").read_text())["data"]
        if len(flat) < 784 * args.per_class:
            raise SystemExit(f"class {c}: only {len(flat) // 784} digits")
        per_class.append([flat[i * 784:(i + 1) * 784] for i in range(args.per_class)])

    images, labels = bytearray(), bytearray()
    for i in range(args.per_class):
        for c in range(10):
            images += bytes(min(255, max(0, round(v * 255))) for v in per_class[c][i])
            labels.append(c)

    n = len(labels)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    (args.out_dir / "mnist-subset-images.idx3-ubyte").write_bytes(struct.pack(">IIII", 0x803, n, 28, 28) + images)
    (args.out_dir / "mnist-subset-labels.idx1-ubyte").write_bytes(struct.pack(">II", 0x801, n) + labels)
    print(f"wrote {n} images to {args.out_dir}")


if __name__ == "__main__":
    main()
