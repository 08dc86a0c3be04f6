#!/usr/bin/env python3
"""Write the 5000-image MNIST subset shipped inside the mlxtend wheel as gzip IDX files.

Usage:
    pip download mlxtend==0.24.0 --no-deps -d /tmp/wheels
    python3 tools/make_mnist_subset.py /tmp/wheels/mlxtend-0.24.0-py3-none-any.whl data/mnist-5k
"""
import argparse
import gzip
import random
import struct
import zipfile
from pathlib import Path

MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("wheel")
    ap.add_argument("outdir")
    args = ap.parse_args()

    with zipfile.ZipFile(args.wheel) as zf:
        raw = gzip.decompress(zf.read(MEMBER)).decode()
    rows = [line.split(",") for line in raw.splitlines() if line.strip()]
    n = len(rows)
    # the source is sorted by digit; shuffle so a row prefix covers all classes
    random.Random(20240511).shuffle(rows)
    pixels = bytearray()
    labels = bytearray()
    for r in rows:
        if len(r) != 785:
            raise SystemExit(f"unexpected row width {len(r)}")
        pixels.extend(int(v) for v in r[:784])
        labels.append(int(r[784]))

    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    # mtime=0 keeps the output byte-stable across runs
    with open(out / "train-images-idx3-ubyte.gz", "wb") as f:
        with gzip.GzipFile(fileobj=f, mode="wb", mtime=0) as g:
            g.write(struct.pack(">IIII", 0x803, n, 28, 28))
            g.write(bytes(pixels))
    with open(out / "train-labels-idx1-ubyte.gz", "wb") as f:
        with gzip.GzipFile(fileobj=f, mode="wb", mtime=0) as g:
            g.write(struct.pack(">II", 0x801, n))
            g.write(bytes(labels))
    print(f"wrote {n} images to {out}")


if __name__ == "__main__":
    main()
