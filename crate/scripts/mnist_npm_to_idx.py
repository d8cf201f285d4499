#!/usr/bin/env python3
"""Convert the digits shipped in the npm `mnist` package into IDX files.

The package (https://www.npmjs.com/package/mnist) bundles 10,000 MNIST
digits as JSON, one file per class, with pixels pre-scaled to [0, 1] and
rounded to three decimals. This writes `train-images-idx3-ubyte` and
`train-labels-idx1-ubyte` so the standard loader can read them.

    npm pack mnist && tar xzf mnist-*.tgz
    python3 scripts/mnist_npm_to_idx.py package/src/digits data/mnist
"""
import json
import pathlib
import struct
import sys


def main(src: str, dst: str) -> None:
    src_dir, dst_dir = pathlib.Path(src), pathlib.Path(dst)
    dst_dir.mkdir(parents=True, exist_ok=True)
    images, labels = bytearray(), bytearray()
    count = 0
    for digit in range(10):
        flat = json.loads((src_dir / f"{digit}.json").read_text())["data"]
        assert len(flat) % 784 == 0, f"{digit}.json: ragged pixel array"
        n = len(flat) // 784
        images.extend(min(255, max(0, round(v * 255))) for v in flat)
        labels.extend([digit] * n)
        count += n
    (dst_dir / "train-images-idx3-ubyte").write_bytes(
        struct.pack(">IIII", 0x803, count, 28, 28) + bytes(images))
    (dst_dir / "train-labels-idx1-ubyte").write_bytes(
        struct.pack(">II", 0x801, count) + bytes(labels))
    print(f"wrote {count} images to {dst_dir}")


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
