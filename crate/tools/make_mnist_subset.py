"""Cut the vendored MNIST subsets in data/ from the full IDX files.

usage: python3 tools/make_mnist_subset.py <dir with train-*/t10k-* idx files>

Keeps the first 12000 training and the first 2000 test digits, unchanged
apart from the item count in the header, and gzips them.
"""
import gzip
import struct
import sys
from pathlib import Path


def cut(src: Path, dst: Path, count: int) -> None:
    raw = src.read_bytes()
    magic, n = struct.unpack(">II", raw[:8])
    ndim = magic & 0xFF
    dims = struct.unpack(">" + "I" * (ndim - 1), raw[8 : 4 + 4 * ndim])
    item = 1
    for d in dims:
        item *= d
    header = struct.pack(">II", magic, count) + raw[8 : 4 + 4 * ndim]
    body = raw[4 + 4 * ndim : 4 + 4 * ndim + count * item]
    assert count <= n and len(body) == count * item
    with gzip.GzipFile(dst, "wb", mtime=0) as f:
        f.write(header + body)


def main() -> None:
    src = Path(sys.argv[1])
    out = Path(__file__).resolve().parent.parent / "data"
    for kind, count, prefix in (("train", 12000, "train-12k"), ("t10k", 2000, "test-2k")):
        cut(src / f"{kind}-images-idx3-ubyte", out / f"mnist-{prefix}-images-idx3-ubyte.gz", count)
        cut(src / f"{kind}-labels-idx1-ubyte", out / f"mnist-{prefix}-labels-idx1-ubyte.gz", count)


if __name__ == "__main__":
    main()
