"""Build small MNIST IDX fixtures from the 5000-digit sample shipped in the mlxtend wheel.

The full MNIST archive is not reachable from the build sandbox, but the
package index is. The mlxtend wheel bundles ``mnist_5k.csv.gz`` (5000 rows,
784 pixel values in 0..255 followed by the label). This script downloads the
wheel (or reuses one given with ``--wheel``), extracts that file and writes

    tests/data/mnist5k-images-idx3-ubyte.gz
    tests/data/mnist5k-labels-idx1-ubyte.gz

Usage::

    python scripts/fetch_mnist_subset.py [--wheel PATH] [--out tests/data]
"""

import argparse
import gzip
import io
from pathlib import Path
import subprocess
import sys
import tempfile
import zipfile

import numpy as np

from ddm.data_io import load_idx, save_idx

MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def download_wheel(dest):
    subprocess.run(
        [sys.executable, "-m", "pip", "download", "mlxtend==0.24.0", "--no-deps", "-d", str(dest), "-q"],
        check=True,
    )
    return next(Path(dest).glob("mlxtend-*.whl"))


def read_subset(wheel):
    with zipfile.ZipFile(wheel) as zf:
        raw = gzip.decompress(zf.read(MEMBER))
    table = np.loadtxt(io.StringIO(raw.decode()), delimiter=",", dtype=np.int64)
    if table.shape != (5000, 785):
        raise SystemExit(f"unexpected table shape {table.shape}")
    return table[:, :784].reshape(-1, 28, 28).astype(np.uint8), table[:, 784].astype(np.uint8)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--wheel", type=Path)
    ap.add_argument("--out", type=Path, default=Path(__file__).resolve().parents[1] / "tests" / "data")
    args = ap.parse_args(argv)
    with tempfile.TemporaryDirectory() as tmp:
        wheel = args.wheel or download_wheel(tmp)
        images, labels = read_subset(wheel)
    args.out.mkdir(parents=True, exist_ok=True)
    img_path = args.out / "mnist5k-images-idx3-ubyte.gz"
    lab_path = args.out / "mnist5k-labels-idx1-ubyte.gz"
    save_idx(img_path, images)
    save_idx(lab_path, labels, labels=True)
    check = load_idx(img_path, lab_path)
    assert np.array_equal(np.round(check.points * 255).astype(np.uint8), images.reshape(5000, -1))
    print(f"wrote {img_path} and {lab_path}: {len(check)} digits, label counts {np.bincount(check.labels).tolist()}")


if __name__ == "__main__":
    main()
