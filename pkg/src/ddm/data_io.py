"""Dataset ingestion (IDX, CSV) and bit-exact model persistence.

Model file layout (all integers little-endian u32, all reals little-endian
IEEE-754 float64, matrices row-major)::

    magic            8 bytes  b"DDMMDL01"
    version          u32
    K, M, J          u32 x 3   latent dim, decoder depth, encoder depth
    D                u32       preprocessor input dimension
    flags            u32       bit 0: PCA basis
    widths           u32 x J   encoder widths K_1..K_J
    threshold        f64
    encoder layers   (Gamma_j: K_j x K_{j-1}, gamma_j: K_j) for j = 1..J, K_0 = K
    decoder layers   (Omega_m: K x K, omega_m: K) for m = 1..M
    marginal         alpha, beta
    margin           f64
    mean             D
    basis            D x K
    scale, low, high K each
"""

from dataclasses import dataclass
import gzip
import logging
import struct

import numpy as np

from .beta import BetaParams
from .density import ModelBundle
from .network import Decoder, Encoder, Layer
from .preprocess import Preprocessor, fit_preprocessor

log = logging.getLogger(__name__)

__all__ = [
    "Dataset",
    "ParseError",
    "ModelFormatError",
    "load_idx",
    "save_idx",
    "load_csv",
    "save_csv",
    "load_dataset",
    "fit_preprocessor",
    "Preprocessor",
    "save_model",
    "load_model",
    "model_to_bytes",
    "model_from_bytes",
    "predicted_model_size",
    "MODEL_MAGIC",
    "MODEL_VERSION",
]

IDX_IMAGES = 0x00000803
IDX_LABELS = 0x00000801
MODEL_MAGIC = b"DDMMDL01"
MODEL_VERSION = 1


class ParseError(ValueError):
    def __init__(self, message, offset=None):
        super().__init__(message if offset is None else f"{message} (byte offset {offset})")
        self.offset = offset


class ModelFormatError(ValueError):
    pass


@dataclass
class Dataset:
    points: np.ndarray
    labels: np.ndarray = None
    source: str = ""

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if self.points.ndim != 2:
            raise ValueError("points must be an N x D array")
        if self.points.size and not np.all(np.isfinite(self.points)):
            raise ValueError("points must be finite")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.points.shape[0],):
                raise ValueError("labels must have one entry per point")

    def __len__(self):
        return self.points.shape[0]


def _read_bytes(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def parse_idx(raw, source=""):
    """Parse IDX bytes: ubyte images (0x803) or labels (0x801)."""
    if len(raw) < 4:
        raise ParseError("file too short for IDX magic", 0)
    (magic,) = struct.unpack_from(">I", raw, 0)
    if magic not in (IDX_IMAGES, IDX_LABELS):
        raise ParseError(f"bad IDX magic 0x{magic:08x}", 0)
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise ParseError("truncated IDX header", len(raw))
    dims = struct.unpack_from(f">{ndim}I", raw, 4)
    expected = int(np.prod(dims, dtype=np.int64))
    payload = len(raw) - header
    if payload != expected:
        raise ParseError(
            f"IDX payload has {payload} bytes but header dimensions {dims} need {expected}",
            header + min(payload, expected),
        )
    values = np.frombuffer(raw, dtype=np.uint8, offset=header)
    if magic == IDX_LABELS:
        return Dataset(np.empty((dims[0], 0)), labels=values.astype(np.int64), source=source)
    points = values.reshape(dims[0], -1).astype(float) / 255.0
    return Dataset(points, source=source)


def load_idx(path, labels_path=None):
    """Load an IDX image (or label) file; optionally attach a label file."""
    data = parse_idx(_read_bytes(path), source=str(path))
    if labels_path is not None:
        lab = parse_idx(_read_bytes(labels_path), source=str(labels_path))
        if lab.labels is None or len(lab) != len(data):
            raise ParseError("label file does not match image count")
        data.labels = lab.labels
    return data


def idx_bytes(array, labels=False):
    arr = np.asarray(array)
    if labels:
        body = arr.astype(np.uint8).ravel()
        return struct.pack(">II", IDX_LABELS, body.size) + body.tobytes()
    if arr.ndim != 3:
        raise ValueError("image arrays must be N x rows x cols")
    return struct.pack(">IIII", IDX_IMAGES, *arr.shape) + arr.astype(np.uint8).tobytes()


def save_idx(path, array, labels=False, compress=None):
    """Write uint8 images (N x rows x cols) or labels (N) in IDX format."""
    raw = idx_bytes(array, labels)
    if compress is None:
        compress = str(path).endswith(".gz")
    if compress:
        raw = gzip.compress(raw, mtime=0)
    with open(path, "wb") as fh:
        fh.write(raw)


def load_csv(path, has_header=False, label_column=False):
    """Numeric CSV, one row per example; optional trailing integer label column."""
    try:
        arr = np.loadtxt(path, delimiter=",", skiprows=1 if has_header else 0, ndmin=2)
    except ValueError as err:
        raise ParseError(f"cannot parse CSV {path}: {err}") from None
    if label_column:
        if arr.shape[1] < 2:
            raise ParseError("label column requested but the CSV has fewer than two columns")
        labels = arr[:, -1]
        if not np.all(labels == np.round(labels)):
            raise ParseError("label column must hold integers")
        return Dataset(arr[:, :-1], labels.astype(np.int64), str(path))
    return Dataset(arr, source=str(path))


def save_csv(path, columns, rows):
    """Write a header row then rows of 17-significant-digit numbers (or strings)."""
    def cell(v):
        if isinstance(v, str):
            return v
        return format(float(v), ".17g")

    with open(path, "w") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(cell(v) for v in row) + "\n")


def load_dataset(path, labels_path=None, has_header=False, label_column=False):
    """Dispatch on content: IDX magic (optionally gzipped) or CSV."""
    raw = _read_bytes(path)
    if len(raw) >= 4 and struct.unpack_from(">I", raw, 0)[0] in (IDX_IMAGES, IDX_LABELS):
        return load_idx(path, labels_path)
    data = load_csv(path, has_header=has_header, label_column=label_column)
    if labels_path is not None:
        data.labels = load_idx(labels_path).labels
    return data


def _f64(arr):
    return np.ascontiguousarray(arr, dtype="<f8").tobytes()


def model_to_bytes(bundle):
    enc, dec, pre = bundle.encoder, bundle.decoder, bundle.preprocessor
    k, m, j = dec.dim, dec.depth, len(enc.layers)
    parts = [
        MODEL_MAGIC,
        struct.pack("<IIIIII", MODEL_VERSION, k, m, j, pre.input_dim, 1 if pre.use_pca else 0),
        struct.pack(f"<{j}I", *enc.widths),
        _f64([enc.threshold]),
    ]
    for layer in enc.layers:
        parts += [_f64(layer.weights), _f64(layer.bias)]
    for layer in dec.layers:
        parts += [_f64(layer.weights), _f64(layer.bias)]
    parts += [
        _f64([bundle.marginal.alpha, bundle.marginal.beta]),
        _f64([pre.margin]),
        _f64(pre.mean),
        _f64(pre.basis),
        _f64(pre.scale),
        _f64(pre.squash_low),
        _f64(pre.squash_high),
    ]
    return b"".join(parts)


def predicted_model_size(k, m, widths, d):
    j = len(widths)
    n_float = 1
    prev = k
    for w in widths:
        n_float += w * prev + w
        prev = w
    n_float += m * (k * k + k) + 2 + 1 + d + d * k + 3 * k
    return len(MODEL_MAGIC) + 4 * (6 + j) + 8 * n_float


class _Reader:
    def __init__(self, raw):
        self.raw = raw
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.raw):
            raise ModelFormatError(f"truncated model file at byte {self.pos} (need {n} more bytes)")
        chunk = self.raw[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self, count=1):
        return struct.unpack(f"<{count}I", self.take(4 * count))

    def f64(self, shape):
        n = int(np.prod(shape, dtype=np.int64))
        return np.frombuffer(self.take(8 * n), dtype="<f8").astype(float).reshape(shape)


def model_from_bytes(raw):
    r = _Reader(raw)
    magic = r.take(len(MODEL_MAGIC))
    if magic != MODEL_MAGIC:
        raise ModelFormatError(f"bad model magic {magic!r}")
    version, k, m, j, d, flags = r.u32(6)
    if version != MODEL_VERSION:
        raise ModelFormatError(f"unsupported model format version {version}")
    widths = r.u32(j)
    threshold = float(r.f64((1,))[0])
    enc_layers = []
    prev = k
    for w in widths:
        enc_layers.append(Layer(r.f64((w, prev)), r.f64((w,))))
        prev = w
    dec_layers = [Layer(r.f64((k, k)), r.f64((k,))) for _ in range(m)]
    alpha, beta = r.f64((2,))
    margin = float(r.f64((1,))[0])
    mean = r.f64((d,))
    basis = r.f64((d, k))
    scale = r.f64((k,))
    low = r.f64((k,))
    high = r.f64((k,))
    if r.pos != len(raw):
        raise ModelFormatError(f"{len(raw) - r.pos} trailing byte(s) after model payload")
    pre = Preprocessor(mean, basis, scale, low, high, margin, bool(flags & 1))
    return ModelBundle(
        Encoder(enc_layers, threshold), Decoder(dec_layers), BetaParams(float(alpha), float(beta)), pre
    )


def save_model(bundle, path):
    with open(path, "wb") as fh:
        fh.write(model_to_bytes(bundle))


def load_model(path):
    with open(path, "rb") as fh:
        return model_from_bytes(fh.read())
