"""MNIST download, IDX parsing and preprocessing into binary datasets."""

from __future__ import annotations

import gzip
import hashlib
import logging
import os
import struct
import tempfile
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, FetchError, IntegrityError, ParseError
from .rng import Xoshiro256
from .training import ArrayDataset

log = logging.getLogger(__name__)

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801

# SHA-256 of the *decompressed* IDX payloads, so a mirror may serve either
# the .gz or the raw file.
FILES = {
    "train-images-idx3-ubyte.gz": "ba891046e6505d7aadcbbe25680a0738ad16aec93bde7f9b65e87a2fc25776db",
    "train-labels-idx1-ubyte.gz": "65a50cbbf4e906d70832878ad85ccda5333a97f0f4c3dd2ef09a8a9eef7101c5",
    "t10k-images-idx3-ubyte.gz": "0fa7898d509279e482958e8ce81c8e77db3f2f8254e26661ceb7762c4d494ce7",
    "t10k-labels-idx1-ubyte.gz": "ff7bcfd416de33731a308c3f266cc351222c34898ecbeaf847f06e48f7ec33f2",
}
DEFAULT_MIRRORS = (
    "https://ossci-datasets.s3.amazonaws.com/mnist/",
    "https://storage.googleapis.com/cvdf-datasets/mnist/",
)
MANIFEST = "SHA256SUMS"
FETCH_ATTEMPTS = 3

# 4 row bands x 2 column halves of 7x14 pixels
BLOCK_ROWS, BLOCK_COLS = 7, 14
NUM_FEATURES = 8


@dataclass
class RawMnist:
    images: np.ndarray  # (N, 28, 28) uint8
    labels: np.ndarray  # (N,) uint8

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise DataError(f"{len(self.images)} images but {len(self.labels)} labels")


@dataclass(frozen=True)
class Sample:
    features: np.ndarray  # (8,) in [0, pi]
    image: np.ndarray  # (28, 28) in [0, 1]
    label: int
    source_digit: int
    source_index: int
    split: str


@dataclass
class Dataset:
    train: list
    test: list
    provenance: dict = field(default_factory=dict)

    def quantum_arrays(self) -> ArrayDataset:
        return ArrayDataset(
            np.array([s.features for s in self.train]),
            np.array([s.label for s in self.train]),
            np.array([s.features for s in self.test]),
            np.array([s.label for s in self.test]),
        )

    def image_arrays(self) -> ArrayDataset:
        return ArrayDataset(
            np.array([s.image for s in self.train]),
            np.array([s.label for s in self.train]),
            np.array([s.image for s in self.test]),
            np.array([s.label for s in self.test]),
        )


# --- IDX -------------------------------------------------------------------


def parse_idx(data: bytes, expect: str | None = None) -> np.ndarray:
    """Parse an IDX image (3-d) or label (1-d) file, gzip or raw."""
    if data[:2] == b"\x1f\x8b":
        try:
            data = gzip.decompress(data)
        except (OSError, EOFError) as exc:
            raise ParseError(f"corrupt gzip stream: {exc}", 0) from None
    if len(data) < 4:
        raise ParseError("truncated header", len(data))
    (magic,) = struct.unpack(">I", data[:4])
    if expect == "labels" and magic != LABEL_MAGIC:
        raise ParseError(f"expected label magic 0x{LABEL_MAGIC:08x}, found 0x{magic:08x}", 0)
    if expect == "images" and magic != IMAGE_MAGIC:
        raise ParseError(f"expected image magic 0x{IMAGE_MAGIC:08x}, found 0x{magic:08x}", 0)
    if magic not in (IMAGE_MAGIC, LABEL_MAGIC):
        raise ParseError(f"unknown IDX magic 0x{magic:08x}", 0)
    ndim = 3 if magic == IMAGE_MAGIC else 1
    header = 4 + 4 * ndim
    if len(data) < header:
        raise ParseError("truncated dimension header", len(data))
    dims = struct.unpack(f">{ndim}I", data[4:header])
    expected = int(np.prod(dims, dtype=np.int64))
    payload = len(data) - header
    if payload < expected:
        raise ParseError(f"truncated payload: need {expected} bytes, have {payload}", len(data))
    if payload > expected:
        raise ParseError(f"{payload - expected} trailing bytes after payload", header + expected)
    return np.frombuffer(data, dtype=np.uint8, offset=header).reshape(dims).copy()


def serialize_idx(array: np.ndarray) -> bytes:
    array = np.asarray(array, dtype=np.uint8)
    if array.ndim == 3:
        magic = IMAGE_MAGIC
    elif array.ndim == 1:
        magic = LABEL_MAGIC
    else:
        raise ValueError("IDX serialisation supports 1-d labels or 3-d images")
    return struct.pack(f">I{array.ndim}I", magic, *array.shape) + array.tobytes()


def _payload_digest(path: Path) -> str:
    return _digest_bytes(path.read_bytes())


def _digest_bytes(data: bytes) -> str:
    if data[:2] == b"\x1f\x8b":
        try:
            data = gzip.decompress(data)
        except (OSError, EOFError):
            return ""
    return hashlib.sha256(data).hexdigest()


def _atomic_write(path: Path, data: bytes):
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _download(name: str, mirrors, attempts: int, backoff: float) -> bytes:
    last = None
    for attempt in range(1, attempts + 1):
        for base in mirrors:
            url = base.rstrip("/") + "/" + name
            try:
                with urllib.request.urlopen(url, timeout=60) as resp:
                    return resp.read()
            except (urllib.error.URLError, OSError) as exc:
                last = exc
        if attempt < attempts:
            log.warning("download of %s failed (attempt %d): %s", name, attempt, last)
            time.sleep(backoff * 2 ** (attempt - 1))
    raise FetchError(f"could not download {name}: {last}", attempts)


def fetch(dest_dir, mirrors=DEFAULT_MIRRORS, attempts=FETCH_ATTEMPTS, backoff=0.5) -> dict:
    """Make sure the four MNIST files are cached and valid; return their paths.

    Valid cached files are left alone. A file whose digest does not match is
    downloaded again once; a second mismatch is an integrity error.
    """
    dest = Path(dest_dir)
    dest.mkdir(parents=True, exist_ok=True)
    if isinstance(mirrors, str):
        mirrors = [mirrors]
    paths = {}
    for name, digest in FILES.items():
        path = dest / name
        if path.exists() and _payload_digest(path) == digest:
            paths[name] = path
            continue
        if path.exists():
            log.warning("cached %s failed its digest check; downloading again", name)
        data = _download(name, mirrors, attempts, backoff)
        if _digest_bytes(data) != digest:
            raise IntegrityError(f"{name} from mirror does not match its SHA-256 digest")
        _atomic_write(path, data)
        paths[name] = path
    manifest = "".join(f"{FILES[name]}  {name}\n" for name in FILES)
    _atomic_write(dest / MANIFEST, manifest.encode())
    return paths


def cached_paths(data_dir) -> dict:
    """Paths of the cached files, accepting either ``.gz`` or raw names."""
    paths = {}
    for name in FILES:
        for candidate in (Path(data_dir) / name, Path(data_dir) / name.removesuffix(".gz")):
            if candidate.exists():
                paths[name] = candidate
                break
        else:
            raise DataError(f"{name} not found in {data_dir}; run the fetch command first")
    return paths


def load_mnist(data_dir) -> tuple[RawMnist, RawMnist]:
    paths = cached_paths(data_dir)
    train = RawMnist(
        parse_idx(paths["train-images-idx3-ubyte.gz"].read_bytes(), "images"),
        parse_idx(paths["train-labels-idx1-ubyte.gz"].read_bytes(), "labels"),
    )
    test = RawMnist(
        parse_idx(paths["t10k-images-idx3-ubyte.gz"].read_bytes(), "images"),
        parse_idx(paths["t10k-labels-idx1-ubyte.gz"].read_bytes(), "labels"),
    )
    return train, test


def file_digests(data_dir) -> dict:
    return {name: _payload_digest(p) for name, p in cached_paths(data_dir).items()}


# --- preprocessing ---------------------------------------------------------


def block_features(images: np.ndarray) -> np.ndarray:
    """Average 28x28 images over a 4x2 grid of 7x14 blocks, row-major order."""
    images = np.asarray(images, dtype=float)
    n, h, w = images.shape
    if (h, w) != (4 * BLOCK_ROWS, 2 * BLOCK_COLS):
        raise DataError(f"expected 28x28 images, got {h}x{w}")
    blocks = images.reshape(n, 4, BLOCK_ROWS, 2, BLOCK_COLS)
    return blocks.mean(axis=(2, 4)).reshape(n, NUM_FEATURES)


def rescale(features: np.ndarray, lo: np.ndarray, hi: np.ndarray, warnings: list | None = None) -> np.ndarray:
    """Affine map ``[lo, hi] -> [0, pi]`` per feature, clamped; degenerate features map to 0."""
    span = hi - lo
    out = np.zeros_like(features, dtype=float)
    ok = span > 0
    out[:, ok] = (features[:, ok] - lo[ok]) / span[ok] * np.pi
    for j in np.flatnonzero(~ok):
        msg = f"feature {j} is constant on the train split; mapped to 0"
        log.warning(msg)
        if warnings is not None:
            warnings.append(msg)
    return np.clip(out, 0.0, np.pi)


def _balanced_subsample(labels: np.ndarray, digits, size: int, rng: Xoshiro256, split: str) -> np.ndarray:
    """Indices of a class-balanced random subset; the first digit gets the odd one out."""
    counts = (size - size // 2, size // 2)
    chosen = []
    for digit, count in zip(digits, counts):
        pool = np.flatnonzero(labels == digit)
        if len(pool) < count:
            raise DataError(f"{split} split has {len(pool)} images of digit {digit}, need {count}")
        chosen.append(pool[rng.permutation(len(pool))[:count]])
    merged = np.concatenate(chosen)
    return merged[rng.permutation(len(merged))]


def preprocess(train_raw: RawMnist, test_raw: RawMnist, train_size=1000, test_size=500, seed=42, digits=(0, 7)) -> Dataset:
    digits = tuple(int(d) for d in digits)
    if len(digits) != 2 or digits[0] == digits[1]:
        raise DataError(f"need two distinct digits, got {digits}")
    if train_size < 1 or test_size < 1:
        raise DataError("train_size and test_size must be positive")
    rng = Xoshiro256(seed)
    train_idx = _balanced_subsample(train_raw.labels, digits, train_size, rng, "train")
    test_idx = _balanced_subsample(test_raw.labels, digits, test_size, rng, "test")

    train_feats = block_features(train_raw.images[train_idx])
    test_feats = block_features(test_raw.images[test_idx])
    lo, hi = train_feats.min(axis=0), train_feats.max(axis=0)
    warnings: list = []
    train_feats = rescale(train_feats, lo, hi, warnings)
    test_feats = rescale(test_feats, lo, hi)

    def samples(raw, idx, feats, split):
        out = []
        for i, f in zip(idx, feats):
            digit = int(raw.labels[i])
            out.append(Sample(f, raw.images[i] / 255.0, int(digit == digits[1]), digit, int(i), split))
        return out

    provenance = {
        "digits": list(digits),
        "seed": seed,
        "train_size": train_size,
        "test_size": test_size,
        "feature_min": lo.tolist(),
        "feature_max": hi.tolist(),
        "warnings": warnings,
    }
    return Dataset(samples(train_raw, train_idx, train_feats, "train"), samples(test_raw, test_idx, test_feats, "test"), provenance)
