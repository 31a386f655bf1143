# src/idx_reader.py
"""
MNIST IDX parsing, normalization and minibatching.

IDX layout (big endian):
    images: u32 magic 2051 | u32 count | u32 rows | u32 cols | u8 pixels...
    labels: u32 magic 2049 | u32 count | u8 labels...
Files may be gzip-compressed; the gzip signature is detected from the first
two bytes.
"""
import gzip
import logging
import struct
import zlib
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterator, Tuple

import numpy as np

from .errors import BadMagicError, CountMismatchError, IdxFormatError, TruncatedFileError
from .perceptron import QuantSpec, quantize

IMAGES_MAGIC = 2051
LABELS_MAGIC = 2049
GZIP_SIGNATURE = b'\x1f\x8b'


@dataclass(frozen=True)
class RawIdx:
    images: np.ndarray  # (count, rows, cols) uint8
    labels: np.ndarray  # (count,) uint8


@dataclass(frozen=True)
class Dataset:
    images: np.ndarray  # (count, rows*cols) float64 on the neuron grid
    labels: np.ndarray  # (count,) int64
    split: str = 'train'

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise ValueError(f"{len(self.images)} images but {len(self.labels)} labels")
        if self.split not in ('train', 'test'):
            raise ValueError(f"split must be 'train' or 'test', got '{self.split}'")
        if self.images.size and (self.images.min() < 0 or self.images.max() > 1):
            raise ValueError("pixel values must lie in [0, 1]")
        # shared read-only after load
        self.images.flags.writeable = False
        self.labels.flags.writeable = False

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def n_features(self) -> int:
        return self.images.shape[1]

    def head(self, limit: int) -> 'Dataset':
        if limit is None or limit >= len(self):
            return self
        return replace(self, images=self.images[:limit], labels=self.labels[:limit])


@dataclass(frozen=True)
class Batch:
    images: np.ndarray
    labels: np.ndarray
    indices: np.ndarray


def _read_bytes(path: Path) -> bytes:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"IDX file not found: {path}")
    data = path.read_bytes()
    if data[:2] == GZIP_SIGNATURE:
        try:
            data = gzip.decompress(data)
        except (EOFError, OSError, zlib.error) as e:
            raise TruncatedFileError(f"corrupt gzip stream: {e}", path, len(data)) from e
    return data


def _read_header(data: bytes, path: Path, magic: int, n_fields: int) -> Tuple[int, ...]:
    header_size = 4 * (1 + n_fields)
    if len(data) < 4:
        raise TruncatedFileError("file ends inside the magic number", path, len(data))
    found = struct.unpack('>I', data[:4])[0]
    if found != magic:
        raise BadMagicError(f"expected magic {magic}, found {found}", path, 0)
    if len(data) < header_size:
        raise TruncatedFileError("file ends inside the header", path, len(data))
    return struct.unpack(f'>{n_fields}I', data[4:header_size])


def _check_body(data: bytes, path: Path, header_size: int, body_size: int):
    end = header_size + body_size
    if len(data) < end:
        raise TruncatedFileError(f"expected {body_size} payload bytes, found {len(data) - header_size}", path, len(data))
    if len(data) > end:
        raise IdxFormatError(f"{len(data) - end} unexpected trailing bytes", path, end)


def load_idx(images_path: Path, labels_path: Path) -> RawIdx:
    images_path, labels_path = Path(images_path), Path(labels_path)

    image_bytes = _read_bytes(images_path)
    count, rows, cols = _read_header(image_bytes, images_path, IMAGES_MAGIC, 3)
    _check_body(image_bytes, images_path, 16, count * rows * cols)

    label_bytes = _read_bytes(labels_path)
    (label_count,) = _read_header(label_bytes, labels_path, LABELS_MAGIC, 1)
    if label_count != count:
        raise CountMismatchError(f"{label_count} labels for {count} images", labels_path, 4)
    _check_body(label_bytes, labels_path, 8, label_count)

    images = np.frombuffer(image_bytes, dtype=np.uint8, count=count * rows * cols, offset=16)
    labels = np.frombuffer(label_bytes, dtype=np.uint8, count=label_count, offset=8)
    logging.info(f"Loaded {count} images of {rows}x{cols} from {images_path.name}")
    return RawIdx(images=images.reshape(count, rows, cols), labels=labels.copy())


def normalize_quantize(raw: RawIdx, quant: QuantSpec, split: str = 'train') -> Dataset:
    """pixel / 255, then the forward neuron quantizer over [0, 1]."""
    input_quant = replace(quant, forward_range=(0.0, 1.0))
    pixels = raw.images.reshape(len(raw.images), -1).astype(np.float64) / 255.0
    images = np.asarray(quantize(input_quant, pixels), dtype=np.float64)
    return Dataset(images=images, labels=raw.labels.astype(np.int64), split=split)


def one_hot(labels: np.ndarray, n_classes: int = 10) -> np.ndarray:
    target = np.zeros((len(labels), n_classes), dtype=np.float64)
    target[np.arange(len(labels)), labels] = 1.0
    return target


def epoch_permutation(n_items: int, seed: int, epoch: int) -> np.ndarray:
    return np.random.default_rng([int(seed), int(epoch)]).permutation(n_items)


def minibatches(ds: Dataset, batch_size: int, seed: int, epoch: int = 0) -> Iterator[Batch]:
    """
    Visits every item exactly once in an order fixed by (seed, epoch). The
    final short batch is kept.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    order = epoch_permutation(len(ds), seed, epoch)
    for start in range(0, len(order), batch_size):
        indices = order[start:start + batch_size]
        yield Batch(images=ds.images[indices], labels=ds.labels[indices], indices=indices)
