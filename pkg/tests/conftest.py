# tests/conftest.py
import gzip
import struct
from pathlib import Path

import numpy as np
import pytest

from src.utils.config_loader import load_config


def write_idx(path: Path, array: np.ndarray, magic: int, compress: bool = False) -> Path:
    """Writes a uint8 array in IDX layout (big-endian u32 header)."""
    array = np.asarray(array, dtype=np.uint8)
    header = struct.pack('>I', magic) + struct.pack(f'>{array.ndim}I', *array.shape)
    payload = header + array.tobytes()
    path = Path(path)
    if compress:
        path.write_bytes(gzip.compress(payload))
    else:
        path.write_bytes(payload)
    return path


def synthetic_digits(n: int, seed: int = 0, side: int = 4):
    """
    Ten classes: class c lights pixel c (mod the pixel count) over faint noise, so a
    small network learns them within a few epochs.
    """
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % 10
    images = rng.integers(0, 30, size=(n, side, side))
    flat = images.reshape(n, -1)
    flat[np.arange(n), labels % flat.shape[1]] = 255
    return flat.reshape(n, side, side).astype(np.uint8), labels.astype(np.uint8)


@pytest.fixture
def idx_files(tmp_path):
    """Synthetic train/test IDX pairs; train is gzip-compressed, test is raw."""
    train_images, train_labels = synthetic_digits(200, seed=1)
    test_images, test_labels = synthetic_digits(50, seed=2)
    return {
        'data.train_images': str(write_idx(tmp_path / 'train-images.gz', train_images, 2051, compress=True)),
        'data.train_labels': str(write_idx(tmp_path / 'train-labels.gz', train_labels, 2049, compress=True)),
        'data.test_images': str(write_idx(tmp_path / 'test-images', test_images, 2051)),
        'data.test_labels': str(write_idx(tmp_path / 'test-labels', test_labels, 2049)),
    }


@pytest.fixture
def small_config(tmp_path, idx_files):
    """Defaults shrunk to a 16x12x10 network on the synthetic digits."""
    config = load_config()
    config.update(idx_files)
    config.update({
        'net.hidden': 12,
        'net.eta': 30.0,
        'run.epochs': 2,
        'run.batch': 10,
        'run.progress': False,
        'quant.calibration_samples': 100,
        'out.dir': str(tmp_path / 'out'),
    })
    return config
