# src/services/dataset_service.py
import logging
from functools import lru_cache
from typing import Any, Dict

from ..errors import ConfigError
from ..experiment_record import run_settings_from
from ..idx_reader import Dataset, load_idx, normalize_quantize
from ..perceptron import QuantSpec


@lru_cache(maxsize=4)
def _load_split(images_path: str, labels_path: str, neuron_bits: int, enabled: bool, split: str) -> Dataset:
    raw = load_idx(images_path, labels_path)
    return normalize_quantize(raw, QuantSpec(neuron_bits=neuron_bits, enabled=enabled), split=split)


class DatasetService:
    """Loads the train/test IDX pairs named in the config and quantizes the pixels."""
    def __init__(self, config: Dict[str, Any]):
        logging.info("DatasetService initialized.")
        self.paths = {
            'train': (config['data.train_images'], config['data.train_labels']),
            'test': (config['data.test_images'], config['data.test_labels']),
        }
        self.neuron_bits = int(config['quant.neuron_bits'])
        self.enabled = bool(config['quant.enabled'])
        self.train_limit = run_settings_from(config).train_limit

    def run(self, split: str) -> Dataset:
        if split not in self.paths:
            raise ConfigError(f"Unknown dataset split '{split}'")
        images_path, labels_path = self.paths[split]
        if not images_path or not labels_path:
            raise ConfigError(f"data.{split}_images and data.{split}_labels must be set")

        dataset = _load_split(str(images_path), str(labels_path), self.neuron_bits, self.enabled, split)
        if split == 'train' and self.train_limit is not None:
            dataset = dataset.head(self.train_limit)
            logging.info(f"Using the first {len(dataset)} training images.")
        return dataset
