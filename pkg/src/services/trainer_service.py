# src/services/trainer_service.py
import logging
import math
from dataclasses import dataclass
from typing import Any, Dict

import numpy as np
from tqdm import tqdm

from ..errors import NumericalAbortError
from ..experiment_record import run_settings_from
from ..idx_reader import Dataset, minibatches, one_hot
from ..perceptron import Network, backward, compute_pulse_updates, forward, update_weights


@dataclass
class EpochStats:
    train_mse: float
    update_sparsity: float
    n_batches: int


class TrainerService:
    """Runs one epoch of minibatch online training: forward, backward, pulse counts, array update."""
    def __init__(self, config: Dict[str, Any]):
        logging.info("TrainerService initialized.")
        settings = run_settings_from(config)
        self.batch_size = settings.batch
        self.seed = settings.seed
        self.show_progress = settings.progress

    @staticmethod
    def _check_finite(values: np.ndarray, epoch: int, batch: int, layer: str):
        if not np.all(np.isfinite(values)):
            raise NumericalAbortError(epoch, batch, layer)

    def run(self, net: Network, dataset: Dataset, epoch: int) -> EpochStats:
        n_batches = math.ceil(len(dataset) / self.batch_size)
        squared_error = 0.0
        n_values = 0
        zero_updates = 0
        total_updates = 0

        batches = minibatches(dataset, self.batch_size, self.seed, epoch)
        for b, batch in enumerate(tqdm(batches, total=n_batches, desc=f"Epoch {epoch}",
                                       disable=not self.show_progress, leave=False)):
            target = one_hot(batch.labels, net.layer2.cols)
            trace = forward(net, batch.images)
            self._check_finite(trace.s_h, epoch, b, 'hidden layer')
            self._check_finite(trace.s_o, epoch, b, 'output layer')

            o_bp, h_bp = backward(net, trace, target)
            self._check_finite(o_bp, epoch, b, 'output backprop')
            self._check_finite(h_bp, epoch, b, 'hidden backprop')

            dn1, dn2 = compute_pulse_updates(net, trace, o_bp, h_bp)
            update_weights(net, dn1, dn2)

            squared_error += float(np.sum((target - trace.o) ** 2))
            n_values += target.size
            zero_updates += (dn1.size - np.count_nonzero(dn1)) + (dn2.size - np.count_nonzero(dn2))
            total_updates += dn1.size + dn2.size
            logging.debug(f"epoch {epoch} batch {b}: {np.count_nonzero(dn1)} + {np.count_nonzero(dn2)} synapses pulsed")

        return EpochStats(
            train_mse=squared_error / n_values if n_values else 0.0,
            update_sparsity=100.0 * zero_updates / total_updates if total_updates else 100.0,
            n_batches=n_batches,
        )
