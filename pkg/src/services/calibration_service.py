# src/services/calibration_service.py
import logging
import math
from dataclasses import replace
from typing import Any, Dict, Optional, Tuple

import numpy as np

from ..idx_reader import Dataset, one_hot
from ..perceptron import Network, backward, forward
from ..utils.config_loader import config_int


def next_power_of_two(value: float) -> float:
    if not value > 0:
        return 1.0
    return float(2.0 ** math.ceil(math.log2(value)))


class CalibrationService:
    """
    Estimates the quantizer bounds in advance: one full-precision pass of the
    initial network over the first training samples, taking the largest
    observed magnitude rounded up to a power of two. Bounds already set in the
    config are kept.
    """
    def __init__(self, config: Dict[str, Any]):
        logging.info("CalibrationService initialized.")
        self.upper_bound = config.get('net.upper_bound')
        self.backprop_bound = config.get('quant.backprop_bound')
        self.n_samples = config_int(config, 'quant.calibration_samples', minimum=1)

    def run(self, net: Network, dataset: Dataset) -> Tuple[Optional[float], float]:
        """Returns (relu upper bound or None for sigmoid, backprop bound)."""
        needs_upper = net.activation.kind == 'relu' and self.upper_bound is None
        if not needs_upper and self.backprop_bound is not None:
            upper = float(self.upper_bound) if self.upper_bound is not None else None
            return upper, float(self.backprop_bound)

        probe = replace(net, quant=replace(net.quant, enabled=False), activation=replace(net.activation, upper_bound=math.inf))
        sample = dataset.head(self.n_samples)
        trace = forward(probe, sample.images)
        o_bp, h_bp = backward(probe, trace, one_hot(sample.labels, net.layer2.cols))

        upper: Optional[float] = float(self.upper_bound) if self.upper_bound is not None else None
        if needs_upper:
            upper = next_power_of_two(float(max(np.max(trace.h), np.max(trace.o))))
        backprop = float(self.backprop_bound) if self.backprop_bound is not None else \
            next_power_of_two(float(max(np.max(np.abs(o_bp)), np.max(np.abs(h_bp)))))

        logging.info(f"Calibrated on {len(sample)} samples: upper_bound={upper}, backprop_bound={backprop}")
        return upper, backprop
