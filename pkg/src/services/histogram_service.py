# src/services/histogram_service.py
import logging
from typing import Any, Dict

import numpy as np
import pandas as pd

from ..experiment_record import HISTOGRAM_COLUMNS, run_settings_from
from ..perceptron import Network


def weight_histogram(net: Network, bins: int = 64) -> pd.DataFrame:
    """
    Histogram of W = G - G_r for both layers over the full representable
    range [-(g_max - g_min)/2, +(g_max - g_min)/2].
    """
    if bins < 1:
        raise ValueError(f"bins must be >= 1, got {bins}")
    half = net.device.span / 2
    edges = np.linspace(-half, half, bins + 1)
    count1, _ = np.histogram(np.clip(net.layer1.weights(), -half, half), bins=edges)
    count2, _ = np.histogram(np.clip(net.layer2.weights(), -half, half), bins=edges)
    return pd.DataFrame(
        {'bin_lo': edges[:-1], 'bin_hi': edges[1:], 'count_layer1': count1, 'count_layer2': count2},
        columns=HISTOGRAM_COLUMNS,
    )


class HistogramService:
    """Takes weight-distribution snapshots at epoch checkpoints."""
    def __init__(self, config: Dict[str, Any]):
        logging.info("HistogramService initialized.")
        self.bins = run_settings_from(config).histogram_bins

    def run(self, net: Network) -> pd.DataFrame:
        return weight_histogram(net, self.bins)
