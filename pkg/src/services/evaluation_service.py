# src/services/evaluation_service.py
import logging
from dataclasses import dataclass
from typing import Any, Callable, Dict, Optional, Tuple

import numpy as np

from ..idx_reader import Dataset
from ..perceptron import Network, forward

EVAL_CHUNK = 1000

Predictor = Callable[[np.ndarray], np.ndarray]


@dataclass
class EvaluationResult:
    accuracy: float
    hidden_sparsity: float


def _count(net: Network, dataset: Dataset) -> Tuple[int, int]:
    """(correct predictions, zero hidden values) over the whole dataset, chunk by chunk."""
    correct = 0
    zeros = 0
    for start in range(0, len(dataset), EVAL_CHUNK):
        trace = forward(net, dataset.images[start:start + EVAL_CHUNK])
        # argmax picks the lowest index on ties
        predicted = np.argmax(trace.o, axis=1)
        correct += int(np.count_nonzero(predicted == dataset.labels[start:start + EVAL_CHUNK]))
        zeros += int(np.count_nonzero(trace.h == 0))
    return correct, zeros


def _scores(net: Network, dataset: Dataset) -> EvaluationResult:
    n = len(dataset)
    if n == 0:
        return EvaluationResult(accuracy=0.0, hidden_sparsity=0.0)
    correct, zeros = _count(net, dataset)
    return EvaluationResult(
        accuracy=100.0 * correct / n,
        hidden_sparsity=100.0 * zeros / (n * net.layer1.cols),
    )


def evaluate(net: Optional[Network], dataset: Dataset, predictor: Optional[Predictor] = None) -> float:
    """Classification accuracy in percent; `predictor` replaces the network when given."""
    if predictor is None:
        return _scores(net, dataset).accuracy
    if len(dataset) == 0:
        return 0.0
    predictions = np.asarray(predictor(dataset.images))
    return 100.0 * float(np.mean(predictions == dataset.labels))


def hidden_sparsity(net: Network, dataset: Dataset) -> float:
    """Mean fraction of hidden neurons exactly zero, in percent."""
    return _scores(net, dataset).hidden_sparsity


class EvaluationService:
    """Scores a network on the test split: accuracy and hidden-layer sparsity in one pass."""
    def __init__(self, config: Dict[str, Any]):
        logging.info("EvaluationService initialized.")

    def run(self, net: Network, dataset: Dataset) -> EvaluationResult:
        return _scores(net, dataset)
