# src/experiment_record.py
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import pandas as pd

from .utils.config_loader import config_int

RESULTS_COLUMNS = [
    'run_id', 'anl', 'activation', 's', 'th', 'weight_bits', 'neuron_bits', 'eta', 'batch', 'seed',
    'epoch', 'train_mse', 'test_acc', 'hidden_sparsity', 'update_sparsity',
]
HISTOGRAM_COLUMNS = ['bin_lo', 'bin_hi', 'count_layer1', 'count_layer2']
FLOAT_FORMAT = '%.6g'


@dataclass(frozen=True)
class RunSettings:
    name: str
    epochs: int
    batch: int
    seed: int
    train_limit: Optional[int]
    histogram_bins: int
    histograms: bool
    progress: bool


def run_settings_from(config: Dict[str, Any]) -> RunSettings:
    """Typed run.* section; raises ConfigError naming the first bad key."""
    return RunSettings(
        name=str(config.get('run.name') or 'run'),
        epochs=config_int(config, 'run.epochs', minimum=0),
        batch=config_int(config, 'run.batch', minimum=1),
        seed=config_int(config, 'run.seed', minimum=0),
        train_limit=config_int(config, 'run.train_limit', minimum=1, optional=True),
        histogram_bins=config_int(config, 'run.histogram_bins', minimum=1),
        histograms=bool(config.get('run.histograms', True)),
        progress=bool(config.get('run.progress', True)),
    )


@dataclass
class EpochMetrics:
    epoch: int
    train_mse: float
    test_accuracy_percent: float
    hidden_sparsity_percent: float
    update_sparsity_percent: float

    def __post_init__(self):
        if not self.train_mse >= 0:
            raise ValueError(f"train_mse must be non-negative, got {self.train_mse}")
        for name in ('test_accuracy_percent', 'hidden_sparsity_percent', 'update_sparsity_percent'):
            value = getattr(self, name)
            if not 0 <= value <= 100:
                raise ValueError(f"{name} must lie in [0, 100], got {value}")


@dataclass
class ExperimentRecord:
    """Per-epoch metrics of one run plus the weight histograms taken at epoch checkpoints."""
    run_id: str
    params: Dict[str, Any]
    epochs: List[EpochMetrics] = field(default_factory=list)
    histograms: Dict[int, pd.DataFrame] = field(default_factory=dict)

    def add(self, metrics: EpochMetrics, histogram: Optional[pd.DataFrame] = None):
        self.epochs.append(metrics)
        if histogram is not None:
            self.histograms[metrics.epoch] = histogram

    @property
    def final_histogram(self) -> Optional[pd.DataFrame]:
        if not self.histograms:
            return None
        return self.histograms[max(self.histograms)]

    @property
    def final_accuracy(self) -> Optional[float]:
        return self.epochs[-1].test_accuracy_percent if self.epochs else None

    def to_frame(self) -> pd.DataFrame:
        rows = [
            {
                'run_id': self.run_id,
                **{key: self.params[key] for key in RESULTS_COLUMNS[1:10]},
                'epoch': m.epoch,
                'train_mse': m.train_mse,
                'test_acc': m.test_accuracy_percent,
                'hidden_sparsity': m.hidden_sparsity_percent,
                'update_sparsity': m.update_sparsity_percent,
            }
            for m in self.epochs
        ]
        return pd.DataFrame(rows, columns=RESULTS_COLUMNS)
