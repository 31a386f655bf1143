# src/experiment_orchestrator.py
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import pandas as pd

from src.experiment_record import EpochMetrics, ExperimentRecord, run_settings_from
from src.idx_reader import Dataset
from src.perceptron import Network, apply_config, init_network, load_snapshot, network_config_from
from src.services.calibration_service import CalibrationService
from src.services.dataset_service import DatasetService
from src.services.evaluation_service import EvaluationService
from src.services.histogram_service import HistogramService
from src.services.results_writer_service import ResultsWriterService
from src.services.trainer_service import TrainerService

N_CLASSES = 10


def build_services(config: Dict[str, Any]) -> Dict[str, Any]:
    return {
        'dataset': DatasetService(config),
        'calibration': CalibrationService(config),
        'trainer': TrainerService(config),
        'evaluation': EvaluationService(config),
        'histogram': HistogramService(config),
        'results_writer': ResultsWriterService(config),
    }


def record_params(net: Network, config: Dict[str, Any]) -> Dict[str, Any]:
    settings = run_settings_from(config)
    return {
        'anl': net.device.anl,
        'activation': net.activation.kind,
        's': net.activation.shift,
        'th': net.threshold,
        'weight_bits': int(config['device.weight_bits']),
        'neuron_bits': net.quant.neuron_bits,
        'eta': net.learning_rate,
        'batch': settings.batch,
        'seed': settings.seed,
    }


class ExperimentOrchestrator:
    def __init__(self, services: Dict, config: Dict[str, Any]):
        logging.info("ExperimentOrchestrator initialized.")
        self.services = services
        self.config = config

    def train(self, config: Dict[str, Any], train_ds: Dataset, test_ds: Dataset) -> Tuple[Network, ExperimentRecord]:
        """
        Trains a freshly initialized network for run.epochs epochs, scoring it on
        the test split after every epoch. Calibrated quantizer bounds are written
        back into `config` so the echoed config reproduces the run.
        """
        settings = run_settings_from(config)
        net_config = network_config_from(config, n_input=train_ds.n_features, n_output=N_CLASSES)
        net = init_network(net_config, settings.seed)

        logging.info("Executing calibration stage...")
        upper, backprop = self.services['calibration'].run(net, train_ds)
        net_config = net_config.with_bounds(upper_bound=upper, backprop_bound=backprop)
        apply_config(net, net_config)
        if upper is not None:
            config['net.upper_bound'] = upper
        config['quant.backprop_bound'] = backprop
        logging.info("Calibration stage complete.")

        record = ExperimentRecord(run_id=settings.name, params=record_params(net, config))

        logging.info("Executing training stage...")
        for epoch in range(1, settings.epochs + 1):
            stats = self.services['trainer'].run(net, train_ds, epoch)
            scores = self.services['evaluation'].run(net, test_ds)
            histogram = self.services['histogram'].run(net) if settings.histograms else None
            metrics = EpochMetrics(
                epoch=epoch,
                train_mse=stats.train_mse,
                test_accuracy_percent=scores.accuracy,
                hidden_sparsity_percent=scores.hidden_sparsity,
                update_sparsity_percent=stats.update_sparsity,
            )
            record.add(metrics, histogram)
            logging.info(
                f"Epoch {epoch}: mse={metrics.train_mse:.6g} acc={metrics.test_accuracy_percent:.2f}% "
                f"hidden_sparsity={metrics.hidden_sparsity_percent:.2f}% "
                f"update_sparsity={metrics.update_sparsity_percent:.2f}%"
            )
        logging.info("Training stage complete.")
        return net, record

    def run_training(self, write_outputs: bool = True) -> Tuple[Network, ExperimentRecord]:
        logging.info(f"\n--- Starting run: {self.config['run.name']} ---")
        logging.info("Executing data loading stage...")
        train_ds = self.services['dataset'].run('train')
        test_ds = self.services['dataset'].run('test')
        logging.info(f"Data loading complete: {len(train_ds)} train / {len(test_ds)} test images.")

        config = dict(self.config)
        net, record = self.train(config, train_ds, test_ds)

        if write_outputs:
            logging.info("Executing results writing stage...")
            self.services['results_writer'].run(record, net, config)
            logging.info("Results writing stage complete.")
        return net, record

    def run_evaluation(self, snapshot_path: Path) -> Dict[str, float]:
        """
        Scores a saved network on the test split named in the current config.
        Pixels are quantized with the settings echoed in the snapshot, not the
        current ones.
        """
        net, trained_config = load_snapshot(snapshot_path)
        data_paths = {key: value for key, value in self.config.items() if key.startswith('data.')}
        test_ds = DatasetService({**trained_config, **data_paths}).run('test')
        scores = self.services['evaluation'].run(net, test_ds)
        logging.info(f"Snapshot {snapshot_path}: acc={scores.accuracy:.2f}% hidden_sparsity={scores.hidden_sparsity:.2f}%")
        return {'test_acc': scores.accuracy, 'hidden_sparsity': scores.hidden_sparsity}

    def run_export(self, snapshot_path: Path, output_path: Optional[Path] = None) -> Path:
        """Converts a snapshot into the plot-ready weight histogram CSV."""
        net, _ = load_snapshot(snapshot_path)
        histogram: pd.DataFrame = self.services['histogram'].run(net)
        if output_path is None:
            output_path = self.services['results_writer'].output_dir / f"{Path(snapshot_path).stem}_histogram.csv"
        path = self.services['results_writer'].write_frame(histogram, output_path)
        logging.info(f"Histogram of {snapshot_path} written to {path}")
        return path
