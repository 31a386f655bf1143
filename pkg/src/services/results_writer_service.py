# src/services/results_writer_service.py
import logging
from pathlib import Path
from typing import Any, Dict, List

import pandas as pd

from ..experiment_record import FLOAT_FORMAT, ExperimentRecord
from ..perceptron import Network, save_snapshot
from ..utils.config_loader import dump_config


class ResultsWriterService:
    """
    Saves the artifacts of a run into the output directory: results CSV,
    per-epoch histogram CSVs, the final network snapshot and the effective
    config echo.
    """
    def __init__(self, config: Dict[str, Any]):
        logging.info("ResultsWriterService initialized.")
        self.output_dir = Path(config.get('out.dir') or 'results')

    @staticmethod
    def write_frame(frame: pd.DataFrame, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
        return path

    def write_histograms(self, record: ExperimentRecord, run_dir: Path) -> List[Path]:
        paths = []
        for epoch, histogram in sorted(record.histograms.items()):
            paths.append(self.write_frame(histogram, run_dir / 'histograms' / f"epoch_{epoch:03d}.csv"))
        return paths

    def run(self, record: ExperimentRecord, net: Network, config: Dict[str, Any]) -> Path:
        run_dir = self.output_dir
        run_dir.mkdir(parents=True, exist_ok=True)

        dump_config(config, run_dir / 'effective_config.yaml')
        results_path = self.write_frame(record.to_frame(), run_dir / 'results.csv')
        self.write_histograms(record, run_dir)
        save_snapshot(net, run_dir / 'network.npz', config)

        logging.info(f"Saved results of run '{record.run_id}' to {run_dir}")
        return results_path
