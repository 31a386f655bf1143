# src/services/device_fit_service.py
import logging
from pathlib import Path
from typing import Any, Dict, Optional

import pandas as pd
import yaml

from ..device_model import FitResult, fit_device
from ..errors import DataFormatError


def read_measurements(path: Path) -> pd.DataFrame:
    """
    Reads a two-column (pulse_index, conductance) table. Comma or whitespace
    separated, '#' starts a comment, no header.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Measurement file not found: {path}")
    try:
        table = pd.read_csv(path, comment='#', sep=r'[,\s]+', header=None, engine='python',
                            skip_blank_lines=True)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DataFormatError(f"Cannot parse measurement table {path}: {e}") from e

    table = table.dropna(axis=1, how='all')
    if table.shape[1] != 2:
        raise DataFormatError(f"Measurement table {path} must have exactly 2 columns, found {table.shape[1]}")
    table.columns = ['pulse_index', 'g']
    try:
        return table.astype('float64')
    except ValueError as e:
        raise DataFormatError(f"Non-numeric value in measurement table {path}: {e}") from e


def fit_overlay(fit: FitResult) -> Dict[str, Any]:
    """
    Config overlay for a fitted device. The curve shape is carried by ANL, which
    the simulator re-expresses as k for whatever pulse resolution it trains with.
    """
    return {'device': {'g_min': fit.g_min, 'g_max': fit.g_max, 'anl': fit.anl, 'k': None, 'linear': False}}


class DeviceFitService:
    """Fits the behavioral device model to one measured potentiation/depression cycle."""
    def __init__(self, config: Dict[str, Any]):
        logging.info("DeviceFitService initialized.")
        self.n_max = int(config['fit.n_max'])
        self.max_iterations = int(config['fit.max_iterations'])

    def run(self, measurements_path: Path, overlay_path: Optional[Path] = None) -> FitResult:
        table = read_measurements(measurements_path)
        logging.info(f"Fitting {len(table)} measurements from {measurements_path} with n_max={self.n_max}")
        fit = fit_device(table[['pulse_index', 'g']].to_numpy(), self.n_max, self.max_iterations)

        if overlay_path is not None and fit.converged:
            overlay_path = Path(overlay_path)
            overlay_path.parent.mkdir(parents=True, exist_ok=True)
            with open(overlay_path, 'w', encoding='utf-8') as f:
                f.write(f"# fitted from {Path(measurements_path).name}, residual rms {fit.residual_rms:.6g}\n")
                yaml.safe_dump(fit_overlay(fit), f, sort_keys=False)
            logging.info(f"Fitted device overlay written to {overlay_path}")
        return fit
