# src/services/sweep_service.py
import itertools
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from tqdm import tqdm

from ..errors import ConfigError
from ..experiment_record import ExperimentRecord, run_settings_from

SWEEP_MODES = ('cartesian', 'per_axis')
SEED_MODES = ('shared', 'per_cell')


def expand_cells(base_config: Dict[str, Any], axes: Dict[str, Sequence[Any]], mode: str = 'cartesian',
                 seed_mode: str = 'shared') -> List[Dict[str, Any]]:
    """
    Cartesian mode crosses every axis; per_axis mode varies one axis at a
    time around the base config. In shared seed mode every cell keeps
    run.seed; per_cell mode gives cell i a seed drawn from (run.seed, i).
    """
    if not axes:
        raise ConfigError("A sweep needs at least one axis")
    if mode not in SWEEP_MODES:
        raise ConfigError(f"sweep.mode must be one of {SWEEP_MODES}, got '{mode}'")
    if seed_mode not in SEED_MODES:
        raise ConfigError(f"sweep.seed_mode must be one of {SEED_MODES}, got '{seed_mode}'")
    for key, values in axes.items():
        if key not in base_config:
            raise ConfigError(f"Unknown sweep axis '{key}'")
        if isinstance(values, (str, bytes)) or not isinstance(values, Sequence) or len(values) == 0:
            raise ConfigError(f"Sweep axis '{key}' must be a non-empty list")

    keys = list(axes)
    if mode == 'cartesian':
        combos = [dict(zip(keys, values)) for values in itertools.product(*(axes[k] for k in keys))]
    else:
        combos = [{key: value} for key in keys for value in axes[key]]

    base_name = base_config.get('run.name') or 'sweep'
    cells = []
    for index, overrides in enumerate(combos):
        cell = dict(base_config)
        cell.update(overrides)
        cell['run.name'] = f"{base_name}-{index:03d}"
        cell['sweep.axes'] = {}
        if seed_mode == 'per_cell':
            cell['run.seed'] = int(np.random.SeedSequence([int(cell['run.seed']), index]).generate_state(1)[0])
        cells.append(cell)
    return cells


def _run_cell(cell_config: Dict[str, Any]) -> ExperimentRecord:
    # imported here so worker processes build their own services
    from ..experiment_orchestrator import ExperimentOrchestrator, build_services

    orchestrator = ExperimentOrchestrator(services=build_services(cell_config), config=cell_config)
    _, record = orchestrator.run_training(write_outputs=False)
    return record


class SweepService:
    """
    Runs independent, seeded training cells over parameter axes, in parallel
    when more than one job is allowed, and merges their results into one table.
    By default every cell keeps run.seed so that cells differ only in the
    swept values.
    """
    def __init__(self, config: Dict[str, Any], jobs: Optional[int] = None):
        logging.info("SweepService initialized.")
        self.mode = config.get('sweep.mode', 'cartesian')
        self.seed_mode = config.get('sweep.seed_mode', 'shared')
        self.jobs = jobs or os.cpu_count() or 1
        self.show_progress = run_settings_from(config).progress

    def run(self, base_config: Dict[str, Any], axes: Dict[str, Sequence[Any]]) -> List[ExperimentRecord]:
        cells = expand_cells(base_config, axes, self.mode, self.seed_mode)
        logging.info(f"Running {len(cells)} sweep cell(s) with {min(self.jobs, len(cells))} job(s).")

        if self.jobs <= 1 or len(cells) == 1:
            return [_run_cell(cell) for cell in tqdm(cells, desc="Sweep cells", disable=not self.show_progress)]

        with ProcessPoolExecutor(max_workers=min(self.jobs, len(cells))) as executor:
            # map keeps cell order, so the merged table does not depend on scheduling
            return list(tqdm(executor.map(_run_cell, cells), total=len(cells), desc="Sweep cells",
                             disable=not self.show_progress))

    @staticmethod
    def merge(records: Sequence[ExperimentRecord]) -> pd.DataFrame:
        return pd.concat([record.to_frame() for record in records], ignore_index=True)
