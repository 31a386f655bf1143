# main.py
import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from src.errors import ConfigError, DataFormatError, DeviceModelError, NumericalAbortError, ShapeError
from src.experiment_orchestrator import ExperimentOrchestrator, build_services
from src.services.device_fit_service import DeviceFitService
from src.services.results_writer_service import ResultsWriterService
from src.services.sweep_service import SweepService
from src.utils.config_loader import dump_config, load_config, parse_override

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3


class UsageError(Exception):
    pass


class CliParser(argparse.ArgumentParser):
    """argparse that reports usage errors as exceptions instead of exiting with status 2."""
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', type=Path, help="YAML overlay on top of config.yaml")
    common.add_argument('--set', dest='overrides', action='append', default=[], metavar='KEY=VALUE',
                        help="override one config key (repeatable)")
    common.add_argument('--out', type=Path, help="output directory (default: out.dir)")
    common.add_argument('--seed', type=int, help="global seed (run.seed)")
    common.add_argument('--verbose', action='store_true', help="log per-batch details")

    parser = CliParser(prog='rram-sim', description="Online training of an RRAM-synapse MLP on MNIST.")
    sub = parser.add_subparsers(dest='command', required=True, parser_class=CliParser)

    fit = sub.add_parser('fit-device', parents=[common], help="fit the device model to a measured P/D cycle")
    fit.add_argument('--measurements', type=Path, required=True, help="two-column table: pulse index, conductance")
    fit.add_argument('--n-max', type=int, help="pulses per sweep in the measurement (fit.n_max)")

    sub.add_parser('train', parents=[common], help="train one network and write results")

    sweep = sub.add_parser('sweep', parents=[common], help="run a parameter sweep")
    sweep.add_argument('--axis', action='append', default=[], metavar='KEY=V1,V2,...',
                       help="sweep axis (repeatable); replaces sweep.axes")
    sweep.add_argument('--jobs', type=int, default=os.cpu_count() or 1, help="parallel sweep cells")

    evaluate = sub.add_parser('eval', parents=[common], help="score a saved network on the test split")
    evaluate.add_argument('--snapshot', type=Path, required=True)

    export = sub.add_parser('export', parents=[common], help="convert a snapshot to a weight histogram CSV")
    export.add_argument('--snapshot', type=Path, required=True)
    export.add_argument('--output', type=Path, help="CSV path (default: <out>/<snapshot>_histogram.csv)")
    return parser


def parse_axes(specs: Sequence[str]) -> Dict[str, List[Any]]:
    """'net.th=0,0.6,0.99' -> {'net.th': [0, 0.6, 0.99]}"""
    axes = {}
    for spec in specs:
        key, sep, raw = spec.partition('=')
        if not sep or not raw.strip():
            raise ConfigError(f"Sweep axis '{spec}' must look like KEY=V1,V2,...")
        axes[key.strip()] = [parse_override(f"{key}={value}")[1] for value in raw.split(',')]
    return axes


def effective_config(args) -> Dict[str, Any]:
    config = load_config(args.config, args.overrides)
    if args.out is not None:
        config['out.dir'] = str(args.out)
    if args.seed is not None:
        config['run.seed'] = args.seed
    if getattr(args, 'n_max', None) is not None:
        config['fit.n_max'] = args.n_max
    return config


def run_fit_device(args, config: Dict[str, Any]) -> int:
    overlay_path = Path(config['out.dir']) / 'fitted_device.yaml'
    fit = DeviceFitService(config).run(args.measurements, overlay_path)
    if fit.params is None:
        print(f"fit failed: {fit.message or 'degenerate fit'}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(f"g_min={fit.g_min:.6g} g_max={fit.g_max:.6g} k={fit.k:.6g} anl={fit.anl:.6g} "
          f"residual_rms={fit.residual_rms:.6g}")
    if not fit.converged:
        print(f"fit did not converge: {fit.message}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def run_sweep(args, config: Dict[str, Any]) -> int:
    axes = parse_axes(args.axis) if args.axis else dict(config['sweep.axes'] or {})
    sweeper = SweepService(config, jobs=args.jobs)
    records = sweeper.run(config, axes)

    writer = ResultsWriterService(config)
    dump_config({**config, 'sweep.axes': axes}, writer.output_dir / 'effective_config.yaml')
    path = writer.write_frame(sweeper.merge(records), writer.output_dir / 'sweep_results.csv')
    for record in records:
        writer.write_histograms(record, writer.output_dir / record.run_id)
    logging.info(f"Sweep of {len(records)} cell(s) written to {path}")
    return EXIT_OK


def dispatch(args, config: Dict[str, Any]) -> int:
    if args.command == 'fit-device':
        return run_fit_device(args, config)
    if args.command == 'sweep':
        return run_sweep(args, config)

    orchestrator = ExperimentOrchestrator(services=build_services(config), config=config)
    if args.command == 'train':
        _, record = orchestrator.run_training()
        if record.final_accuracy is not None:
            print(f"{record.run_id}: final test accuracy {record.final_accuracy:.2f}%")
    elif args.command == 'eval':
        scores = orchestrator.run_evaluation(args.snapshot)
        print(f"test_acc={scores['test_acc']:.6g} hidden_sparsity={scores['hidden_sparsity']:.6g}")
    elif args.command == 'export':
        print(orchestrator.run_export(args.snapshot, args.output))
    return EXIT_OK


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parses argv, runs one subcommand and maps failures to exit codes."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:
        # --help
        return int(e.code or 0)

    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format='%(asctime)s - %(levelname)s - %(message)s', force=True)

    try:
        config = effective_config(args)
        logging.info("Configuration loaded.")
        return dispatch(args, config)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as e:
        print(f"missing file: {e}", file=sys.stderr)
        return EXIT_DATA
    except (DataFormatError, DeviceModelError, ShapeError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except NumericalAbortError as e:
        print(f"numerical abort: {e}", file=sys.stderr)
        return EXIT_NUMERICAL


def main():
    sys.exit(run())


if __name__ == '__main__':
    main()
