#!/usr/bin/env python3
"""
CLI application for running the noise-free Bayesian optimization experiments.

Subcommands: bench (regret curves), filldist (fill distance of query sets) and
infer (surrogate posteriors of the Rossler and Lorenz-63 parameters).
"""
import argparse
import importlib
import inspect
import json
import logging
import pkgutil
import sys
from typing import Any, Dict, List, Optional, Sequence, Set, Type

from noisefree_bo import config as bo_config
from noisefree_bo.errors import ConfigError
from noisefree_bo.experiment import Experiment
from noisefree_bo.results import to_builtin
from noisefree_bo.settings import ExperimentConfig, ExperimentName, load_config_file, resolve_config

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG_ERROR = 2
EXIT_RUNTIME_FAILURE = 3

LOG_LEVELS = ['DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL']

# Command-line flag -> configuration key
FLAG_KEYS = {
    'budget': 'budget',
    'reps': 'replications',
    'seed': 'seed',
    'algorithms': 'algorithms',
    'out': 'output_dir',
    'paper_scale': 'paper_scale',
    'dry_run': 'dry_run',
}


class ExperimentRegistry:
    """
    Registry for dynamically discovering experiment plugins.
    main.py needs no specific knowledge of the experiments it runs.
    """

    def __init__(self):
        self.experiments: Dict[ExperimentName, Type[Experiment]] = {}

    def discover_experiments(self, package_name: str = 'experiments'):
        """
        Import every module below the plugin package and register the
        concrete Experiment subclasses it defines.
        """
        package = importlib.import_module(package_name)
        logger.debug("Starting experiment discovery in %s...", package_name)

        for module_name in self._find_experiment_modules(package):
            try:
                module = importlib.import_module(module_name)
            except ImportError as e:
                logger.warning("Could not import experiment module %s: %s", module_name, e)
                continue
            self._register_experiments_from_module(module)

    def _find_experiment_modules(self, package) -> List[str]:
        modules = []
        prefix = package.__name__ + "."

        for _, name, is_pkg in pkgutil.iter_modules(package.__path__, prefix):
            if is_pkg:
                try:
                    subpackage = importlib.import_module(name)
                    modules.extend(self._find_experiment_modules(subpackage))
                except ImportError as e:
                    logger.warning("Could not import experiment package %s: %s", name, e)
            else:
                modules.append(name)

        return modules

    def _register_experiments_from_module(self, module):
        for _, obj in inspect.getmembers(module, inspect.isclass):
            if issubclass(obj, Experiment) and obj is not Experiment and not inspect.isabstract(obj):
                for name in obj.handles:
                    self.experiments[name] = obj
                    logger.debug("Registered experiment %s from class %s", name.value, obj.__name__)

    def get_experiment_class(self, name) -> Optional[Type[Experiment]]:
        return self.experiments.get(ExperimentName(name))

    def get_available_experiments(self) -> List[str]:
        return sorted(name.value for name in self.experiments)


experiment_registry = ExperimentRegistry()


def setup_logging(log_level: str) -> None:
    """
    Setup logging with the specified log level.

    Args:
        log_level (str): Log level (DEBUG, INFO, WARNING, ERROR, CRITICAL)
    """
    numeric_level = getattr(logging, log_level.upper(), None)
    if not isinstance(numeric_level, int):
        raise ValueError(f"Invalid log level: {log_level}")

    logging.basicConfig(
        level=numeric_level,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )
    logging.getLogger().setLevel(numeric_level)


def _add_common_arguments(parser: argparse.ArgumentParser, experiments: Sequence[ExperimentName]):
    parser.add_argument('--config', type=str, help='Path to JSON configuration file')
    parser.add_argument('--log-level', type=str, choices=LOG_LEVELS, help='Log level')
    parser.add_argument('--experiment', type=str, choices=[e.value for e in experiments],
                        help='Experiment to run')
    parser.add_argument('--budget', type=int, help='Objective evaluations per run, initial design included')
    parser.add_argument('--reps', type=int, help='Number of independent replications')
    parser.add_argument('--seed', type=int, help='Root seed of the replication seeds')
    parser.add_argument('--algorithms', type=str, help='Comma-separated algorithm names')
    parser.add_argument('--out', type=str, help='Output directory')
    parser.add_argument('--paper-scale', action='store_true', help='Use the full-size defaults')
    parser.add_argument('--print-config', action='store_true', help='Print the resolved configuration and exit')
    parser.add_argument('--dry-run', action='store_true', help='Run without writing result files')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description='Run noise-free Bayesian optimization experiments.',
        formatter_class=argparse.ArgumentDefaultsHelpFormatter
    )
    subparsers = parser.add_subparsers(dest='command', required=True)

    commands = {
        'bench': ('Simple and cumulative regret on the benchmark objectives', [ExperimentName.BENCH]),
        'filldist': ('Fill distance of the query sets', [ExperimentName.FILLDIST]),
        'infer': ('Surrogate posteriors for ODE parameters',
                  [ExperimentName.INFER_ROSSLER, ExperimentName.INFER_LORENZ]),
    }
    for command, (help_text, experiments) in commands.items():
        _add_common_arguments(subparsers.add_parser(command, help=help_text), experiments)
    return parser


def explicit_arguments(argv: Sequence[str]) -> Set[str]:
    """Names of the flags given on the command line, with dashes as underscores."""
    return {arg[2:].split('=')[0].replace('-', '_') for arg in argv if arg.startswith('--')}


def choose_experiment(command: str, requested: Optional[str], file_values: Dict[str, Any]) -> str:
    if requested:
        return requested
    if command == 'infer':
        return file_values.get('experiment', ExperimentName.INFER_ROSSLER.value)
    return command


def resolve_from_args(args: argparse.Namespace, config_file: Optional[str],
                      explicit: Set[str]) -> ExperimentConfig:
    """
    Merge defaults, the config file and the explicitly given flags.

    Raises:
        ConfigError: Invalid file or values
    """
    file_values, lines = {}, {}
    if config_file:
        file_values, lines = load_config_file(config_file)

    level = file_values.pop('log_level', None)
    if level is not None and 'log_level' not in explicit:
        try:
            setup_logging(str(level))
        except ValueError as e:
            raise ConfigError(str(e), source=config_file, line=lines.get('log_level')) from None

    cli_values = {key: getattr(args, flag) for flag, key in FLAG_KEYS.items() if flag in explicit}
    logger.debug("Explicitly provided arguments: %s", sorted(explicit))

    experiment = choose_experiment(args.command, args.experiment, file_values)
    try:
        command = ExperimentName(experiment).command
    except ValueError:
        raise ConfigError(f"Unknown experiment '{experiment}'", source=config_file,
                          line=lines.get('experiment')) from None
    if command != args.command:
        raise ConfigError(f"Experiment '{experiment}' is not run by the '{args.command}' command",
                          source=config_file, line=lines.get('experiment'))
    return resolve_config(experiment, file_values, cli_values, source=config_file, lines=lines)


def run_experiment(experiment_config: ExperimentConfig) -> Dict[str, Any]:
    """
    Instantiate and run the registered plugin for a resolved configuration.

    Raises:
        LookupError: If no plugin handles the experiment
    """
    if not experiment_registry.experiments:
        experiment_registry.discover_experiments()

    experiment_class = experiment_registry.get_experiment_class(experiment_config.experiment)
    if experiment_class is None:
        available = experiment_registry.get_available_experiments()
        raise LookupError(f"No plugin for experiment '{experiment_config.experiment.value}'. "
                          f"Available experiments: {available if available else 'None discovered'}")

    experiment = experiment_class(experiment_config)
    return experiment.run_and_write(dry_run=experiment_config.dry_run)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main function to parse arguments and run one experiment."""
    argv = list(sys.argv[1:] if argv is None else argv)

    # Create first parser for early config file and log level
    early_parser = argparse.ArgumentParser(add_help=False)
    early_parser.add_argument('--config', type=str)
    early_parser.add_argument('--log-level', type=str, default=bo_config.LOG_LEVEL, choices=LOG_LEVELS)
    early_args, remaining_args = early_parser.parse_known_args(argv)

    setup_logging(early_args.log_level)

    args = build_parser().parse_args(remaining_args)
    explicit = explicit_arguments(argv)

    try:
        experiment_config = resolve_from_args(args, early_args.config, explicit)
    except ConfigError as e:
        logger.error("Configuration error: %s", e)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG_ERROR

    if args.print_config:
        print(json.dumps(to_builtin(experiment_config.to_dict()), indent=2, sort_keys=True))
        return EXIT_OK

    try:
        summary = run_experiment(experiment_config)
    except KeyboardInterrupt:
        logger.info("Experiment interrupted by user.")
        return EXIT_RUNTIME_FAILURE
    except Exception as e:
        logger.error("Experiment %s failed: %s", experiment_config.experiment.value, e)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME_FAILURE

    logger.info("Experiment %s completed (%d result group(s)).", experiment_config.experiment.value, len(summary))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
