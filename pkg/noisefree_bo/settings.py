"""
Experiment configuration: defaults, JSON file loading and validation.

Values are resolved in three layers: built-in defaults (desk or full scale),
then the JSON config file, then flags given explicitly on the command line.
"""
import json
import logging
import os
import re
from dataclasses import MISSING, asdict, dataclass, field, fields
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple, Union

from . import config
from .acquisition import BetaSchedule
from .bo_loops import Algorithm
from .errors import ConfigError
from .external import ExternalProcessObjective
from .kernels import KernelSpec
from .objectives import Objective, ObjectiveId, SearchDomain, make_objective

logger = logging.getLogger(__name__)


class ExperimentName(str, Enum):
    BENCH = 'bench'
    FILLDIST = 'filldist'
    INFER_ROSSLER = 'infer-rossler'
    INFER_LORENZ = 'infer-lorenz'

    @property
    def command(self) -> str:
        """Subcommand that runs this experiment."""
        return 'infer' if self.value.startswith('infer') else self.value


COMMON_DEFAULTS = {
    'seed': 0,
    'output_dir': config.OUTPUT_DIR,
    'kernel': {'family': 'matern', 'lengthscale': 1.0, 'nu': 2.5},
    'refit_every': config.REFIT_EVERY,
    'dry_run': False,
    'paper_scale': False,
}

# (desk scale, full scale) overrides per experiment
EXPERIMENT_DEFAULTS = {
    ExperimentName.BENCH: (
        {'algorithms': ['gpucb-plus', 'gpucb', 'exploit-plus', 'exploit', 'ei', 'pi'],
         'objectives': ['ackley', 'rastrigin', 'levy'], 'dimension': 10,
         'budget': 100, 'replications': 10, 'beta_sqrt': 2.0, 'reference_size': 100},
        {'budget': 400, 'replications': 20},
    ),
    ExperimentName.FILLDIST: (
        {'algorithms': ['gpucb', 'exploit', 'explore', 'uniform', 'gpucb-plus', 'exploit-plus'],
         'objectives': ['rastrigin'], 'dimension': 10,
         'budget': 100, 'replications': 20, 'beta_sqrt': 'sup', 'reference_size': 100},
        {'replications': 100},
    ),
    ExperimentName.INFER_ROSSLER: (
        {'algorithms': ['gpucb', 'uniform', 'exploit-plus', 'gpucb-plus'],
         'budget': 20, 'initial_design': 2, 'replications': 5, 'beta_sqrt': 2.0,
         'grid_size': 1401, 'n_samples': 2000},
        {'replications': 20},
    ),
    ExperimentName.INFER_LORENZ: (
        {'algorithms': ['gpucb', 'uniform', 'exploit-plus', 'gpucb-plus'],
         'budget': 200, 'initial_design': 20, 'replications': 5, 'beta_sqrt': 2.0,
         'comparison_nodes': 5000, 'z_grid': 32,
         'mcmc_iterations': 20000, 'burn_in': 10000, 'step_cov': 0.3},
        {'budget': 400, 'replications': 10, 'comparison_nodes': 30000, 'z_grid': 64},
    ),
}


@dataclass(frozen=True)
class ExperimentConfig:
    """
    Fully resolved settings of one experiment.

    Fields that do not apply to an experiment keep their neutral defaults and
    are left out of ``to_dict``.
    """
    experiment: ExperimentName
    algorithms: List[str]
    budget: int
    replications: int
    seed: int = 0
    output_dir: str = config.OUTPUT_DIR
    kernel: Dict[str, Any] = field(default_factory=lambda: dict(COMMON_DEFAULTS['kernel']))
    refit_every: int = config.REFIT_EVERY
    beta_sqrt: Union[float, str] = 2.0
    objectives: List[str] = field(default_factory=list)
    dimension: int = 10
    initial_design: Optional[int] = None
    reference_size: int = 100
    grid_size: int = 1401
    n_samples: int = 2000
    comparison_nodes: int = 30000
    z_grid: int = 64
    mcmc_iterations: int = 20000
    burn_in: int = 10000
    step_cov: float = 0.3
    external_command: Optional[str] = None
    external_bounds: Optional[List[float]] = None
    external_f_star: Optional[float] = None
    paper_scale: bool = False
    dry_run: bool = False

    @property
    def algorithm_ids(self) -> List[Algorithm]:
        return [Algorithm(a) for a in self.algorithms]

    @property
    def kernel_spec(self) -> KernelSpec:
        return KernelSpec(**self.kernel)

    def beta_schedule(self, domain: SearchDomain, reference=None) -> BetaSchedule:
        """
        Constant schedule from beta_sqrt, or the squared sup norm of f over the reference points.
        """
        if self.beta_sqrt == 'sup':
            if reference is None:
                raise ValueError("A sup-norm beta needs reference points")
            return BetaSchedule.sup_norm(reference)
        return BetaSchedule.from_sqrt(self.beta_sqrt)

    def build_objective(self, name: str) -> Objective:
        """Benchmark by id, or the external process on a cube of the configured dimension."""
        if ObjectiveId(name) is ObjectiveId.EXTERNAL_PROCESS:
            lo, hi = self.external_bounds
            return ExternalProcessObjective(self.external_command, SearchDomain.cube(lo, hi, self.dimension),
                                            self.external_f_star)
        return make_objective(name, self.dimension)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data['experiment'] = self.experiment.value
        used = set(COMMON_DEFAULTS) | {'experiment', 'algorithms', 'budget', 'replications'}
        used |= set(EXPERIMENT_DEFAULTS[self.experiment][0])
        if 'external' in self.objectives:
            used |= {'external_command', 'external_bounds', 'external_f_star'}
        used |= {f.name for f in fields(self) if f.default is not MISSING and data[f.name] != f.default}
        return {k: v for k, v in data.items() if k in used}


FIELD_NAMES = {f.name for f in fields(ExperimentConfig)}
INTEGER_FIELDS = {'budget', 'replications', 'seed', 'refit_every', 'dimension', 'initial_design',
                  'reference_size', 'grid_size', 'n_samples', 'comparison_nodes', 'z_grid',
                  'mcmc_iterations', 'burn_in'}
POSITIVE_FIELDS = {'budget', 'replications', 'refit_every', 'dimension', 'initial_design', 'reference_size',
                   'n_samples', 'comparison_nodes', 'z_grid', 'mcmc_iterations'}


def normalize_keys(values: Dict[str, Any]) -> Dict[str, Any]:
    """Convert dashes in key names to underscores."""
    return {key.replace('-', '_'): value for key, value in values.items()}


def _key_lines(text: str, keys) -> Dict[str, int]:
    lines = {}
    for key in keys:
        match = re.search(r'^\s*"' + re.escape(key) + r'"\s*:', text, flags=re.MULTILINE)
        if match:
            lines[key.replace('-', '_')] = text.count('\n', 0, match.start()) + 1
    return lines


def load_config_file(path: str) -> Tuple[Dict[str, Any], Dict[str, int]]:
    """
    Load a JSON config file.

    Returns:
        tuple: (values with normalized keys, line number of each key)

    Raises:
        ConfigError: Missing file, invalid JSON or a non-object document
    """
    if not os.path.exists(path):
        raise ConfigError("Config file not found", source=path)
    try:
        with open(path, 'r') as f:
            text = f.read()
        values = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"Invalid JSON: {e.msg}", source=path, line=e.lineno) from e
    except IOError as e:
        raise ConfigError(f"Cannot read config file: {e}", source=path) from e
    if not isinstance(values, dict):
        raise ConfigError("Config file must contain a JSON object", source=path, line=1)
    logger.debug("Loaded configuration from %s: %s", path, values)
    return normalize_keys(values), _key_lines(text, values.keys())


class _Origin:
    """Where each resolved value came from, for error messages."""

    def __init__(self, source: Optional[str], lines: Dict[str, int], file_keys):
        self.source = source
        self.lines = lines
        self.file_keys = set(file_keys)

    def error(self, key: str, message: str) -> ConfigError:
        if key in self.file_keys:
            return ConfigError(f"'{key}': {message}", source=self.source, line=self.lines.get(key))
        return ConfigError(f"'{key}': {message}")


def _check_int(key: str, value, origin: _Origin) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise origin.error(key, f"expected an integer, got {value!r}")
    if key in POSITIVE_FIELDS and value < 1:
        raise origin.error(key, f"must be positive, got {value}")
    if value < 0:
        raise origin.error(key, f"must be non-negative, got {value}")
    return value


def _check_number(key: str, value, origin: _Origin, positive: bool = True) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise origin.error(key, f"expected a number, got {value!r}")
    if positive and value <= 0:
        raise origin.error(key, f"must be positive, got {value}")
    return float(value)


def _validate(values: Dict[str, Any], origin: _Origin) -> Dict[str, Any]:
    out = dict(values)
    for key in INTEGER_FIELDS:
        if out.get(key) is not None:
            out[key] = _check_int(key, out[key], origin)

    algorithms = out['algorithms']
    if isinstance(algorithms, str):
        algorithms = [a.strip() for a in algorithms.split(',') if a.strip()]
    if not isinstance(algorithms, list) or not algorithms:
        raise origin.error('algorithms', "expected a non-empty list of algorithm names")
    for name in algorithms:
        try:
            Algorithm(name)
        except ValueError:
            raise origin.error('algorithms', f"unknown algorithm '{name}' "
                                             f"(choose from {', '.join(a.value for a in Algorithm)})") from None
    out['algorithms'] = list(algorithms)

    for name in out.get('objectives') or []:
        try:
            ObjectiveId(name)
        except ValueError:
            raise origin.error('objectives', f"unknown objective '{name}'") from None

    beta = out['beta_sqrt']
    if beta != 'sup':
        out['beta_sqrt'] = _check_number('beta_sqrt', beta, origin, positive=False)
        if out['beta_sqrt'] < 0:
            raise origin.error('beta_sqrt', f"must be non-negative or \"sup\", got {beta}")
    out['step_cov'] = _check_number('step_cov', out['step_cov'], origin)

    if not isinstance(out['kernel'], dict):
        raise origin.error('kernel', "expected an object with family, lengthscale and nu")
    try:
        KernelSpec(**out['kernel'])
    except (TypeError, ValueError) as e:
        raise origin.error('kernel', str(e)) from None

    for key in ('dry_run', 'paper_scale'):
        if not isinstance(out[key], bool):
            raise origin.error(key, f"expected true or false, got {out[key]!r}")
    if not isinstance(out['output_dir'], str) or not out['output_dir']:
        raise origin.error('output_dir', "expected a directory path")

    experiment = out['experiment']
    if experiment in (ExperimentName.INFER_ROSSLER, ExperimentName.INFER_LORENZ):
        unsupported = [a for a in out['algorithms'] if a not in ('gpucb', 'gpucb-plus', 'exploit-plus', 'uniform')]
        if unsupported:
            raise origin.error('algorithms', f"inference supports gpucb, gpucb-plus, exploit-plus and uniform, "
                                             f"got {', '.join(unsupported)}")
        if out['burn_in'] >= out['mcmc_iterations']:
            raise origin.error('burn_in', "must be smaller than mcmc_iterations")
        if experiment is ExperimentName.INFER_ROSSLER and out['grid_size'] < 2:
            raise origin.error('grid_size', "needs at least two nodes")
    if out.get('initial_design') is not None and out['budget'] < out['initial_design']:
        raise origin.error('budget', f"budget {out['budget']} cannot cover {out['initial_design']} initial points")

    if 'external' in (out.get('objectives') or []):
        if not out.get('external_command'):
            raise origin.error('external_command', "required for the external objective")
        bounds = out.get('external_bounds')
        if not (isinstance(bounds, list) and len(bounds) == 2 and all(isinstance(b, (int, float)) for b in bounds)
                and bounds[0] < bounds[1]):
            raise origin.error('external_bounds', "expected [lo, hi] with lo < hi")
    return out


def resolve_config(experiment: Union[str, ExperimentName], file_values: Optional[Dict[str, Any]] = None,
                   cli_values: Optional[Dict[str, Any]] = None, source: Optional[str] = None,
                   lines: Optional[Dict[str, int]] = None) -> ExperimentConfig:
    """
    Build the resolved configuration.

    Args:
        experiment: Experiment name
        file_values (dict, optional): Values from the config file (normalized keys)
        cli_values (dict, optional): Values of flags given explicitly on the command line
        source (str, optional): Config file path, for error messages
        lines (dict, optional): Line of each key in the config file

    Returns:
        ExperimentConfig: Validated configuration

    Raises:
        ConfigError: Unknown keys, wrong types or out-of-range values
    """
    file_values = normalize_keys(file_values or {})
    cli_values = normalize_keys(cli_values or {})
    origin = _Origin(source, lines or {}, set(file_values) - set(cli_values))

    for key in file_values:
        if key not in FIELD_NAMES:
            raise origin.error(key, "unknown configuration key")

    try:
        experiment = ExperimentName(experiment)
    except ValueError:
        raise ConfigError(f"Unknown experiment '{experiment}'") from None
    if 'experiment' in file_values and file_values['experiment'] != experiment.value:
        raise origin.error('experiment', f"file is for '{file_values['experiment']}' but '{experiment.value}' "
                                         f"was requested")

    paper_scale = cli_values.get('paper_scale', file_values.get('paper_scale', False))
    desk, paper = EXPERIMENT_DEFAULTS[experiment]
    values = dict(COMMON_DEFAULTS)
    values.update(desk)
    if paper_scale:
        values.update(paper)
    values.update(file_values)
    values.update(cli_values)
    values['experiment'] = experiment

    resolved = ExperimentConfig(**_validate(values, origin))
    logger.info("Resolved %s config: %d algorithm(s), budget %d, %d replication(s), seed %d%s",
                experiment.value, len(resolved.algorithms), resolved.budget, resolved.replications,
                resolved.seed, ' (full scale)' if resolved.paper_scale else '')
    return resolved
