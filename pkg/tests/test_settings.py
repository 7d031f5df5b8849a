import json

import pytest

from noisefree_bo.acquisition import BetaSchedule
from noisefree_bo.errors import ConfigError
from noisefree_bo.external import ExternalProcessObjective
from noisefree_bo.objectives import SearchDomain
from noisefree_bo.settings import ExperimentName, load_config_file, normalize_keys, resolve_config


def _write(tmp_path, text):
    path = tmp_path / "config.json"
    path.write_text(text)
    return str(path)


def test_desk_scale_defaults():
    cfg = resolve_config('bench')
    assert cfg.experiment is ExperimentName.BENCH
    assert cfg.budget == 100
    assert cfg.replications == 10
    assert cfg.objectives == ['ackley', 'rastrigin', 'levy']
    assert cfg.algorithms[0] == 'gpucb-plus'


def test_full_scale_defaults():
    cfg = resolve_config('infer-lorenz', cli_values={'paper_scale': True})
    assert cfg.budget == 400
    assert cfg.comparison_nodes == 30000
    assert cfg.z_grid == 64


def test_file_overrides_defaults_and_cli_overrides_file():
    cfg = resolve_config('bench', file_values={'budget': 50, 'seed': 3}, cli_values={'budget': 60})
    assert cfg.budget == 60
    assert cfg.seed == 3


def test_dash_keys_are_normalized():
    assert normalize_keys({'beta-sqrt': 1.0, 'dry_run': True}) == {'beta_sqrt': 1.0, 'dry_run': True}
    cfg = resolve_config('bench', file_values={'beta-sqrt': 1.5})
    assert cfg.beta_sqrt == 1.5


def test_load_config_file_records_key_lines(tmp_path):
    path = _write(tmp_path, '{\n  "experiment": "bench",\n  "output-dir": "out"\n}\n')
    values, lines = load_config_file(path)
    assert values == {'experiment': 'bench', 'output_dir': 'out'}
    assert lines == {'experiment': 2, 'output_dir': 3}


def test_bad_value_reports_file_and_line(tmp_path):
    path = _write(tmp_path, '{\n  "experiment": "bench",\n  "budget": -5\n}\n')
    values, lines = load_config_file(path)
    with pytest.raises(ConfigError) as excinfo:
        resolve_config('bench', values, source=path, lines=lines)
    assert excinfo.value.line == 3
    assert str(excinfo.value).startswith(f"{path}:3:")
    assert "must be positive" in str(excinfo.value)


def test_invalid_json_reports_line(tmp_path):
    path = _write(tmp_path, '{\n  "budget": 10,\n  "seed": \n}\n')
    with pytest.raises(ConfigError) as excinfo:
        load_config_file(path)
    assert excinfo.value.line == 4


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config_file(str(tmp_path / "missing.json"))


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="unknown configuration key"):
        resolve_config('bench', file_values={'budjet': 10})


def test_unknown_algorithm_rejected():
    with pytest.raises(ConfigError, match="unknown algorithm 'thompson'"):
        resolve_config('bench', cli_values={'algorithms': 'gpucb,thompson'})


def test_comma_separated_algorithms():
    cfg = resolve_config('bench', cli_values={'algorithms': 'gpucb, exploit-plus'})
    assert cfg.algorithms == ['gpucb', 'exploit-plus']


def test_inference_restricts_algorithms():
    with pytest.raises(ConfigError, match="inference supports"):
        resolve_config('infer-rossler', cli_values={'algorithms': ['ei']})


def test_burn_in_must_leave_samples():
    with pytest.raises(ConfigError, match="burn_in"):
        resolve_config('infer-lorenz', file_values={'burn_in': 20000, 'mcmc_iterations': 20000})


def test_budget_must_cover_initial_design():
    with pytest.raises(ConfigError, match="cannot cover"):
        resolve_config('infer-lorenz', cli_values={'budget': 10})


def test_experiment_mismatch_between_file_and_request():
    with pytest.raises(ConfigError, match="file is for"):
        resolve_config('bench', file_values={'experiment': 'filldist'})


@pytest.mark.parametrize("key, value", [
    ('dry_run', 'yes'), ('kernel', {'lengthscale': -1.0}), ('beta_sqrt', -1.0), ('seed', 1.5),
])
def test_type_errors(key, value):
    with pytest.raises(ConfigError):
        resolve_config('bench', file_values={key: value})


def test_to_dict_keeps_only_relevant_fields():
    data = resolve_config('bench').to_dict()
    assert 'objectives' in data
    assert 'mcmc_iterations' not in data
    json.dumps(data)


def test_beta_schedules():
    domain = SearchDomain((0.0,), (1.0,))
    assert resolve_config('bench').beta_schedule(domain) == BetaSchedule.constant(4.0)
    sup = resolve_config('filldist')
    assert sup.beta_sqrt == 'sup'
    with pytest.raises(ValueError):
        sup.beta_schedule(domain)
    schedule = sup.beta_schedule(domain, [[0.2], [0.5]])
    assert schedule.kind == BetaSchedule.sup_norm([[0.5]]).kind
    assert schedule.design_size == 2


def test_external_objective_is_built_from_config():
    cfg = resolve_config('bench', file_values={
        'objectives': ['external'], 'external_command': 'objective --fast',
        'external_bounds': [-2, 2], 'dimension': 3,
    })
    objective = cfg.build_objective('external')
    assert isinstance(objective, ExternalProcessObjective)
    assert objective.command == ['objective', '--fast']
    assert objective.domain == SearchDomain.cube(-2.0, 2.0, 3)
    assert 'external_command' in cfg.to_dict()


def test_external_objective_needs_bounds():
    with pytest.raises(ConfigError, match="external_bounds"):
        resolve_config('bench', file_values={'objectives': ['external'], 'external_command': 'objective'})
