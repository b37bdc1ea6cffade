import csv
import json

import pytest

from main import EXIT_CONVERGENCE, EXIT_FAILED, EXIT_OK, EXIT_VALIDATION, main
from pipelines import SnellPipeline, default_registry


def last_json(capsys):
    return json.loads(capsys.readouterr().out)


def test_run_snell_writes_report(tmp_path, scenario_path, capsys):
    out = tmp_path / 'worked'
    assert main(['run', str(scenario_path('worked_tree')), '--task', 'snell', '--out', str(out)]) == EXIT_OK
    assert last_json(capsys)['task'] == 'snell'

    summary = json.loads((out / 'summary.json').read_text())
    assert summary['v0'] == 5.0
    assert summary['classical_v0'] == 1.25
    assert summary['scenario']['name'] == 'worked_tree'
    with open(out / 'nodes.csv', newline='') as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 7
    assert float(rows[0]['v_at']) == 5.0


def test_run_rejects_malformed_json(tmp_path, capsys):
    bad = tmp_path / 'bad.json'
    bad.write_text('{"grid": ')
    assert main(['run', str(bad), '--task', 'snell', '--out', str(tmp_path / 'o')]) == EXIT_VALIDATION
    assert last_json(capsys)['error'] == 'ScenarioError'


def test_run_reports_invalid_tree(tmp_path, capsys):
    document = {
        'grid': {'steps': 1, 'dt': 1.0},
        'tree': {'kind': 'uniform', 'probabilities': [0.5, 0.6], 'noise': [1.0, -1.0]},
        'obstacles': {'xi': {'at': [0.0, 1.0, 0.0]}},
    }
    path = tmp_path / 'bad_tree.json'
    path.write_text(json.dumps(document))
    assert main(['run', str(path), '--task', 'snell', '--out', str(tmp_path / 'o')]) == EXIT_VALIDATION
    assert last_json(capsys)['violations']


def test_run_enumerate(tmp_path, capsys):
    document = {
        'grid': {'steps': 1, 'dt': 1.0},
        'tree': {'kind': 'binomial'},
        'obstacles': {'xi': {'at': [0.0, 1.0, 0.0]}},
    }
    path = tmp_path / 'one_step.json'
    path.write_text(json.dumps(document))
    out = tmp_path / 'enum'
    assert main(['run', str(path), '--task', 'enumerate', '--out', str(out)]) == EXIT_OK
    summary = json.loads((out / 'summary.json').read_text())
    assert summary['count'] == 4
    assert summary['ordinary_count'] == 2
    assert len(summary['members']) == 4


def test_run_drbsde_on_band(tmp_path, scenario_path):
    out = tmp_path / 'band'
    assert main(['run', str(scenario_path('band_one_step')), '--task', 'drbsde', '--out', str(out)]) == EXIT_OK
    assert (out / 'nodes.csv').exists()


def test_gen_is_deterministic(tmp_path):
    first, second = tmp_path / 'a.json', tmp_path / 'b.json'
    for path in (first, second):
        assert main(['gen', '--steps', '2', '--branching', '2', '--seed', '7', '--out', str(path)]) == EXIT_OK
    assert first.read_bytes() == second.read_bytes()


def test_gen_rejects_large_trees(capsys):
    assert main(['gen', '--steps', '9', '--branching', '2', '--seed', '1']) == EXIT_VALIDATION
    assert last_json(capsys)['error'] == 'CapExceeded'


def test_check_scenario(scenario_path, capsys):
    assert main(['check', str(scenario_path('worked_tree'))]) == EXIT_OK
    summary = last_json(capsys)
    assert summary['passed']
    assert summary['worst_deviation']['snell.aggregation'] < 1e-10


def test_replay_detects_tampering(tmp_path, scenario_path, capsys):
    out = tmp_path / 'worked'
    main(['run', str(scenario_path('worked_tree')), '--task', 'snell', '--out', str(out)])
    capsys.readouterr()
    assert main(['check', '--replay', str(out)]) == EXIT_OK
    capsys.readouterr()

    nodes = out / 'nodes.csv'
    with open(nodes, newline='') as f:
        rows = list(csv.DictReader(f))
    rows[0]['v_at'] = repr(7.0)
    with open(nodes, 'w', newline='') as f:
        writer = csv.DictWriter(f, fieldnames=list(rows[0]), lineterminator='\n')
        writer.writeheader()
        writer.writerows(rows)

    assert main(['check', '--replay', str(out)]) == EXIT_FAILED
    report = last_json(capsys)['reports'][0]
    assert 'replay.reproduction' in report['failures']


def test_check_needs_a_target():
    with pytest.raises(SystemExit):
        main(['check'])


def test_rbsde_report_replays(tmp_path, scenario_path, capsys):
    out = tmp_path / 'band'
    assert main(['run', str(scenario_path('band_one_step')), '--task', 'rbsde', '--out', str(out)]) == EXIT_OK
    summary = json.loads((out / 'summary.json').read_text())
    assert summary['task'] == 'rbsde'
    capsys.readouterr()
    assert main(['check', '--replay', str(out)]) == EXIT_OK


def test_registry():
    registry = default_registry()
    assert sorted(registry.list_tasks()) == ['drbsde', 'enumerate', 'rbsde', 'snell']
    with pytest.raises(ValueError):
        registry.register(SnellPipeline)
    with pytest.raises(KeyError):
        registry.create('price')


@pytest.mark.parametrize('task', ['snell', 'rbsde', 'drbsde'])
def test_run_is_byte_identical(tmp_path, scenario_path, task):
    first, second = tmp_path / 'first', tmp_path / 'second'
    for out in (first, second):
        assert main(['run', str(scenario_path('band_one_step')), '--task', task, '--out', str(out)]) == EXIT_OK
    for name in ('summary.json', 'nodes.csv'):
        assert (first / name).read_bytes() == (second / name).read_bytes()


def test_run_reports_truncated_picard(tmp_path, scenario_path, capsys):
    document = json.loads(scenario_path('band_one_step').read_text())
    document['solver'] = {'max_iter': 1}
    path = tmp_path / 'truncated.json'
    path.write_text(json.dumps(document))
    assert main(['run', str(path), '--task', 'rbsde', '--out', str(tmp_path / 'o')]) == EXIT_CONVERGENCE
    assert last_json(capsys)['error'] == 'NoConvergence'
