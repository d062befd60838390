import json
import os

import pytest

import pmdp_verify
from config.experiment_settings import RESULTS_HEADER
from conftest import COMPLETE_PROPERTY, data_path
from utils import io_utils

FIG4 = data_path('fig4.json')


def run(capsys, *argv):
    """Exit code and the JSON payload printed on stdout"""
    code = pmdp_verify.main(list(argv))
    return code, json.loads(capsys.readouterr().out)


@pytest.fixture
def region_file(tmp_path, capsys):
    path = str(tmp_path / 'region.json')
    code, _ = run(capsys, 'synth', '--model', FIG4, '--property', COMPLETE_PROPERTY,
                  '--tie', 'theta2=theta1', '--tol', '0.015625', '--out', path)
    assert code == 0
    return path


class TestCommands:
    """Subcommands on the shipped models"""

    def test_check(self, capsys):
        code, body = run(capsys, 'check', '--model', FIG4, '--property', COMPLETE_PROPERTY,
                         '--theta', '0.5,0.5')
        assert code == 0
        assert body['status'] == 'ok'
        assert body['satisfied'] is True
        assert body['values']['S0'] == pytest.approx(0.6)

    def test_check_with_named_parameters(self, capsys):
        code, body = run(capsys, 'check', '--model', FIG4, '--property', COMPLETE_PROPERTY,
                         '--theta', 'theta1=0.3,theta2=0.3')
        assert code == 0
        assert body['satisfied'] is False
        assert body['values']['S0'] == pytest.approx(0.4)

    def test_synth_writes_the_region(self, region_file, capsys):
        document = io_utils.read_json(region_file)
        assert document['params'] == ['theta1']
        assert len(document['rects']) > 1

    def test_synth_prints_the_region_without_out(self, capsys):
        code, body = run(capsys, 'synth', '--model', FIG4, '--property', COMPLETE_PROPERTY,
                         '--tie', 'theta2=theta1', '--tol', '0.0625')
        assert code == 0
        assert {'params', 'rects'} <= set(body)

    def test_expand(self, capsys):
        code, body = run(capsys, 'expand', '--model', data_path('fig_split.json'))
        assert code == 0
        assert len(body['fresh_states']) == 2
        assert 's0|alpha1|s3' in body['lineage']

    def test_simulate_infer_confidence_design(self, region_file, tmp_path, capsys):
        traces = str(tmp_path / 'traces.jsonl')
        code, body = run(capsys, 'simulate', '--model', FIG4, '--theta', 'theta1=0.5,theta2=0.5',
                         '--traces', '3', '--len', '4', '--mode', 'random-static', '--out', traces)
        assert code == 0
        assert body['steps'] == 12

        posterior = str(tmp_path / 'posterior.json')
        code, body = run(capsys, 'infer', '--model', FIG4, '--traces', traces, '--out', posterior)
        assert code == 0
        assert set(body['posterior']) == {'theta1', 'theta2'}

        code, body = run(capsys, 'confidence', '--region', region_file, '--posterior', posterior,
                         '--method', 'exact')
        assert code == 0
        assert 0.0 <= body['c'] <= 1.0
        assert body['method'] == 'exact'

        code, body = run(capsys, 'design', '--model', FIG4, '--region', region_file,
                         '--posterior', posterior, '--mode', 'synth', '--method', 'exact')
        assert code == 0
        assert set(body['strategy']) == {'S0', 'S1', 'S2', 'S3', 'S4'}
        assert body['candidates'] == 8

    def test_design_baseline(self, region_file, capsys):
        code, body = run(capsys, 'design', '--model', FIG4, '--region', region_file, '--mode', 'random-static')
        assert code == 0
        assert set(body['strategy']) == {'S0', 'S1', 'S2', 'S3', 'S4'}

    def test_run(self, tmp_path, capsys):
        audit = str(tmp_path / 'audit.jsonl')
        code, body = run(capsys, 'run', '--model', FIG4, '--property', COMPLETE_PROPERTY,
                         '--theta', '0.5,0.5', '--tie', 'theta2=theta1', '--mode', 'none',
                         '--traces', '2', '--len', '3', '--audit', audit)
        assert code == 0
        assert len(body['series']) == 3
        assert body['total_steps'] == 6
        assert len(io_utils.read_jsonl(audit)) == 2

    def test_plots(self, tmp_path, capsys):
        rows = [[0.5, 'none', 2, 3, trial, 0.8, 0.04] for trial in range(2)]
        io_utils.write_csv(str(tmp_path / 'results.csv'), RESULTS_HEADER, rows)
        code, body = run(capsys, 'plots', '--results', str(tmp_path))
        assert code == 0
        assert [os.path.basename(p) for p in body['files']] == ['mse_t02_l03.csv', 'mse_t02_l03.gp']


class TestErrors:
    """Exit codes and error payloads"""

    def test_invalid_model(self, tmp_path, capsys):
        document = io_utils.read_json(FIG4)
        document['transitions'][0]['prob'] = '1/5'
        path = str(tmp_path / 'bad.json')
        io_utils.write_json(path, document)
        code, body = run(capsys, 'check', '--model', path, '--property', COMPLETE_PROPERTY, '--theta', '0.5,0.5')
        assert code == 3
        assert body['status'] == 'error'
        assert 'does not sum to 1' in body['details']['error']

    def test_missing_file(self, tmp_path, capsys):
        code, body = run(capsys, 'expand', '--model', str(tmp_path / 'absent.json'))
        assert code == 6
        assert body['exitCode'] == 6

    def test_malformed_theta(self, capsys):
        code, body = run(capsys, 'check', '--model', FIG4, '--property', COMPLETE_PROPERTY, '--theta', 'abc')
        assert code == 2
        assert body['status'] == 'error'

    def test_invalid_parameter_point(self, capsys):
        code, _ = run(capsys, 'check', '--model', FIG4, '--property', COMPLETE_PROPERTY, '--theta', '0.9,0.5')
        assert code == 3

    def test_bad_property(self, capsys):
        code, _ = run(capsys, 'check', '--model', FIG4, '--property', 'P>=0.5 [ F "complete" ]',
                      '--theta', '0.5,0.5')
        assert code == 3

    def test_eval_needs_an_output_directory(self, capsys):
        code, _ = run(capsys, 'eval', '--spec', data_path('fig4_experiment.json'))
        assert code == 2


class TestFlags:
    """Flag aliases and the bare region list"""

    def test_prop_and_samples_aliases(self, region_file, tmp_path, capsys):
        code, body = run(capsys, 'check', '--model', FIG4, '--prop', COMPLETE_PROPERTY, '--theta', '0.5,0.5')
        assert code == 0
        assert body['satisfied'] is True

        posterior = str(tmp_path / 'posterior.json')
        io_utils.write_json(posterior, {'theta1': [4, 2], 'theta2': [1, 1]})
        code, body = run(capsys, 'confidence', '--region', region_file, '--posterior', posterior,
                         '--samples', '2000', '--seed', '3')
        assert code == 0
        assert body['samples'] == 2000

    def test_bare_region_list(self, tmp_path, capsys):
        path = str(tmp_path / 'region.json')
        code, _ = run(capsys, 'synth', '--model', FIG4, '--prop', COMPLETE_PROPERTY,
                      '--tie', 'theta2=theta1', '--tol', '0.015625', '--bare', '--out', path)
        assert code == 0
        rects = io_utils.read_json(path)
        assert isinstance(rects, list)
        assert {'lo', 'hi', 'verdict'} == set(rects[0])

        posterior = str(tmp_path / 'posterior.json')
        io_utils.write_json(posterior, {'theta1': [4, 2], 'theta2': [1, 1]})
        code, body = run(capsys, 'confidence', '--region', path, '--posterior', posterior, '--method', 'exact')
        assert code == 0
        assert 0.0 < body['c'] < 1.0

        code, body = run(capsys, 'confidence', '--region', path, '--params', 'theta2',
                         '--posterior', posterior, '--method', 'exact')
        assert code == 0
        # theta2 ~ Beta(1, 1) over the satisfied interval [0.375, 0.75]
        assert body['c'] == pytest.approx(0.375, abs=0.05)


class TestDeterminism:
    """Same flags and seed, same output bytes"""

    def twice(self, capsys, tmp_path, name, *argv):
        outputs = []
        for attempt in ('first', 'second'):
            path = tmp_path / f'{attempt}_{name}'
            code, _ = run(capsys, *argv, '--out', str(path))
            assert code == 0
            outputs.append(path)
        return outputs

    def same_bytes(self, first, second):
        assert first.read_bytes() == second.read_bytes()

    def test_every_artifact_repeats(self, region_file, tmp_path, capsys):
        first, second = self.twice(capsys, tmp_path, 'traces.jsonl', 'simulate', '--model', FIG4,
                                   '--theta', '0.5,0.5', '--traces', '4', '--len', '5',
                                   '--mode', 'random-static', '--seed', '21')
        self.same_bytes(first, second)
        traces = str(first)

        for pair in (
            self.twice(capsys, tmp_path, 'region.json', 'synth', '--model', FIG4, '--prop', COMPLETE_PROPERTY,
                       '--tie', 'theta2=theta1', '--tol', '0.03125'),
            self.twice(capsys, tmp_path, 'expanded.json', 'expand', '--model', data_path('fig_split.json')),
            self.twice(capsys, tmp_path, 'check.json', 'check', '--model', FIG4, '--prop', COMPLETE_PROPERTY,
                       '--theta', '0.4,0.4'),
        ):
            self.same_bytes(*pair)

        posterior_pair = self.twice(capsys, tmp_path, 'posterior.json', 'infer', '--model', FIG4,
                                    '--traces', traces, '--completions', '20', '--seed', '22')
        self.same_bytes(*posterior_pair)
        posterior = str(posterior_pair[0])

        for pair in (
            self.twice(capsys, tmp_path, 'confidence.json', 'confidence', '--region', region_file,
                       '--posterior', posterior, '--samples', '3000', '--seed', '23'),
            self.twice(capsys, tmp_path, 'design.json', 'design', '--model', FIG4, '--region', region_file,
                       '--posterior', posterior, '--mode', 'synth', '--method', 'monte-carlo',
                       '--samples', '500', '--seed', '24'),
            self.twice(capsys, tmp_path, 'run.json', 'run', '--model', FIG4, '--prop', COMPLETE_PROPERTY,
                       '--theta', '0.5,0.5', '--tie', 'theta2=theta1', '--mode', 'synth', '--traces', '2',
                       '--len', '3', '--samples', '500', '--seed', '25'),
        ):
            self.same_bytes(*pair)

    def test_audit_log_repeats(self, tmp_path, capsys):
        logs = []
        for attempt in ('first', 'second'):
            path = tmp_path / f'{attempt}_audit.jsonl'
            code, _ = run(capsys, 'run', '--model', FIG4, '--prop', COMPLETE_PROPERTY, '--theta', '0.5,0.5',
                          '--tie', 'theta2=theta1', '--mode', 'random-static', '--traces', '3', '--len', '3',
                          '--seed', '26', '--audit', str(path))
            assert code == 0
            logs.append(path)
        self.same_bytes(*logs)

    def test_eval_results_repeat(self, tmp_path, capsys):
        spec = tmp_path / 'experiment.json'
        spec.write_text(json.dumps({
            'model': FIG4, 'property': COMPLETE_PROPERTY, 'grid': [0.2, 0.5],
            'configurations': [[2, 3]], 'modes': ['random-static', 'none'], 'trials': 2,
            'seed': 27, 'tolerance': 1 / 64, 'tie': {'theta2': 'theta1'},
            'synthesis_tie': {'theta2': 'theta1'}, 'confidence_method': 'exact'
        }), encoding='utf-8')
        outputs = []
        for attempt in ('first', 'second'):
            out = tmp_path / attempt
            code, _ = run(capsys, 'eval', '--spec', str(spec), '--threads', '1', '--out', str(out))
            assert code == 0
            outputs.append(out)
        names = sorted(os.listdir(outputs[0]))
        assert names == sorted(os.listdir(outputs[1]))
        assert 'results.csv' in names
        for name in names:
            self.same_bytes(outputs[0] / name, outputs[1] / name)
