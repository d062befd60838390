import json
import os

import pytest

from conftest import COMPLETE_PROPERTY, data_path
from models.region import FeasibleRegionMap, HyperRect, Verdict
from services import harness_service, synthesis_service
from services.harness_service import HarnessError, UndecidedGroundTruthError
from utils import io_utils


@pytest.fixture
def interval():
    return synthesis_service.interval_region('theta1', 0.375, 0.75)


def write_spec(tmp_path, **overrides):
    document = {
        'model': data_path('fig4.json'),
        'property': COMPLETE_PROPERTY,
        'grid': [0.2, 0.5],
        'configurations': [[2, 3]],
        'modes': ['random-static', 'none'],
        'trials': 2,
        'seed': 11,
        'tolerance': 1 / 64,
        'tie': {'theta2': 'theta1'},
        'synthesis_tie': {'theta2': 'theta1'},
        'confidence_method': 'exact'
    }
    document.update(overrides)
    path = tmp_path / 'experiment.json'
    path.write_text(json.dumps(document), encoding='utf-8')
    return str(path)


class TestScoring:
    """Ground truth, MSE and box-plot statistics"""

    def test_mse(self):
        assert harness_service.mse(1, [0.8]) == pytest.approx(0.04)
        assert harness_service.mse(0, [0.1, 0.3]) == pytest.approx(0.05)

    def test_mse_needs_outcomes(self):
        with pytest.raises(HarnessError):
            harness_service.mse(1, [])

    def test_quartiles(self):
        stats = harness_service.quartiles([1, 2, 3, 4, 5, 100])
        assert stats['median'] == pytest.approx(3.5)
        assert stats['q1'] == pytest.approx(2.25)
        assert stats['whisker_high'] == 5.0
        assert stats['whisker_low'] == 1.0

    def test_ground_truth(self, interval):
        assert harness_service.ground_truth(interval, {'theta1': 0.5, 'theta2': 0.5}) == 1
        assert harness_service.ground_truth(interval, [0.2]) == 0

    def test_boundary_points(self, interval):
        assert harness_service.on_boundary(interval, [0.375])
        assert not harness_service.on_boundary(interval, [0.5])

    def test_undecided_ground_truth(self):
        cells = ((HyperRect((0.0,), (0.5,)), Verdict.UNKNOWN), (HyperRect((0.5,), (1.0,)), Verdict.SAT))
        region = FeasibleRegionMap(('theta1',), (0.0,), (1.0,), cells, tolerance=0.5)
        with pytest.raises(UndecidedGroundTruthError):
            harness_service.ground_truth(region, [0.25])


class TestRunVerification:
    """One sequential verification run"""

    def test_series_starts_with_the_prior(self, fig4, complete_property, interval):
        run = harness_service.run_verification(
            fig4, complete_property, 'none', 0, 5, (0.5, 0.5), seed=1, region=interval)
        assert run.series == [pytest.approx(0.375)]
        assert run.total_steps == 0

    def test_one_entry_per_trace(self, fig4, complete_property, interval):
        run = harness_service.run_verification(
            fig4, complete_property, 'random-static', 4, 5, (0.5, 0.5), seed=2, region=interval)
        assert len(run.series) == 5
        assert run.total_steps == 20
        assert run.confidence.value == run.series[-1]
        assert [entry['batch'] for entry in run.audit] == [0, 1, 2, 3]

    def test_runs_are_reproducible(self, fig4, complete_property, interval):
        first = harness_service.run_verification(
            fig4, complete_property, 'none', 3, 5, (0.5, 0.5), seed=3, region=interval)
        second = harness_service.run_verification(
            fig4, complete_property, 'none', 3, 5, (0.5, 0.5), seed=3, region=interval)
        assert first.series == second.series

    def test_designed_runs_record_strategies(self, fig4, complete_property, interval):
        run = harness_service.run_verification(
            fig4, complete_property, 'synth', 2, 5, (0.5, 0.5), seed=4, region=interval)
        assert len(run.strategies) == 2
        assert all(set(strategy) == set(fig4.states) for strategy in run.strategies)

    def test_confidence_falls_outside_the_feasible_set(self, fig4, complete_property, interval):
        run = harness_service.run_verification(
            fig4, complete_property, 'none', 40, 20, (0.2, 0.2), seed=5, region=interval)
        assert run.confidence.value < 0.2

    def test_audit_log_is_written(self, fig4, complete_property, interval, tmp_path):
        path = str(tmp_path / 'audit.jsonl')
        harness_service.run_verification(
            fig4, complete_property, 'random-static', 3, 4, (0.5, 0.5), seed=6, region=interval,
            audit_path=path)
        records = io_utils.read_jsonl(path)
        assert len(records) == 3
        assert {'batch', 'confidence', 'strategy', 'steps'} <= set(records[0])

    def test_unknown_mode(self, fig4, complete_property, interval):
        with pytest.raises(HarnessError):
            harness_service.run_verification(fig4, complete_property, 'greedy', 1, 5, (0.5, 0.5),
                                             region=interval)


class TestEvaluation:
    """Experiment specs, grids and their output files"""

    def test_load_experiment_spec(self, tmp_path):
        spec = harness_service.load_experiment_spec(
            write_spec(tmp_path, grid={'start': 0.15, 'stop': 0.75, 'step': 0.05}))
        assert spec.grid[0] == 0.15 and spec.grid[-1] == 0.75
        assert len(spec.grid) == 13
        assert spec.configurations == ((2, 3),)
        assert spec.model_path == data_path('fig4.json')

    def test_relative_model_path(self):
        spec = harness_service.load_experiment_spec(data_path('fig4_experiment.json'))
        assert os.path.samefile(spec.model_path, data_path('fig4.json'))
        assert spec.trials == 100

    def test_schema_violation(self, tmp_path):
        with pytest.raises(HarnessError, match='modes'):
            harness_service.load_experiment_spec(write_spec(tmp_path, modes=['greedy']))

    def test_sweep_parameter_must_be_the_only_free_one(self, tmp_path):
        spec = harness_service.load_experiment_spec(write_spec(tmp_path, tie={}, tolerance=1 / 16))
        with pytest.raises(HarnessError, match='sweep parameter'):
            harness_service.evaluate_grid(spec, threads=1)

    def test_small_grid(self, tmp_path):
        spec = harness_service.load_experiment_spec(write_spec(tmp_path))
        out = tmp_path / 'out'
        result = harness_service.evaluate_grid(spec, threads=1, out_dir=str(out))
        assert result.failures == []
        assert result.ground_truth == {0.2: 0, 0.5: 1}
        assert len(result.outcomes) == 4
        assert all(len(outcomes) == 2 for outcomes in result.outcomes.values())
        for cell, outcomes in result.outcomes.items():
            assert result.mse[cell] == pytest.approx(harness_service.mse(result.ground_truth[cell[0]], outcomes))
            assert all(len(series) == 3 for series in result.series[cell])

        reread = harness_service.read_results(str(out))
        assert reread.outcomes == result.outcomes
        assert reread.series == result.series

        reread.boundary = result.boundary
        written = harness_service.emit_plots(reread, str(out))
        names = {os.path.basename(p) for p in written}
        assert {'mse_t02_l03.csv', 'mse_t02_l03.gp',
                'convergence_none_t02_l03.csv', 'convergence_random-static_t02_l03.gp'} <= names

    def test_nothing_to_plot(self, tmp_path):
        with pytest.raises(HarnessError):
            harness_service.emit_plots(harness_service.EvalResult(), str(tmp_path))


class TestStudies:
    """Study defaults and the shipped study specs"""

    def test_accuracy_is_the_default_study(self, tmp_path):
        document = {'model': data_path('fig4.json'), 'property': COMPLETE_PROPERTY}
        path = tmp_path / 'minimal.json'
        path.write_text(json.dumps(document), encoding='utf-8')
        spec = harness_service.load_experiment_spec(str(path))
        assert spec.study == 'accuracy'
        assert spec.configurations == ((10, 2), (10, 10))
        assert len(spec.grid) == 13

    def test_robustness_study(self):
        spec = harness_service.load_experiment_spec(data_path('fig4_robustness.json'))
        assert spec.study == 'robustness'
        assert spec.grid == (0.2, 0.4, 0.6, 0.7)
        assert (2, 20) in spec.configurations and (100, 10) in spec.configurations
        assert len(spec.configurations) == 7

    def test_convergence_study(self):
        spec = harness_service.load_experiment_spec(data_path('fig4_convergence.json'))
        assert spec.grid == (0.7,)
        assert spec.configurations == ((20, 10),)
        assert spec.modes == ('synth', 'none')
        assert spec.trials == 50

    def test_explicit_fields_override_the_study(self, tmp_path):
        spec = harness_service.load_experiment_spec(write_spec(tmp_path, study='convergence'))
        assert spec.grid == (0.2, 0.5)
        assert spec.trials == 2

    def test_unknown_study(self, tmp_path):
        with pytest.raises(HarnessError, match='study'):
            harness_service.load_experiment_spec(write_spec(tmp_path, study='ablation'))
        with pytest.raises(HarnessError):
            harness_service.study_defaults('ablation')


class TestStudyOutcomes:
    """Scaled accuracy and convergence runs"""

    @pytest.mark.slow
    def test_designed_traces_lower_the_mse(self, tmp_path):
        grid = [0.15, 0.2, 0.6, 0.65, 0.7]
        spec = harness_service.load_experiment_spec(write_spec(
            tmp_path, grid=grid, configurations=[[10, 10]], modes=['synth', 'none'],
            trials=100, tolerance=1 / 256))
        result = harness_service.evaluate_grid(spec)
        assert result.failures == []
        ordered = [result.mse[(value, 'synth', 10, 10)] <= result.mse[(value, 'none', 10, 10)]
                   for value in grid]
        assert sum(ordered) >= 4

    @pytest.mark.slow
    def test_designed_traces_converge(self):
        spec = harness_service.load_experiment_spec(data_path('fig4_convergence.json'))
        result = harness_service.evaluate_grid(spec)
        assert result.failures == []
        synth = harness_service.quartiles(result.outcomes[(0.7, 'synth', 20, 10)])
        none = harness_service.quartiles(result.outcomes[(0.7, 'none', 20, 10)])
        assert synth['median'] >= 0.9
        assert synth['q3'] - synth['q1'] <= none['q3'] - none['q1']
