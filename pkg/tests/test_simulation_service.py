from collections import Counter

import pytest
from scipy.stats import chisquare

from models.data import SimConfig
from models.results import Strategy
from services import simulation_service
from services.model_service import ParameterRangeError
from services.simulation_service import SimulationError


def fig4_strategy(first):
    return Strategy.of({'S0': first, 'S1': 'a', 'S2': 'a', 'S3': 'a', 'S4': 'a'},
                       ('S0', 'S1', 'S2', 'S3', 'S4'))


class TestSimulateTraces:
    """Seeded traces at the true parameters"""

    def test_every_trace_has_the_requested_length(self, fig4):
        cfg = SimConfig(theta=(0.5, 0.5), length=7, traces=20, seed=1)
        traces = simulation_service.simulate_traces(fig4, cfg)
        assert len(traces) == 20
        assert all(len(trace) == 7 for trace in traces.traces)
        assert traces.total_steps == 140

    def test_steps_chain_from_the_initial_state(self, fig4):
        cfg = SimConfig(theta=(0.5, 0.5), length=12, traces=10, seed=2)
        for trace in simulation_service.simulate_traces(fig4, cfg).traces:
            assert trace[0][0] == 'S0'
            for before, after in zip(trace, trace[1:]):
                assert before[2] == after[0]

    def test_same_seed_same_traces(self, fig4):
        cfg = SimConfig(theta=(0.4, 0.3), length=10, traces=5, seed=3, action_source='random-static')
        assert simulation_service.simulate_traces(fig4, cfg) == simulation_service.simulate_traces(fig4, cfg)

    def test_keys_change_the_streams(self, fig4):
        first = simulation_service.simulate_traces(fig4, SimConfig((0.4, 0.3), 10, 5, seed=3, keys=(0,)))
        second = simulation_service.simulate_traces(fig4, SimConfig((0.4, 0.3), 10, 5, seed=3, keys=(1,)))
        assert first != second

    def test_deterministic_strategy_is_followed(self, fig4):
        cfg = SimConfig(theta=(0.5, 0.5), length=6, traces=3, seed=4, action_source=fig4_strategy('c'))
        for trace in simulation_service.simulate_traces(fig4, cfg).traces:
            assert trace == (('S0', 'c', 'S2'), ('S2', 'a', 'S0')) * 3

    def test_transition_frequencies_follow_theta(self, fig4):
        cfg = SimConfig(theta=(0.6, 0.5), length=1, traces=20000, seed=5, action_source=fig4_strategy('b'))
        targets = Counter(trace[0][2] for trace in simulation_service.simulate_traces(fig4, cfg).traces)
        assert targets['S2'] / 20000 == pytest.approx(0.6, abs=0.015)
        assert targets['S0'] / 20000 == pytest.approx(0.25, abs=0.015)
        assert targets['S3'] / 20000 == pytest.approx(0.15, abs=0.015)
        observed = [targets['S2'], targets['S0'], targets['S3']]
        assert chisquare(observed, [12000, 5000, 3000]).pvalue > 1e-3

    def test_invalid_true_parameters(self, fig4):
        with pytest.raises(ParameterRangeError):
            simulation_service.simulate_traces(fig4, SimConfig(theta=(0.9, 0.5), length=5, traces=1, seed=1))

    def test_length_must_be_positive(self, fig4):
        with pytest.raises(SimulationError):
            simulation_service.simulate_traces(fig4, SimConfig(theta=(0.5, 0.5), length=0, traces=1, seed=1))

    def test_disabled_strategy_action(self, fig4):
        bad = Strategy.of({'S0': 'c', 'S1': 'a', 'S2': 'b', 'S3': 'a', 'S4': 'a'}, ('S0', 'S1', 'S2', 'S3', 'S4'))
        one_step = SimConfig(theta=(0.5, 0.5), length=1, traces=1, seed=1, action_source=bad)
        assert len(simulation_service.simulate_traces(fig4, one_step)) == 1
        cfg = SimConfig(theta=(0.5, 0.5), length=2, traces=1, seed=1, action_source=bad)
        with pytest.raises(SimulationError, match='not enabled'):
            simulation_service.simulate_traces(fig4, cfg)

    def test_save_and_load(self, fig4, tmp_path):
        traces = simulation_service.simulate_traces(fig4, SimConfig((0.5, 0.5), 4, 3, seed=6))
        path = str(tmp_path / 'traces.jsonl')
        simulation_service.save_traces(traces, path)
        assert simulation_service.load_traces(path) == traces
