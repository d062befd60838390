"""
Simulation service - seeded traces of the system under test
Plays the induced MDP at the true parameters under a strategy or a baseline action source
"""
import logging

import numpy as np

from models.data import TraceData
from services import design_service, inference_service, model_service
from utils.rng_utils import STREAM_SIMULATION, make_rng

logger = logging.getLogger(__name__)


class SimulationError(Exception):
    """Custom exception for simulation configuration errors"""
    pass


def _cumulative_rows(mdp):
    """Per (state index, action): (targets, cumulative probabilities) in row order"""
    table = {}
    for i, choices in enumerate(mdp.choices):
        for choice in choices:
            table[(i, choice.action)] = (choice.targets, np.cumsum(choice.probabilities))
    return table


def _draw(cumulative, u):
    """Inverse-CDF index; the last positive entry absorbs rounding at the top"""
    index = int(np.searchsorted(cumulative, u * cumulative[-1], side='right'))
    return min(index, len(cumulative) - 1)


def simulate_traces(model, cfg):
    """
    Generate traces from M(theta*)

    Every trace restarts from the initial distribution and has exactly
    cfg.length steps; absorbing self-loops are recorded like any other step.
    Trace i draws from its own stream (seed, simulation, *keys, i).

    Args:
        model (Pmdp): model of the system
        cfg (SimConfig): true parameters, length, count, seed, action source

    Returns:
        TraceData: cfg.traces traces of cfg.length steps

    Raises:
        SimulationError: If length or trace count is below 1
        ParameterRangeError: If theta* is not a valid parameter point
    """
    if cfg.length < 1 or cfg.traces < 1:
        raise SimulationError(f'length and traces must be at least 1, got {cfg.length} and {cfg.traces}')
    mdp = model_service.instantiate(model, cfg.theta)
    rows = _cumulative_rows(mdp)
    initial_states = np.array([s for s, _ in mdp.initial])
    initial_cdf = np.cumsum([p for _, p in mdp.initial])
    source = design_service.as_action_source(model, cfg.action_source, cfg.seed)

    traces = []
    for number in range(cfg.traces):
        rng = make_rng(cfg.seed, STREAM_SIMULATION, *cfg.keys, number)
        choose = source.episode(*cfg.keys, number)
        state = int(initial_states[_draw(initial_cdf, rng.random())])
        steps = []
        for _ in range(cfg.length):
            name = mdp.states[state]
            action = choose(name)
            if (state, action) not in rows:
                raise SimulationError(f'action {action} is not enabled at {name}')
            targets, cumulative = rows[(state, action)]
            following = targets[_draw(cumulative, rng.random())]
            steps.append((name, action, mdp.states[following]))
            state = following
        traces.append(tuple(steps))
    logger.debug(f'Simulated {cfg.traces} traces of length {cfg.length}')
    return TraceData(tuple(traces))


def save_traces(traces, path):
    inference_service.save_traces(traces, path)


def load_traces(path):
    return inference_service.load_traces(path)
