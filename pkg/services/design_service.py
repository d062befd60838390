"""
Design service - choosing the strategy that collects the most useful data
Predicted confidence from expected counts, strategy enumeration, offline DP and baselines
"""
import itertools
import logging
import math
from functools import lru_cache

import numpy as np

from config.settings import DESIGN
from models.results import DpResult, GainReport, PredictedCounts, Strategy, StrategyScore
from services import confidence_service, inference_service, model_service, transform_service
from services.model_service import ParameterRangeError
from services.transform_service import TransformError
from utils.rng_utils import STREAM_BASELINE, make_rng

logger = logging.getLogger(__name__)


class DesignError(Exception):
    """Custom exception for experiment design errors"""
    pass


class EnumerationCapError(DesignError):
    """Exception for strategy spaces larger than the enumeration cap"""
    pass


def expected_param_values(posterior):
    """
    Posterior means E[theta_i] = mu1 / (mu1 + mu2)

    Returns:
        dict: parameter name -> mean
    """
    return {name: float(m) for name, m in zip(posterior.names, posterior.mean())}


def expected_point(model, posterior):
    """
    Expected-value parameter point, clipped into the propagated valid box

    Raises:
        DesignError: If the posterior does not cover the model parameters
        ParameterRangeError: If the clipped point still yields invalid probabilities
    """
    means = expected_param_values(posterior)
    missing = [n for n in model.param_names if n not in means]
    if missing:
        raise DesignError(f'posterior lacks parameters {missing}')
    theta = tuple(means[n] for n in model.param_names)
    space = model_service.param_space(model)
    projected = space.project(theta)
    if projected is None or not space.is_valid(projected):
        raise ParameterRangeError(
            f'expected parameter point {dict(zip(model.param_names, theta))} is not valid')
    if projected != theta:
        logger.debug(f'Clipped expected point {theta} to {projected}')
    return projected


@lru_cache(maxsize=16)
def expansion_of(model):
    """Expansion used to route expected counts, None when it adds nothing"""
    try:
        expanded = transform_service.expand(model)
    except TransformError as e:
        logger.warning(f'Expected counts use the original model: {e}')
        return None
    return expanded if expanded.fresh_states else None


def _param_counts(model, edge_counts, theta, expanded, names):
    """Expected parameter counts, apportioned along lineage by expected route probabilities"""
    if expanded is None:
        return inference_service.parameter_counts(model, edge_counts, params=names)
    routed = {}
    for edge, count in edge_counts.items():
        routes = expanded.lineage[edge]
        weights = [expanded.route_probability(r, theta) for r in routes]
        total = sum(weights)
        if total <= 0:
            continue
        for route, weight in zip(routes, weights):
            for step in route:
                routed[step] = routed.get(step, 0.0) + count * weight / total
    return inference_service.parameter_counts(expanded.model, routed, params=names)


def _action_of(model, strategy, state):
    try:
        action = strategy[state]
    except KeyError:
        raise DesignError(f'strategy has no action for state {state}')
    if (state, action) not in model.rows:
        raise DesignError(f'strategy picks {action} at {state}, which is not enabled')
    return action


def expected_trace_counts(model, strategy, posterior, length, expanded=None):
    """
    Expected edge and parameter counts of one trace under a strategy

    The initial distribution is pushed through the chain induced by the
    strategy at the expected parameter point; each step adds p_t(s) * T(s, a, s')
    to its edge.

    Args:
        model (Pmdp): original model
        strategy (Strategy): memoryless strategy over the model states
        posterior (DirichletPosterior): current posterior
        length (int): trace length N
        expanded (ExpandedModel): expansion for lineage routing; derived when None

    Returns:
        PredictedCounts: real-valued edge counts, parameter counts, per-step totals

    Raises:
        DesignError: If length < 1 or the strategy is not total on reachable states
    """
    if length < 1:
        raise DesignError(f'trace length must be at least 1, got {length}')
    expanded = expansion_of(model) if expanded is None else expanded
    theta = expected_point(model, posterior)
    rows = model_service.evaluate_rows(model, theta)
    index = model.state_index

    dist = np.zeros(len(model.states))
    for state, p in model.initial:
        dist[index[state]] += float(p)

    edge_counts = {}
    totals = []
    for _ in range(length):
        following = np.zeros_like(dist)
        for i in np.flatnonzero(dist):
            state = model.states[i]
            action = _action_of(model, strategy, state)
            for target, p in rows[(state, action)]:
                mass = dist[i] * p
                if mass == 0:
                    continue
                key = (state, action, target)
                edge_counts[key] = edge_counts.get(key, 0.0) + mass
                following[index[target]] += mass
        totals.append(float(following.sum()))
        dist = following

    return PredictedCounts(
        length=length,
        edge_counts=edge_counts,
        param_counts=_param_counts(model, edge_counts, theta, expanded, posterior.names),
        step_totals=tuple(totals)
    )


def single_step_counts(model, state, action, posterior, expanded=None):
    """Expected counts E_{s,a}[D] of one transition taken from state with action"""
    model_service.enabled_actions(model, state)
    if (state, action) not in model.rows:
        raise DesignError(f'action {action} not enabled at {state}')
    expanded = expansion_of(model) if expanded is None else expanded
    theta = expected_point(model, posterior)
    row = model_service.evaluate_rows(model, theta)[(state, action)]
    edge_counts = {(state, action, target): p for target, p in row if p > 0}
    return PredictedCounts(
        length=1,
        edge_counts=edge_counts,
        param_counts=_param_counts(model, edge_counts, theta, expanded, posterior.names),
        step_totals=(float(sum(edge_counts.values())),)
    )


def _confidence(region, posterior, samples, seed, method):
    method = DESIGN['prediction_method'] if method is None else method
    samples = DESIGN['prediction_samples'] if samples is None else samples
    return confidence_service.confidence(region, posterior, samples=samples, seed=seed, method=method)


def predicted_confidence(region, posterior, predicted, samples=None, seed=None, method=None):
    """
    Confidence after updating the posterior with expected counts

    Args:
        region (FeasibleRegionMap): feasible set
        posterior (DirichletPosterior): current posterior
        predicted (PredictedCounts): expected counts
        samples (int): Monte-Carlo samples for method 'monte-carlo'
        seed (int): seed; equal seeds give common random numbers across strategies
        method (str): 'exact' or 'monte-carlo', DESIGN['prediction_method'] when None

    Returns:
        ConfidenceEstimate: predicted confidence C-hat
    """
    for name, (hit, miss) in predicted.param_counts.items():
        if hit < 0 or miss < 0:
            raise DesignError(f'negative predicted counts for {name}: ({hit}, {miss})')
    updated = inference_service.update_posterior(posterior, predicted)
    return _confidence(region, updated, samples, seed, method)


def strategy_count(model):
    return math.prod(len(model.enabled[s]) for s in model.states)


def enumerate_strategies(model, cap=None):
    """
    All deterministic memoryless strategies, lexicographic in (state index, action index)

    Raises:
        EnumerationCapError: If the strategy count exceeds the cap
    """
    cap = DESIGN['enumeration_cap'] if cap is None else cap
    total = strategy_count(model)
    if total > cap:
        raise EnumerationCapError(
            f'{total} strategies exceed the enumeration cap {cap}; use the offline DP mode')
    states = model.states
    return (Strategy(tuple(zip(states, combo)))
            for combo in itertools.product(*(model.enabled[s] for s in states)))


def synthesise_strategy(model, region, posterior, length, samples=None, seed=None,
                        method=None, expanded=None):
    """
    Strategy maximising the predicted confidence gain over a full trace

    Gains G = |0.5 - C-hat| - |0.5 - C| are compared with one seed for every
    strategy. Gains within the tie tolerance of the best are ties; the
    lexicographically first tied strategy wins and the ties are recorded.

    Returns:
        GainReport: chosen strategy, its predicted confidence and gain, all scores

    Raises:
        EnumerationCapError: If the strategy space is too large to enumerate
    """
    strategies = list(enumerate_strategies(model))
    current = _confidence(region, posterior, samples, seed, method).value
    scores = []
    for strategy in strategies:
        predicted = expected_trace_counts(model, strategy, posterior, length, expanded)
        c_hat = predicted_confidence(region, posterior, predicted, samples, seed, method).value
        scores.append(StrategyScore(strategy, c_hat, GainReport.gain_of(c_hat, current)))

    best = max(score.gain for score in scores)
    tied = [score for score in scores if best - score.gain <= DESIGN['tie_tolerance']]
    chosen = tied[0]
    if len(tied) > 1:
        logger.info(f'{len(tied)} strategies tie at gain {best:.6g}, choosing {chosen.strategy}')
    logger.debug(f'Designed strategy {chosen.strategy} with gain {chosen.gain:.6g} '
                 f'over {len(scores)} candidates')
    return GainReport(
        strategy=chosen.strategy,
        predicted=chosen.predicted,
        current=current,
        gain=chosen.gain,
        scores=tuple(scores),
        ties=tuple(score.strategy for score in tied) if len(tied) > 1 else ()
    )


def offline_dp_strategy(model, region, posterior, discount=None, samples=None, seed=None,
                        method=None, expanded=None):
    """
    Greedy strategy of discounted value iteration over static one-step gains

    Each (s, a) earns the gain of its single-transition predicted confidence.
    Values ignore how earlier data change later gains.

    Returns:
        DpResult: strategy, rewards, Q-values and per-state value ties

    Raises:
        DesignError: If the discount is outside (0, 1) or value iteration does not converge
    """
    discount = DESIGN['discount'] if discount is None else discount
    if not 0 < discount < 1:
        raise DesignError(f'discount must lie in (0, 1), got {discount}')
    expanded = expansion_of(model) if expanded is None else expanded
    current = _confidence(region, posterior, samples, seed, method).value
    theta = expected_point(model, posterior)
    rows = model_service.evaluate_rows(model, theta)
    index = model.state_index

    rewards = {}
    for state in model.states:
        for action in model.enabled[state]:
            predicted = single_step_counts(model, state, action, posterior, expanded)
            c_hat = predicted_confidence(region, posterior, predicted, samples, seed, method).value
            rewards[(state, action)] = GainReport.gain_of(c_hat, current)

    def q_table(values):
        return {
            (s, a): rewards[(s, a)] + discount * sum(p * values[index[t]] for t, p in rows[(s, a)])
            for s, a in rewards
        }

    values = np.zeros(len(model.states))
    for iteration in range(1, DESIGN['dp_max_iterations'] + 1):
        q = q_table(values)
        updated = np.array([max(q[(s, a)] for a in model.enabled[s]) for s in model.states])
        delta = float(np.max(np.abs(updated - values))) if len(values) else 0.0
        values = updated
        if delta < DESIGN['dp_tolerance']:
            break
    else:
        raise DesignError(f'offline value iteration did not converge in {DESIGN["dp_max_iterations"]} sweeps')

    q = q_table(values)
    choices, ties = [], {}
    for state in model.states:
        best = max(q[(state, a)] for a in model.enabled[state])
        tied = tuple(a for a in model.enabled[state] if best - q[(state, a)] <= DESIGN['tie_tolerance'])
        choices.append((state, tied[0]))
        if len(tied) > 1:
            ties[state] = tied
    if ties:
        logger.info(f'Offline DP value ties: {ties}')
    return DpResult(strategy=Strategy(tuple(choices)), rewards=rewards, q_values=q,
                    ties=ties, iterations=iteration)


def reference_gain_recursion(model, region, posterior, length, samples=None, seed=None,
                             method=None, expanded=None):
    """
    Exhaustive memory-dependent gain for very short traces

    Recurses over every realised transition, updating the posterior after each
    one and maximising the expected final |0.5 - C| over the action at every
    history. Exponential in the trace length; a check for the full-trace
    approximation only.

    Returns:
        tuple: (expected gain, {initial state: best first action})
    """
    if not 1 <= length <= DESIGN['reference_max_horizon']:
        raise DesignError(
            f'reference recursion supports lengths 1..{DESIGN["reference_max_horizon"]}, got {length}')
    expanded = expansion_of(model) if expanded is None else expanded
    current = _confidence(region, posterior, samples, seed, method).value

    def value(state, post, remaining):
        if remaining == 0:
            return abs(0.5 - _confidence(region, post, samples, seed, method).value), None
        theta = expected_point(model, post)
        rows = model_service.evaluate_rows(model, theta)
        best, best_action = -math.inf, None
        for action in model.enabled[state]:
            total = 0.0
            for target, p in rows[(state, action)]:
                if p <= 0:
                    continue
                edge = {(state, action, target): 1.0}
                counts = _param_counts(model, edge, theta, expanded, post.names)
                updated = inference_service.update_posterior(post, counts)
                total += p * value(target, updated, remaining - 1)[0]
            if total > best:
                best, best_action = total, action
        return best, best_action

    expected, first = 0.0, {}
    for state, weight in model.initial:
        v, action = value(state, posterior, length)
        expected += float(weight) * v
        first[state] = action
    return expected - abs(0.5 - current), first


class ActionSource:
    """Per-episode action choice; episode(*keys) returns a state -> action function"""

    def episode(self, *keys):
        raise NotImplementedError


class StrategySource(ActionSource):

    def __init__(self, strategy):
        self.strategy = strategy

    def episode(self, *keys):
        return self.strategy.__getitem__


class RandomStaticSource(ActionSource):
    """
    One strategy per episode, uniform over all memoryless strategies

    Drawing each state's action independently and uniformly is uniform over
    the product set, so no enumeration is needed.
    """

    def __init__(self, model, seed=None):
        self.model = model
        self.seed = seed

    def strategy_for(self, *keys):
        rng = make_rng(self.seed, STREAM_BASELINE, *keys)
        return Strategy(tuple(
            (s, self.model.enabled[s][int(rng.integers(len(self.model.enabled[s])))])
            for s in self.model.states
        ))

    def episode(self, *keys):
        return self.strategy_for(*keys).__getitem__


class NoStrategySource(ActionSource):
    """Uniformly random enabled action at every visited state"""

    def __init__(self, model, seed=None):
        self.model = model
        self.seed = seed

    def episode(self, *keys):
        rng = make_rng(self.seed, STREAM_BASELINE, *keys)
        enabled = self.model.enabled

        def choose(state):
            actions = enabled[state]
            return actions[int(rng.integers(len(actions)))]
        return choose


BASELINES = {
    'random-static': RandomStaticSource,
    'none': NoStrategySource,
    'no-strategy': NoStrategySource
}


def baseline_strategies(model, kind, seed=None):
    """
    Baseline action source

    Args:
        kind (str): 'random-static' (one strategy per episode) or 'none' / 'no-strategy'
            (fresh random action per visited state)

    Raises:
        DesignError: For an unknown kind
    """
    if kind not in BASELINES:
        raise DesignError(f'unknown baseline {kind}; expected one of {sorted(BASELINES)}')
    return BASELINES[kind](model, seed)


def as_action_source(model, source, seed=None):
    """Wrap a Strategy or a baseline name as an ActionSource"""
    if isinstance(source, ActionSource):
        return source
    if isinstance(source, Strategy):
        return StrategySource(source)
    return baseline_strategies(model, source, seed)
