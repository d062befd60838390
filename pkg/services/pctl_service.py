"""
PCTL service - property parsing and minimum-probability model checking of induced MDPs
Qualitative prob-0 preprocessing followed by Gauss-Seidel value iteration
"""
import logging

import numpy as np

from config.settings import AUX_LABEL, VALUE_ITERATION
from models.pctl import (
    Comparison,
    Next,
    ProbabilisticFormula,
    Until,
    holds_in,
    is_propositional,
)
from models.results import ReachResult, Strategy
from utils import pctl_parser

logger = logging.getLogger(__name__)


class PropertyError(Exception):
    """Custom exception for property-related errors"""
    pass


class PropertySyntaxError(PropertyError):
    """Exception for malformed property text"""

    def __init__(self, message, column=None):
        location = f' (column {column})' if column is not None else ''
        super().__init__(f'{message}{location}')
        self.column = column


class UnsupportedPropertyError(PropertyError):
    """Exception for formulas outside the non-nested fragment"""
    pass


class CheckerError(Exception):
    """Custom exception for model-checking errors"""
    pass


class ConvergenceError(CheckerError):
    """Exception for value iteration exceeding its iteration cap"""
    pass


def parse_property(text):
    """
    Parse a top-level probabilistic property

    Args:
        text (str): e.g. 'P>=0.5 [ true U "complete" ]'

    Returns:
        ProbabilisticFormula: property AST

    Raises:
        PropertySyntaxError: If the text does not match the grammar
        UnsupportedPropertyError: If a probabilistic operator is nested
    """
    try:
        formula = pctl_parser.parse(text)
    except pctl_parser.PropertySyntaxError as e:
        raise PropertySyntaxError(str(e), column=e.column)
    path = formula.path
    operands = (path.left, path.right) if isinstance(path, Until) else (path.operand,)
    for operand in operands:
        if not is_propositional(operand):
            raise UnsupportedPropertyError(
                'nested probabilistic operators are not supported')
    return formula


def satisfying_states(mdp, formula, role='right'):
    """
    Boolean vector of states satisfying a propositional formula

    States labelled as expansion helpers are transparent: they satisfy any
    left operand of an until and never a target formula.
    """
    if not is_propositional(formula):
        raise UnsupportedPropertyError(f'operand {formula} is not propositional')
    result = np.zeros(len(mdp.states), dtype=bool)
    for i, labels in enumerate(mdp.labels):
        if AUX_LABEL in labels:
            result[i] = role == 'left'
        else:
            result[i] = holds_in(formula, labels)
    return result


def prob0_min(mdp, left, right):
    """
    States whose minimum until-probability is zero

    Backward fixed point: R starts at the target states and gains every
    left-state all of whose actions reach R in one step with positive
    probability. The complement of R is returned.
    """
    reach = right.copy()
    changed = True
    while changed:
        changed = False
        for s in range(len(mdp.states)):
            if reach[s] or not left[s]:
                continue
            if all(any(p > 0 and reach[t] for t, p in zip(c.targets, c.probabilities))
                   for c in mdp.choices[s]):
                reach[s] = True
                changed = True
    return ~reach


def _witness(mdp, values):
    chosen = {}
    for s, state in enumerate(mdp.states):
        best_action, best_value = None, None
        for choice in mdp.choices[s]:
            value = sum(p * values[t] for t, p in zip(choice.targets, choice.probabilities))
            if best_value is None or value < best_value:
                best_action, best_value = choice.action, value
        chosen[state] = best_action
    return Strategy.of(chosen, mdp.states)


def min_until_probability(mdp, phi1, phi2, tolerance=None, max_iterations=None):
    """
    Minimum over memoryless strategies of P(s, phi1 U phi2) for every state

    Args:
        mdp (Mdp): induced MDP
        phi1, phi2: propositional state formulas

    Returns:
        ReachResult: values, arg-min witness strategy, sweep count, residual

    Raises:
        UnsupportedPropertyError: If an operand contains a probabilistic operator
        ConvergenceError: If the residual stays above tolerance after max_iterations sweeps
    """
    tolerance = VALUE_ITERATION['tolerance'] if tolerance is None else tolerance
    max_iterations = VALUE_ITERATION['max_iterations'] if max_iterations is None else max_iterations

    left = satisfying_states(mdp, phi1, role='left')
    right = satisfying_states(mdp, phi2, role='right')
    zero = prob0_min(mdp, left, right)

    values = np.where(right, 1.0, 0.0)
    pending = [s for s in range(len(mdp.states)) if not right[s] and not zero[s]]
    rows = {s: [(np.array(c.targets), np.array(c.probabilities)) for c in mdp.choices[s]]
            for s in pending}

    iterations = 0
    residual = 0.0
    while pending:
        iterations += 1
        residual = 0.0
        for s in pending:
            new = min(float(np.dot(probs, values[targets])) for targets, probs in rows[s])
            delta = abs(new - values[s])
            if delta > residual:
                residual = delta
            values[s] = new
        if residual < tolerance:
            break
        if iterations >= max_iterations:
            raise ConvergenceError(
                f'value iteration did not converge in {max_iterations} sweeps '
                f'(residual {residual:.3e})')

    logger.debug(f'Value iteration converged after {iterations} sweeps, residual {residual:.2e}')
    return ReachResult(
        values=tuple(float(v) for v in values),
        strategy=_witness(mdp, values),
        iterations=iterations,
        residual=residual,
        prob0=tuple(int(s) for s in np.flatnonzero(zero)),
        prob1=tuple(int(s) for s in np.flatnonzero(right))
    )


def min_next_probability(mdp, phi):
    """Minimum one-step probability of reaching phi from every state"""
    target = satisfying_states(mdp, phi, role='right').astype(float)
    values = np.zeros(len(mdp.states))
    for s in range(len(mdp.states)):
        values[s] = min(sum(p * target[t] for t, p in zip(c.targets, c.probabilities))
                        for c in mdp.choices[s])
    return ReachResult(
        values=tuple(float(v) for v in values),
        strategy=_witness(mdp, target),
        iterations=1,
        residual=0.0
    )


def path_probability(mdp, prop, **kwargs):
    """Min-probability vector of the property's path formula"""
    if isinstance(prop.path, Until):
        return min_until_probability(mdp, prop.path.left, prop.path.right, **kwargs)
    if isinstance(prop.path, Next):
        return min_next_probability(mdp, prop.path.operand)
    raise UnsupportedPropertyError(f'unsupported path formula {prop.path}')


def initial_values(mdp, result):
    return [result.values[s] for s in mdp.initial_states()]


def critical_value(mdp, prop, result):
    """
    The initial-state value that decides the property: the smallest for lower
    bounds (>=, >), the largest for upper bounds (<=, <)
    """
    values = initial_values(mdp, result)
    if prop.comparison in (Comparison.GE, Comparison.GT):
        return min(values)
    return max(values)


def satisfies(mdp, prop, **kwargs):
    """
    M |= P~p [ path ] iff every initial state's min-probability compares ~ p

    Args:
        mdp (Mdp): induced MDP
        prop (ProbabilisticFormula): top-level property

    Returns:
        bool: satisfaction verdict
    """
    if not isinstance(prop, ProbabilisticFormula):
        raise UnsupportedPropertyError('a top-level probabilistic operator is required')
    result = path_probability(mdp, prop, **kwargs)
    return all(prop.comparison.holds(v, prop.threshold) for v in initial_values(mdp, result))


def evaluate_strategy(mdp, strategy, phi1, phi2):
    """
    Until-probabilities of the Markov chain induced by a memoryless strategy

    Solved exactly as a linear system over the states that can still reach
    phi2 through phi1-states.

    Returns:
        numpy.ndarray: probability per state
    """
    n = len(mdp.states)
    left = satisfying_states(mdp, phi1, role='left')
    right = satisfying_states(mdp, phi2, role='right')
    matrix = np.zeros((n, n))
    for s, state in enumerate(mdp.states):
        choice = mdp.choice(s, strategy[state])
        for t, p in zip(choice.targets, choice.probabilities):
            matrix[s, t] += p

    # states that reach phi2 with positive probability along phi1-states
    reach = right.copy()
    changed = True
    while changed:
        changed = False
        for s in range(n):
            if not reach[s] and left[s] and np.any((matrix[s] > 0) & reach):
                reach[s] = True
                changed = True

    values = np.where(right, 1.0, 0.0)
    unknown = np.flatnonzero(reach & ~right)
    if len(unknown):
        sub = np.eye(len(unknown)) - matrix[np.ix_(unknown, unknown)]
        rhs = matrix[np.ix_(unknown, np.flatnonzero(right))].sum(axis=1)
        values[unknown] = np.linalg.solve(sub, rhs)
    return values


def check(mdp, prop):
    """
    Model-check an induced MDP and report the evidence

    Returns:
        dict: per-state min-probabilities, witness strategy, verdict and iteration data
    """
    result = path_probability(mdp, prop)
    verdict = all(prop.comparison.holds(v, prop.threshold) for v in initial_values(mdp, result))
    logger.info(f'Checked {prop}: verdict {verdict}')
    return {
        'property': str(prop),
        'values': dict(zip(mdp.states, result.values)),
        'strategy': result.strategy.as_dict(),
        'satisfied': verdict,
        'iterations': result.iterations,
        'residual': result.residual
    }
