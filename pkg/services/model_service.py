"""
Model service - parsing, validation, printing and instantiation of pMDP model files
Implements the model file contract and the induced-MDP construction
"""
import json
import logging
from fractions import Fraction

import jsonschema

from config.settings import ROW_SUM_TOLERANCE
from models.pmdp import AffineExpr, Choice, Mdp, Parameter, ParamSpace, Pmdp, Transition
from utils import io_utils
from utils.expr_parser import ExpressionSyntaxError, parse_terms

logger = logging.getLogger(__name__)


class ModelError(Exception):
    """Custom exception for model-related errors"""
    pass


class ModelSyntaxError(ModelError):
    """Exception for malformed model text; carries line and column when known"""

    def __init__(self, message, line=None, column=None):
        location = f' (line {line}, column {column})' if line is not None else ''
        super().__init__(f'{message}{location}')
        self.line = line
        self.column = column


class ModelValidationError(ModelError):
    """Exception for a model that violates a structural invariant"""
    pass


class ParameterRangeError(ModelError):
    """Exception for parameter points outside the box or validity region"""
    pass


class UnknownStateError(ModelError):
    """Exception for references to undeclared states"""
    pass


RATIONAL = {'type': ['string', 'number']}

MODEL_SCHEMA = {
    'type': 'object',
    'required': ['parameters', 'states', 'initial', 'transitions'],
    'additionalProperties': False,
    'properties': {
        'parameters': {
            'type': 'array',
            'items': {
                'type': 'object',
                'required': ['name'],
                'additionalProperties': False,
                'properties': {
                    'name': {'type': 'string', 'pattern': '^[A-Za-z_][A-Za-z0-9_]*$'},
                    'bounds': {
                        'type': 'array',
                        'items': {'type': 'number', 'minimum': 0, 'maximum': 1},
                        'minItems': 2,
                        'maxItems': 2
                    }
                }
            }
        },
        'states': {
            'type': 'array',
            'minItems': 1,
            'items': {
                'type': 'object',
                'required': ['name'],
                'additionalProperties': False,
                'properties': {
                    'name': {'type': 'string', 'minLength': 1},
                    'labels': {'type': 'array', 'items': {'type': 'string'}}
                }
            }
        },
        'initial': {
            'type': 'object',
            'minProperties': 1,
            'additionalProperties': RATIONAL
        },
        'transitions': {
            'type': 'array',
            'items': {
                'type': 'object',
                'required': ['from', 'action', 'to', 'prob'],
                'additionalProperties': False,
                'properties': {
                    'from': {'type': 'string'},
                    'action': {'type': 'string', 'minLength': 1},
                    'to': {'type': 'string'},
                    'prob': RATIONAL
                }
            }
        },
        'prior': {
            'type': 'object',
            'additionalProperties': {
                'type': 'array',
                'items': {'type': 'number', 'exclusiveMinimum': 0},
                'minItems': 2,
                'maxItems': 2
            }
        }
    }
}


def _locate(text, needle, start=0):
    """1-based (line, column) of the first occurrence of needle at or after start"""
    offset = text.find(needle, start)
    if offset < 0:
        return None, None
    line = text.count('\n', 0, offset) + 1
    column = offset - (text.rfind('\n', 0, offset) + 1) + 1
    return line, column


def parse_expression(text, param_index, where='expression', source=None):
    """
    Parse an affine expression string into an AffineExpr over param_index

    Raises:
        ModelSyntaxError: for grammar violations
        ModelValidationError: for unknown parameter names
    """
    if isinstance(text, (int, float)):
        text = repr(text) if isinstance(text, float) else str(text)
    try:
        terms = parse_terms(text)
    except ExpressionSyntaxError as e:
        line = None
        column = e.column
        if source is not None:
            line, start = _locate(source, json.dumps(text))
            if line is not None and e.column is not None:
                column = start + e.column
        raise ModelSyntaxError(f'{where}: {e}', line=line, column=column)
    constant = Fraction(0)
    indexed = []
    for coefficient, name in terms:
        if name is None:
            constant += coefficient
        elif name not in param_index:
            raise ModelValidationError(f"{where}: unknown parameter '{name}'")
        else:
            indexed.append((param_index[name], coefficient))
    return AffineExpr.of(constant, indexed)


def parse_model(text):
    """
    Parse and validate a model file

    Args:
        text (str): UTF-8 JSON model text

    Returns:
        Pmdp: validated model

    Raises:
        ModelSyntaxError: If the JSON or an expression is malformed
        ModelValidationError: If a structural invariant is violated
        UnknownStateError: If a transition or initial entry names an undeclared state
    """
    try:
        document = json.loads(text)
    except json.JSONDecodeError as e:
        raise ModelSyntaxError(f'invalid JSON: {e.msg}', line=e.lineno, column=e.colno)

    try:
        jsonschema.validate(document, MODEL_SCHEMA)
    except jsonschema.ValidationError as e:
        path = '/'.join(str(p) for p in e.absolute_path) or '<root>'
        raise ModelValidationError(f'schema violation at {path}: {e.message}')

    return build_model(document, source=text)


def build_model(document, source=None):
    """Construct and validate a Pmdp from a decoded model document"""
    parameters = []
    for entry in document['parameters']:
        lo, hi = entry.get('bounds', [0.0, 1.0])
        if not lo < hi:
            raise ModelValidationError(f"parameter {entry['name']}: empty bounds [{lo}, {hi}]")
        parameters.append(Parameter(entry['name'], float(lo), float(hi)))
    names = [p.name for p in parameters]
    if len(set(names)) != len(names):
        raise ModelValidationError('duplicate parameter names')
    param_index = {name: i for i, name in enumerate(names)}

    states = [entry['name'] for entry in document['states']]
    if len(set(states)) != len(states):
        raise ModelValidationError('duplicate state names')
    labels = [frozenset(entry.get('labels', [])) for entry in document['states']]
    known = set(states)

    initial = []
    for state, value in document['initial'].items():
        if state not in known:
            raise UnknownStateError(f"initial distribution names unknown state '{state}'")
        probability = parse_expression(value, {}, where=f'initial[{state}]', source=source)
        if probability.constant < 0 or probability.constant > 1:
            raise ModelValidationError(f'initial probability of {state} outside [0, 1]')
        initial.append((state, probability.constant))
    if sum(p for _, p in initial) != 1:
        raise ModelValidationError('initial distribution does not sum to 1')
    order = {s: i for i, s in enumerate(states)}
    initial.sort(key=lambda item: order[item[0]])

    transitions = []
    seen = set()
    for number, entry in enumerate(document['transitions']):
        source_state, action, target = entry['from'], entry['action'], entry['to']
        for state in (source_state, target):
            if state not in known:
                raise UnknownStateError(f"transitions[{number}] names unknown state '{state}'")
        key = (source_state, action, target)
        if key in seen:
            raise ModelValidationError(f'duplicate transition {source_state} -{action}-> {target}')
        seen.add(key)
        probability = parse_expression(entry['prob'], param_index,
                                       where=f'transitions[{number}].prob', source=source)
        transitions.append(Transition(source_state, action, target, probability))

    prior = tuple(
        (name, (float(a), float(b)))
        for name, (a, b) in sorted(document.get('prior', {}).items(), key=lambda kv: param_index.get(kv[0], -1))
    )
    for name, _ in prior:
        if name not in param_index:
            raise ModelValidationError(f"prior names unknown parameter '{name}'")

    model = Pmdp(
        parameters=tuple(parameters),
        states=tuple(states),
        labels=tuple(labels),
        initial=tuple(initial),
        transitions=tuple(transitions),
        prior=prior
    )
    validate_model(model)
    logger.debug(f'Parsed model with {len(states)} states, {len(transitions)} transitions, '
                 f'{len(parameters)} parameters')
    return model


def validate_model(model):
    """
    Check the Pmdp invariants

    Raises:
        ModelValidationError: naming the violated invariant
    """
    for state in model.states:
        if not model.enabled[state]:
            raise ModelValidationError(f'state {state} has no enabled action')

    lower = [p.lower for p in model.parameters]
    upper = [p.upper for p in model.parameters]
    for (state, action), row in model.rows.items():
        total = AffineExpr.const(0)
        for target, expr in row:
            total = total + expr
            for _, coefficient in expr.terms:
                if not -1 <= coefficient <= 1:
                    raise ModelValidationError(
                        f'{state} -{action}-> {target}: coefficient {coefficient} outside [-1, 1]')
            low, high = expr.bounds(lower, upper)
            if high < 0 or low > 1:
                raise ModelValidationError(
                    f'{state} -{action}-> {target}: probability {expr.render(model.param_names)} '
                    f'lies outside [0, 1] everywhere in the parameter box')
        if total != AffineExpr.const(1):
            raise ModelValidationError(
                f'row {state}/{action} does not sum to 1 (sums to {total.render(model.param_names)})')


def load_model(path):
    """Read and parse a model file"""
    logger.info(f'Loading model from {path}')
    return parse_model(io_utils.read_text(path))


def model_document(model):
    """Decoded-JSON form of a model, the inverse of build_model"""
    names = model.param_names
    document = {
        'parameters': [
            {'name': p.name, 'bounds': [p.lower, p.upper]} for p in model.parameters
        ],
        'states': [
            {'name': s, 'labels': sorted(l)} for s, l in zip(model.states, model.labels)
        ],
        'initial': {s: _render_fraction(p) for s, p in model.initial},
        'transitions': [
            {'from': t.source, 'action': t.action, 'to': t.target,
             'prob': t.probability.render(names)}
            for t in model.transitions
        ]
    }
    if model.prior:
        document['prior'] = {name: [a, b] for name, (a, b) in model.prior}
    return document


def _render_fraction(value):
    return AffineExpr.const(value).render()


def print_model(model):
    """Render a model as model-file JSON text"""
    return json.dumps(model_document(model), indent=2) + '\n'


def param_space(model, tolerance=ROW_SUM_TOLERANCE):
    """Declared box plus validity constraints of every parametric expression"""
    constraints = tuple(e for e in model.expressions if not e.is_constant)
    return ParamSpace(
        names=model.param_names,
        lower=tuple(p.lower for p in model.parameters),
        upper=tuple(p.upper for p in model.parameters),
        constraints=constraints,
        tolerance=tolerance
    )


def point(model, theta):
    """
    Normalise theta to a tuple in parameter order

    Args:
        theta: sequence aligned with the parameters, or dict name -> value
    """
    if isinstance(theta, dict):
        missing = [n for n in model.param_names if n not in theta]
        if missing:
            raise ParameterRangeError(f'missing values for parameters {missing}')
        return tuple(float(theta[n]) for n in model.param_names)
    values = tuple(float(v) for v in theta)
    if len(values) != model.dimension:
        raise ParameterRangeError(
            f'expected {model.dimension} parameter values, got {len(values)}')
    return values


def enabled_actions(model, state):
    """
    Enabled actions of a state in action-index order

    Raises:
        UnknownStateError: If the state is not declared
    """
    if state not in model.state_index:
        raise UnknownStateError(f"unknown state '{state}'")
    return model.enabled[state]


def evaluate_rows(model, theta):
    """Row probabilities at theta without validation: (s, a) -> ((s', p), ...)"""
    theta = point(model, theta)
    return {
        key: tuple((target, expr.evaluate(theta)) for target, expr in row)
        for key, row in model.rows.items()
    }


def instantiate(model, theta, tolerance=ROW_SUM_TOLERANCE):
    """
    Build the induced MDP M(theta)

    Args:
        model (Pmdp): parametric model
        theta: parameter point (sequence or dict)

    Returns:
        Mdp: induced MDP

    Raises:
        ParameterRangeError: If theta lies outside the box or some probability leaves [0, 1]
    """
    theta = point(model, theta)
    for p, value in zip(model.parameters, theta):
        if value < p.lower - tolerance or value > p.upper + tolerance:
            raise ParameterRangeError(
                f'{p.name}={value} outside its bounds [{p.lower}, {p.upper}]')

    cache = {}
    for expr in model.expressions:
        value = expr.evaluate(theta)
        if value < -tolerance or value > 1 + tolerance:
            raise ParameterRangeError(
                f'probability {expr.render(model.param_names)} = {value} outside [0, 1] '
                f'at {dict(zip(model.param_names, theta))}')
        cache[expr] = min(1.0, max(0.0, value))

    index = model.state_index
    choices = []
    for state in model.states:
        per_state = []
        for action in model.enabled[state]:
            row = model.rows[(state, action)]
            per_state.append(Choice(
                action=action,
                targets=tuple(index[target] for target, _ in row),
                probabilities=tuple(cache[expr] for _, expr in row)
            ))
        choices.append(tuple(per_state))

    return Mdp(
        states=model.states,
        labels=model.labels,
        initial=tuple((index[s], float(p)) for s, p in model.initial),
        choices=tuple(choices)
    )


def tie_parameters(model, ties):
    """
    Substitute tied parameters by their sources

    Args:
        ties (dict): tied parameter name -> source parameter name

    Returns:
        Pmdp: model over the free parameters only; a source's bounds are
            intersected with the bounds of every parameter tied to it
    """
    if not ties:
        return model
    index = model.param_index
    for tied, source in ties.items():
        if tied not in index or source not in index:
            raise ModelValidationError(f'tie {tied}={source} names an unknown parameter')
        if source in ties:
            raise ModelValidationError(f'tie source {source} is itself tied')
        if tied == source:
            raise ModelValidationError(f'parameter {tied} tied to itself')

    free = [p for p in model.parameters if p.name not in ties]
    bounds = {p.name: [p.lower, p.upper] for p in free}
    for tied, source in ties.items():
        p = model.parameters[index[tied]]
        bounds[source][0] = max(bounds[source][0], p.lower)
        bounds[source][1] = min(bounds[source][1], p.upper)
        if bounds[source][0] >= bounds[source][1]:
            raise ModelValidationError(f'tie {tied}={source} leaves an empty parameter range')
    new_index = {p.name: i for i, p in enumerate(free)}
    mapping = {index[name]: new_index[ties.get(name, name)] for name in model.param_names}

    transitions = tuple(
        Transition(t.source, t.action, t.target, t.probability.substitute(mapping))
        for t in model.transitions
    )
    return Pmdp(
        parameters=tuple(Parameter(p.name, *bounds[p.name]) for p in free),
        states=model.states,
        labels=model.labels,
        initial=model.initial,
        transitions=transitions,
        prior=tuple((n, mu) for n, mu in model.prior if n in new_index)
    )


def untie_point(model, ties, free_values):
    """Full parameter point from values of the free parameters (dict or sequence)"""
    free_names = [n for n in model.param_names if n not in ties]
    if not isinstance(free_values, dict):
        free_values = dict(zip(free_names, free_values))
    return tuple(float(free_values[ties.get(n, n)]) for n in model.param_names)
