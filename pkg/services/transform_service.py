"""
Transform service - expansion of linearly parameterised models
Transition splitting and state splitting with lineage from original to expanded edges
"""
import itertools
import logging
from fractions import Fraction

from config.settings import AUX_ACTION, AUX_LABEL, EQUIVALENCE_TOLERANCE
from models.pctl import Until
from models.pmdp import AffineExpr, ExpandedModel, Pmdp, Transition
from services import model_service, pctl_service
from utils import io_utils
from utils.response_utils import edge_key

logger = logging.getLogger(__name__)


class TransformError(Exception):
    """Custom exception for rows that admit no expansion"""
    pass


def passthrough_name(source, action, target, index):
    return f'__n.{source}.{action}.{target}.{index}'


def switch_name(source, action, target, index):
    return f'__w.{source}.{action}.{target}.{index}'


def _is_direct(expr):
    return expr.constant >= 0 and all(k > 0 for _, k in expr.terms)


def _single_terms(expr):
    """Split a direct expression into single-term expressions (constant first)"""
    parts = []
    if expr.constant != 0:
        parts.append(AffineExpr.const(expr.constant))
    parts.extend(AffineExpr.param(i, k) for i, k in expr.terms)
    return parts


def _with_fresh_states(model, transitions, fresh):
    """Append fresh states labelled as expansion helpers"""
    return Pmdp(
        parameters=model.parameters,
        states=model.states + tuple(fresh),
        labels=model.labels + tuple(frozenset({AUX_LABEL}) for _ in fresh),
        initial=model.initial,
        transitions=tuple(transitions),
        prior=model.prior
    )


def _split_transitions(model):
    transitions = []
    fresh = []
    routes = {}
    for t in model.transitions:
        key = (t.source, t.action, t.target)
        parts = _single_terms(t.probability)
        if not _is_direct(t.probability) or len(parts) < 2:
            transitions.append(t)
            routes[key] = ((key,),)
            continue
        key_routes = []
        for index, part in enumerate(parts):
            node = passthrough_name(t.source, t.action, t.target, index)
            fresh.append(node)
            transitions.append(Transition(t.source, t.action, node, part))
            transitions.append(Transition(node, AUX_ACTION, t.target, AffineExpr.const(1)))
            key_routes.append(((t.source, t.action, node), (node, AUX_ACTION, t.target)))
        routes[key] = tuple(key_routes)
        logger.debug(f'Split {t.source} -{t.action}-> {t.target} into {len(parts)} transitions')
    return _with_fresh_states(model, transitions, fresh), routes


def split_transitions(model):
    """
    Route every multi-term direct transition through one fresh state per term

    Args:
        model (Pmdp): linearly parameterised model

    Returns:
        Pmdp: model whose direct transitions are single-term
    """
    expanded, _ = _split_transitions(model)
    return expanded


def _row_plan(model, state, action, row):
    """
    Classify a row: 'elementary', 'split' or 'tied'

    Returns:
        tuple: (kind, direct edges, complement edge or None)
    """
    live = [(target, expr) for target, expr in row if expr != AffineExpr.const(0)]
    if all(expr.is_elementary() for _, expr in live):
        return 'elementary', live, None
    if any(_is_direct(e) and len(_single_terms(e)) > 1 for _, e in live):
        raise TransformError(f'row {state}/{action} has multi-term transitions; split transitions first')
    direct = [(t, e) for t, e in live if _is_direct(e) and len(_single_terms(e)) == 1]
    others = [(t, e) for t, e in live if (t, e) not in direct]
    scaled = [(t, e) for t, e in direct if not e.is_constant and e.terms[0][1] < 1]
    mass = sum((e.constant + sum(k for _, k in e.terms) for _, e in direct), Fraction(0))
    if scaled and len(others) == 1 and not any(e.literal_param() is not None for _, e in direct) \
            and mass <= 1:
        return 'split', direct, others[0]
    if scaled:
        raise TransformError(
            f'row {state}/{action} has scaled parameter terms but no exact expansion '
            f'(direct mass {mass}, {len(others)} complement edges)')
    return 'tied', live, None


def split_states(model, base_lineage=None, original=None):
    """
    Route every scaled k*theta_j edge through a fresh switch state

    The source reaches the switch with constant probability k; the switch
    branches theta_j to the edge's target and 1 - theta_j to the row's
    complement target; the remaining constant mass goes straight to the
    complement target. Rows that mix literal parameters with constants beyond
    this shape are kept as tied rows.

    Args:
        model (Pmdp): model whose direct transitions are single-term
        base_lineage (dict): routes from an earlier expansion step, identity when None
        original (Pmdp): the model base_lineage starts from

    Returns:
        ExpandedModel: expanded model with composed lineage

    Raises:
        TransformError: If a row has scaled terms but cannot be split exactly
    """
    original = original or model
    transitions = []
    fresh = []
    tied = []
    step = {}
    for (state, action), row in model.rows.items():
        for target, expr in row:
            if expr == AffineExpr.const(0):
                logger.warning(f'Dropping zero-probability transition {state} -{action}-> {target}')
                step[(state, action, target)] = ()
        kind, edges, complement = _row_plan(model, state, action, row)
        if kind != 'split':
            if kind == 'tied':
                tied.append((state, action))
            for target, expr in edges:
                transitions.append(Transition(state, action, target, expr))
                step[(state, action, target)] = (((state, action, target),),)
            continue

        complement_target = complement[0]
        complement_routes = []
        remainder = Fraction(1)
        for target, expr in edges:
            key = (state, action, target)
            if expr.is_constant:
                remainder -= expr.constant
                transitions.append(Transition(state, action, target, expr))
                step[key] = ((key,),)
                continue
            index, k = expr.terms[0]
            remainder -= k
            node = switch_name(state, action, target, 0)
            fresh.append(node)
            transitions.append(Transition(state, action, node, AffineExpr.const(k)))
            transitions.append(Transition(node, AUX_ACTION, target, AffineExpr.param(index)))
            transitions.append(Transition(node, AUX_ACTION, complement_target,
                                          AffineExpr.const(1) - AffineExpr.param(index)))
            step[key] = (((state, action, node), (node, AUX_ACTION, target)),)
            complement_routes.append(((state, action, node), (node, AUX_ACTION, complement_target)))
        if remainder > 0:
            transitions.append(Transition(state, action, complement_target, AffineExpr.const(remainder)))
            complement_routes.insert(0, ((state, action, complement_target),))
        step[(state, action, complement_target)] = tuple(complement_routes)
        logger.debug(f'Split states of row {state}/{action}')

    # edges of aux rows added by split_transitions are elementary and kept
    expanded_model = _with_fresh_states(model, _ordered(model, transitions), fresh)

    if base_lineage is None:
        base_lineage = {(t.source, t.action, t.target): (((t.source, t.action, t.target),),)
                        for t in model.transitions}
    lineage = {}
    for key, routes in base_lineage.items():
        composed = []
        for route in routes:
            options = [step.get(edge, ((edge,),)) for edge in route]
            for combination in itertools.product(*options):
                composed.append(tuple(edge for part in combination for edge in part))
        lineage[key] = tuple(composed)

    all_fresh = tuple(s for s in expanded_model.states if s not in original.state_index)
    return ExpandedModel(
        model=expanded_model,
        original=original,
        fresh_states=all_fresh,
        lineage=lineage,
        tied_rows=tuple(tied)
    )


def _ordered(model, transitions):
    """Stable order: by source state declaration, then generation order"""
    index = {s: i for i, s in enumerate(model.states)}
    fresh_rank = len(index)
    ranked = sorted(enumerate(transitions),
                    key=lambda item: (index.get(item[1].source, fresh_rank), item[0]))
    return [t for _, t in ranked]


def expand(model):
    """
    Full expansion: split_states(split_transitions(model)) with composed lineage

    Returns:
        ExpandedModel
    """
    intermediate, routes = _split_transitions(model)
    expanded = split_states(intermediate, base_lineage=routes, original=model)
    logger.info(f'Expanded model: {len(expanded.fresh_states)} fresh states, '
                f'{len(expanded.tied_rows)} tied rows')
    return expanded


def is_normal_form(expanded):
    """Every expanded edge is const, theta_j or 1 - theta_j, except inside tied rows"""
    tied = set(expanded.tied_rows)
    return all(t.probability.is_elementary() or (t.source, t.action) in tied
               for t in expanded.model.transitions)


def lineage_expression(expanded, original_edge):
    """Sum over routes of the product of expanded-edge expressions"""
    total = AffineExpr.const(0)
    for route in expanded.lineage[original_edge]:
        product = AffineExpr.const(1)
        for edge in route:
            product = product * expanded.edge_expr[edge]
        total = total + product
    return total


def verify_equivalence(original, expanded, theta, prop, tolerance=EQUIVALENCE_TOLERANCE):
    """
    Compare min-until probabilities at the original initial states

    Args:
        original (Pmdp): model before expansion
        expanded (ExpandedModel): its expansion
        theta: parameter point valid for both
        prop (ProbabilisticFormula): until property

    Returns:
        bool: True if all initial-state values agree within tolerance
    """
    if not isinstance(prop.path, Until):
        raise TransformError('equivalence is defined for until properties')
    before = model_service.instantiate(original, theta)
    after = model_service.instantiate(expanded.model, theta)
    left, right = prop.path.left, prop.path.right
    values_before = pctl_service.min_until_probability(before, left, right).values
    values_after = pctl_service.min_until_probability(after, left, right).values
    for state, _ in original.initial:
        i, j = before.state_index[state], after.state_index[state]
        if abs(values_before[i] - values_after[j]) > tolerance:
            logger.info(f'Expansion differs at {state}: {values_before[i]} vs {values_after[j]}')
            return False
    return True


def expanded_document(expanded):
    return {
        'model': model_service.model_document(expanded.model),
        'fresh_states': list(expanded.fresh_states),
        'tied_rows': [list(r) for r in expanded.tied_rows],
        'lineage': {
            edge_key(edge): [[edge_key(e) for e in route] for route in routes]
            for edge, routes in expanded.lineage.items()
        }
    }


def save_expanded(expanded, path):
    io_utils.write_json(path, expanded_document(expanded))
    logger.info(f'Saved expanded model to {path}')
