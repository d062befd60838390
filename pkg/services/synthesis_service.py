"""
Synthesis service - feasible parameter sets as hyper-rectangle maps
Adaptive bisection over the parameter box with sampled verdicts and a margin guard
"""
import logging

import numpy as np

from config.settings import SYNTHESIS
from models.region import FeasibleRegionMap, HyperRect, Verdict
from services import model_service, pctl_service
from services.model_service import ParameterRangeError
from utils import io_utils

logger = logging.getLogger(__name__)

MAX_BUDGET_REFINEMENTS = 4


class SynthesisError(Exception):
    """Custom exception for region synthesis errors"""
    pass


class InvalidRegionError(SynthesisError):
    """Exception for empty validity regions and malformed region maps"""
    pass


class OutsideParamSpaceError(SynthesisError):
    """Exception for membership queries outside the mapped box"""
    pass


class _PointOracle:
    """Cached critical min-probability per parameter point"""

    def __init__(self, model, prop):
        self.model = model
        self.prop = prop
        self.cache = {}
        self.evaluations = 0

    def __call__(self, point):
        key = tuple(float(v) for v in point)
        if key not in self.cache:
            mdp = model_service.instantiate(self.model, key)
            result = pctl_service.path_probability(mdp, self.prop)
            self.cache[key] = pctl_service.critical_value(mdp, self.prop, result)
            self.evaluations += 1
        return self.cache[key]


def _removed_slabs(lower, upper, valid_lower, valid_upper):
    """Rectangles tiling the declared box minus the valid box"""
    slabs = []
    lo, hi = list(lower), list(upper)
    for d in range(len(lower)):
        if valid_lower[d] > lo[d]:
            slab_hi = list(hi)
            slab_hi[d] = valid_lower[d]
            slabs.append(HyperRect(tuple(lo), tuple(slab_hi)))
        if valid_upper[d] < hi[d]:
            slab_lo = list(lo)
            slab_lo[d] = valid_upper[d]
            slabs.append(HyperRect(tuple(slab_lo), tuple(hi)))
        lo[d], hi[d] = valid_lower[d], valid_upper[d]
    return [s for s in slabs if s.volume() > 0]


def _sample_verdict(rect, space, oracle, prop, margin_factor):
    """Common verdict of the valid corners and centre when the margin guard holds, else None"""
    points = [p for p in rect.corners() + [rect.center()] if space.is_valid(p)]
    if not points:
        return None
    try:
        values = [oracle(p) for p in points]
    except ParameterRangeError:
        return None
    verdicts = {prop.comparison.holds(v, prop.threshold) for v in values}
    if len(verdicts) != 1:
        return None
    spread = max(values) - min(values)
    if min(abs(v - prop.threshold) for v in values) <= margin_factor * spread:
        return None
    return Verdict.SAT if verdicts.pop() else Verdict.UNSAT


def _shrink(rect, space):
    """
    Valid sub-box of a partly valid cell and the slabs cut away from it

    Returns:
        tuple: (HyperRect or None, list of HyperRect); None when no point is valid
    """
    box = space.valid_box(rect.lower, rect.upper, passes=SYNTHESIS['propagation_passes'])
    if box is None:
        return None, [rect]
    lower = tuple(min(max(v, l), h) for v, l, h in zip(box[0], rect.lower, rect.upper))
    upper = tuple(min(max(v, l), h) for v, l, h in zip(box[1], lower, rect.upper))
    return HyperRect(lower, upper), _removed_slabs(rect.lower, rect.upper, lower, upper)


def _refine(cells, space, oracle, prop, tolerance, margin_factor, trivial):
    """
    Bisect the given cells until every piece is decided or narrower than tolerance

    A partly valid cell is first shrunk to its valid sub-box; the slabs cut
    away hold no valid point and are violated. A cell that stays partly valid
    is decided on its valid samples: violated at once, satisfied only at
    tolerance width, where the invalid sliver takes the verdict of the cell.
    """
    decided = []
    queue = list(cells)
    while queue:
        rect = queue.pop()
        status = space.classify_box(rect.lower, rect.upper)
        if status == 'mixed':
            rect, slabs = _shrink(rect, space)
            decided += [(slab, Verdict.UNSAT) for slab in slabs]
            if rect is None or (rect.dimension and rect.volume() == 0):
                continue
            status = space.classify_box(rect.lower, rect.upper)
        if status == 'invalid':
            decided.append((rect, Verdict.UNSAT))
            continue
        at_tolerance = rect.dimension == 0 or max(rect.widths()) <= tolerance
        verdict = trivial if trivial is not None else \
            _sample_verdict(rect, space, oracle, prop, margin_factor)
        if status == 'mixed' and verdict is Verdict.SAT and not at_tolerance:
            verdict = None
        if verdict is not None:
            decided.append((rect, verdict))
        elif at_tolerance:
            decided.append((rect, Verdict.UNKNOWN))
        else:
            queue.extend(reversed(rect.split_widest()))
    return decided


def synthesise_region(model, prop, tolerance=None, budget=None, ties=None):
    """
    Compute the feasible set of a property as a tagged rectangle map

    Args:
        model (Pmdp): parametric model
        prop (ProbabilisticFormula): top-level property
        tolerance (float): minimum cell width per dimension
        budget (float): admissible undecided volume fraction
        ties (dict): tied parameter -> source; the map covers the free parameters

    Returns:
        FeasibleRegionMap: rectangles tiling the declared box of the free parameters

    Raises:
        InvalidRegionError: If no parameter point in the box is valid
    """
    tolerance = SYNTHESIS['tolerance'] if tolerance is None else tolerance
    budget = SYNTHESIS['undecided_budget'] if budget is None else budget
    if tolerance <= 0:
        raise SynthesisError(f'tolerance must be positive, got {tolerance}')
    margin_factor = SYNTHESIS['margin_factor']

    reduced = model_service.tie_parameters(model, ties or {})
    space = model_service.param_space(reduced)
    lower, upper = tuple(space.lower), tuple(space.upper)

    box = space.valid_box(lower, upper, passes=SYNTHESIS['propagation_passes'])
    if box is None:
        raise InvalidRegionError('no parameter point in the declared box yields valid probabilities')
    valid_lower, valid_upper = box

    trivial = None
    if prop.comparison.is_trivially_true(prop.threshold):
        trivial = Verdict.SAT
    elif prop.comparison.is_trivially_false(prop.threshold):
        trivial = Verdict.UNSAT

    oracle = _PointOracle(reduced, prop)
    cells = [(slab, Verdict.UNSAT) for slab in _removed_slabs(lower, upper, valid_lower, valid_upper)]
    cells += _refine([HyperRect(valid_lower, valid_upper)], space, oracle, prop,
                     tolerance, margin_factor, trivial)

    total = float(np.prod(np.subtract(upper, lower))) if lower else 1.0
    current = tolerance
    for _ in range(MAX_BUDGET_REFINEMENTS):
        undecided = sum(r.volume() for r, v in cells if v is Verdict.UNKNOWN)
        if total == 0 or undecided / total <= budget:
            break
        current /= 2
        logger.info(f'Undecided fraction {undecided / total:.4f} above budget {budget}, '
                     f'refining to tolerance {current:g}')
        pending = [r for r, v in cells if v is Verdict.UNKNOWN]
        cells = [(r, v) for r, v in cells if v is not Verdict.UNKNOWN]
        cells += _refine(pending, space, oracle, prop, current, margin_factor, trivial)
    else:
        undecided = sum(r.volume() for r, v in cells if v is Verdict.UNKNOWN)
        if total and undecided / total > budget:
            logger.warning(f'Undecided fraction {undecided / total:.4f} still above budget {budget}')

    cells.sort(key=lambda cell: cell[0].sort_key())
    region = FeasibleRegionMap(
        params=reduced.param_names,
        lower=lower,
        upper=upper,
        cells=tuple(cells),
        tolerance=tolerance,
        property_text=str(prop)
    )
    logger.info(f'Synthesised {len(cells)} rectangles from {oracle.evaluations} model checks, '
                f'undecided volume {region.undecided_volume:.4g}')
    return region


def coordinates(region, theta):
    if isinstance(theta, dict):
        missing = [n for n in region.params if n not in theta]
        if missing:
            raise OutsideParamSpaceError(f'point lacks coordinates for {missing}')
        return tuple(float(theta[n]) for n in region.params)
    values = tuple(float(v) for v in theta)
    if len(values) != region.dimension:
        raise OutsideParamSpaceError(
            f'expected {region.dimension} coordinates ({", ".join(region.params)}), got {len(values)}')
    return values


def membership(region, theta, tolerance=1e-12):
    """
    Verdict of the covering rectangle; shared faces resolve to the
    lexicographically first rectangle

    Args:
        theta: dict name -> value (extra names ignored) or sequence over region.params

    Raises:
        OutsideParamSpaceError: If theta lies outside the mapped box
    """
    values = coordinates(region, theta)
    return membership_many(region, [values], tolerance)[0]


def membership_many(region, points, tolerance=1e-12):
    """Vectorised membership: list of Verdict for an (n, d) array of points"""
    points = np.asarray(points, dtype=float).reshape(-1, region.dimension)
    lower, upper = np.asarray(region.lower), np.asarray(region.upper)
    outside = np.any((points < lower - tolerance) | (points > upper + tolerance), axis=1)
    if np.any(outside):
        bad = points[np.argmax(outside)]
        raise OutsideParamSpaceError(f'point {bad.tolist()} outside the mapped box')
    points = np.clip(points, lower, upper)
    codes = region.verdict_codes(points)
    verdicts = list(Verdict)
    return [verdicts[c] for c in codes]


def satisfied_volume(region):
    return region.satisfied_volume


def undecided_volume(region):
    return region.undecided_volume


def satisfied_interval(region, dim=0):
    """Hull of the satisfied cells along one dimension, None when nothing is satisfied"""
    rects = region.sat_rects()
    if not rects:
        return None
    return min(r.lower[dim] for r in rects), max(r.upper[dim] for r in rects)


def region_rects(region):
    """Bare rectangle list [{lo, hi, verdict}]"""
    return [
        {'lo': list(rect.lower), 'hi': list(rect.upper), 'verdict': verdict.value}
        for rect, verdict in region.cells
    ]


def region_document(region):
    return {
        'params': list(region.params),
        'lower': list(region.lower),
        'upper': list(region.upper),
        'tolerance': region.tolerance,
        'property': region.property_text,
        'undecided_volume': region.undecided_volume,
        'satisfied_volume': region.satisfied_volume,
        'rects': region_rects(region)
    }


def _document_from_rects(rects, params=None):
    """Map document around a bare rectangle list; the box is the hull of the rectangles"""
    if not isinstance(rects, list) or not rects:
        raise InvalidRegionError('a region map needs at least one rectangle')
    try:
        dimension = len(rects[0]['lo'])
        lower = [min(float(r['lo'][d]) for r in rects) for d in range(dimension)]
        upper = [max(float(r['hi'][d]) for r in rects) for d in range(dimension)]
    except (KeyError, TypeError, ValueError, IndexError) as e:
        raise InvalidRegionError(f'malformed region map: {e}')
    params = list(params) if params is not None else [f'theta{d + 1}' for d in range(dimension)]
    if len(params) != dimension:
        raise InvalidRegionError(f'{len(params)} parameter names for {dimension}-dimensional rectangles')
    return {'params': params, 'lower': lower, 'upper': upper, 'rects': rects}


def region_from_document(document, params=None):
    """
    Rebuild a region map from its JSON form

    Args:
        document: object written by save_region, or a bare list of {lo, hi, verdict}
        params (list): names of a bare list's dimensions, theta1 .. thetad when None

    Raises:
        InvalidRegionError: If a rectangle is malformed or the volumes do not tile the box
    """
    if isinstance(document, list):
        document = _document_from_rects(document, params)
    try:
        params = tuple(document['params'])
        cells = []
        for entry in document['rects']:
            rect = HyperRect(tuple(float(v) for v in entry['lo']),
                             tuple(float(v) for v in entry['hi']))
            if rect.dimension != len(params) or len(entry['hi']) != len(params):
                raise InvalidRegionError('rectangle dimension does not match the parameters')
            if any(l > h for l, h in zip(rect.lower, rect.upper)):
                raise InvalidRegionError(f'empty rectangle {entry}')
            cells.append((rect, Verdict(entry['verdict'])))
        region = FeasibleRegionMap(
            params=params,
            lower=tuple(float(v) for v in document['lower']),
            upper=tuple(float(v) for v in document['upper']),
            cells=tuple(sorted(cells, key=lambda c: c[0].sort_key())),
            tolerance=float(document.get('tolerance', SYNTHESIS['tolerance'])),
            property_text=document.get('property', '')
        )
    except (KeyError, TypeError, ValueError) as e:
        raise InvalidRegionError(f'malformed region map: {e}')
    covered = sum(rect.volume() for rect, _ in region.cells)
    if abs(covered - region.total_volume()) > 1e-9:
        raise InvalidRegionError(
            f'rectangles cover volume {covered}, box volume is {region.total_volume()}')
    return region


def save_region(region, path, bare=False):
    """Write the region map; bare writes only the [{lo, hi, verdict}] list"""
    io_utils.write_json(path, region_rects(region) if bare else region_document(region))
    logger.info(f'Saved region map with {len(region.cells)} rectangles to {path}')


def load_region(path, params=None):
    return region_from_document(io_utils.read_json(path), params)


def interval_region(param, lo, hi, lower=0.0, upper=1.0):
    """One-dimensional map satisfied exactly on [lo, hi]"""
    cells = []
    if lo > lower:
        cells.append((HyperRect((lower,), (lo,)), Verdict.UNSAT))
    cells.append((HyperRect((lo,), (hi,)), Verdict.SAT))
    if hi < upper:
        cells.append((HyperRect((hi,), (upper,)), Verdict.UNSAT))
    return FeasibleRegionMap((param,), (lower,), (upper,), tuple(cells), tolerance=0.0)


def box_region(params, lo, hi, lower=None, upper=None):
    """Map satisfied exactly on the axis-aligned box [lo, hi]"""
    d = len(params)
    lower = tuple(lower or (0.0,) * d)
    upper = tuple(upper or (1.0,) * d)
    slabs = _removed_slabs(lower, upper, tuple(lo), tuple(hi))
    cells = [(s, Verdict.UNSAT) for s in slabs] + [(HyperRect(tuple(lo), tuple(hi)), Verdict.SAT)]
    cells.sort(key=lambda c: c[0].sort_key())
    return FeasibleRegionMap(tuple(params), lower, upper, tuple(cells), tolerance=0.0)
