"""
Domain types for parametric Markov decision processes
Affine transition expressions, the parametric model, its induced MDPs and the parameter space
"""
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Dict, FrozenSet, Optional, Sequence, Tuple

import numpy as np


def _format_fraction(value):
    value = Fraction(value)
    if value.denominator == 1:
        return str(value.numerator)
    return f'{value.numerator}/{value.denominator}'


@dataclass(frozen=True)
class AffineExpr:
    """
    Probability expression k0 + sum(k_i * theta_i) with exact rational coefficients

    terms holds (parameter index, coefficient) pairs sorted by index, zero
    coefficients removed.
    """
    constant: Fraction = Fraction(0)
    terms: Tuple[Tuple[int, Fraction], ...] = ()

    @classmethod
    def of(cls, constant=0, terms=None):
        merged = {}
        for index, coefficient in (terms or ()):
            merged[index] = merged.get(index, Fraction(0)) + Fraction(coefficient)
        cleaned = tuple(sorted((i, k) for i, k in merged.items() if k != 0))
        return cls(Fraction(constant), cleaned)

    @classmethod
    def const(cls, value):
        return cls.of(value)

    @classmethod
    def param(cls, index, coefficient=1):
        return cls.of(0, [(index, coefficient)])

    @property
    def is_constant(self):
        return not self.terms

    @property
    def params(self):
        return tuple(index for index, _ in self.terms)

    def literal_param(self) -> Optional[int]:
        """Index j when the expression is exactly theta_j"""
        if self.constant == 0 and len(self.terms) == 1 and self.terms[0][1] == 1:
            return self.terms[0][0]
        return None

    def complement_param(self) -> Optional[int]:
        """Index j when the expression is exactly 1 - theta_j"""
        if self.constant == 1 and len(self.terms) == 1 and self.terms[0][1] == -1:
            return self.terms[0][0]
        return None

    def is_elementary(self):
        return self.is_constant or self.literal_param() is not None \
            or self.complement_param() is not None

    def evaluate(self, theta):
        value = float(self.constant)
        for index, coefficient in self.terms:
            value += float(coefficient) * float(theta[index])
        return value

    def bounds(self, lower, upper):
        """Interval of values over the box [lower, upper]"""
        low = high = float(self.constant)
        for index, coefficient in self.terms:
            k = float(coefficient)
            a, b = k * float(lower[index]), k * float(upper[index])
            low += min(a, b)
            high += max(a, b)
        return low, high

    def __add__(self, other):
        return AffineExpr.of(self.constant + other.constant, self.terms + other.terms)

    def __neg__(self):
        return AffineExpr.of(-self.constant, [(i, -k) for i, k in self.terms])

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        """Product, defined while at most one factor is parametric"""
        if other.is_constant:
            return AffineExpr.of(self.constant * other.constant,
                                 [(i, k * other.constant) for i, k in self.terms])
        if self.is_constant:
            return other * self
        raise ValueError(f'product of two parametric expressions is not affine: '
                         f'({self.render()}) * ({other.render()})')

    def substitute(self, mapping):
        """
        Re-index parameters

        Args:
            mapping (dict): old index -> new index; indices mapping to the same
                new index are merged
        """
        return AffineExpr.of(self.constant, [(mapping[i], k) for i, k in self.terms])

    def render(self, names=None):
        parts = []
        if self.constant != 0 or not self.terms:
            parts.append(_format_fraction(self.constant))
        for index, coefficient in self.terms:
            name = names[index] if names is not None else f'theta{index}'
            sign = '-' if coefficient < 0 else '+'
            magnitude = abs(coefficient)
            body = name if magnitude == 1 else f'{_format_fraction(magnitude)}*{name}'
            if not parts:
                parts.append(body if sign == '+' else f'0 - {body}')
            else:
                parts.append(f'{sign} {body}')
        return ' '.join(parts)


@dataclass(frozen=True)
class Parameter:
    name: str
    lower: float = 0.0
    upper: float = 1.0


@dataclass(frozen=True)
class Transition:
    source: str
    action: str
    target: str
    probability: AffineExpr


@dataclass(frozen=True)
class Pmdp:
    """
    Parametric MDP

    Transitions keep file order; states and parameters are indexed in
    declaration order and actions in order of first appearance.
    """
    parameters: Tuple[Parameter, ...]
    states: Tuple[str, ...]
    labels: Tuple[FrozenSet[str], ...]
    initial: Tuple[Tuple[str, Fraction], ...]
    transitions: Tuple[Transition, ...]
    prior: Tuple[Tuple[str, Tuple[float, float]], ...] = ()

    @cached_property
    def param_names(self):
        return tuple(p.name for p in self.parameters)

    @cached_property
    def param_index(self) -> Dict[str, int]:
        return {name: i for i, name in enumerate(self.param_names)}

    @cached_property
    def state_index(self) -> Dict[str, int]:
        return {name: i for i, name in enumerate(self.states)}

    @cached_property
    def actions(self) -> Tuple[str, ...]:
        seen = {}
        for t in self.transitions:
            seen.setdefault(t.action, len(seen))
        return tuple(seen)

    @cached_property
    def action_index(self) -> Dict[str, int]:
        return {name: i for i, name in enumerate(self.actions)}

    @cached_property
    def rows(self) -> Dict[Tuple[str, str], Tuple[Tuple[str, AffineExpr], ...]]:
        grouped = {}
        for t in self.transitions:
            grouped.setdefault((t.source, t.action), []).append((t.target, t.probability))
        return {key: tuple(entries) for key, entries in grouped.items()}

    @cached_property
    def enabled(self) -> Dict[str, Tuple[str, ...]]:
        per_state = {s: set() for s in self.states}
        for source, action in self.rows:
            per_state[source].add(action)
        return {s: tuple(sorted(acts, key=self.action_index.__getitem__))
                for s, acts in per_state.items()}

    @cached_property
    def label_map(self) -> Dict[str, FrozenSet[str]]:
        return dict(zip(self.states, self.labels))

    @cached_property
    def expressions(self) -> Tuple[AffineExpr, ...]:
        """Distinct transition expressions in first-appearance order"""
        return tuple(dict.fromkeys(t.probability for t in self.transitions))

    def row(self, state, action):
        return self.rows[(state, action)]

    @property
    def dimension(self):
        return len(self.parameters)


EdgeKey = Tuple[str, str, str]
Route = Tuple[EdgeKey, ...]


@dataclass(frozen=True)
class ExpandedModel:
    """
    Expanded model with its lineage

    lineage maps every original edge (s, a, s') to its routes: tuples of
    expanded edges leading from s to s' whose probability products sum to the
    original probability. tied_rows are rows kept unexpanded because they admit
    no exact normal form.
    """
    model: Pmdp
    original: Pmdp
    fresh_states: Tuple[str, ...]
    lineage: Dict[EdgeKey, Tuple[Route, ...]]
    tied_rows: Tuple[Tuple[str, str], ...] = ()

    @cached_property
    def edge_expr(self) -> Dict[EdgeKey, AffineExpr]:
        return {(t.source, t.action, t.target): t.probability for t in self.model.transitions}

    @cached_property
    def origins(self) -> Dict[EdgeKey, Tuple[EdgeKey, ...]]:
        """Original edges served by each expanded edge"""
        served = {}
        for original, routes in self.lineage.items():
            for route in routes:
                for edge in route:
                    served.setdefault(edge, [])
                    if original not in served[edge]:
                        served[edge].append(original)
        return {edge: tuple(items) for edge, items in served.items()}

    def role(self, edge):
        """'constant', 'parameter', 'complement' or 'tied' for an expanded edge"""
        if (edge[0], edge[1]) in self.tied_rows:
            return 'tied'
        expr = self.edge_expr[edge]
        if expr.is_constant:
            return 'constant'
        if expr.literal_param() is not None:
            return 'parameter'
        return 'complement'

    def route_probability(self, route, theta):
        value = 1.0
        for edge in route:
            value *= self.edge_expr[edge].evaluate(theta)
        return value

    def is_ambiguous(self, original_edge):
        return len(self.lineage[original_edge]) > 1


@dataclass(frozen=True)
class Choice:
    """One enabled action of an induced MDP state as a sparse distribution"""
    action: str
    targets: Tuple[int, ...]
    probabilities: Tuple[float, ...]


@dataclass(frozen=True)
class Mdp:
    """Induced MDP M(theta): index-based sparse rows per state"""
    states: Tuple[str, ...]
    labels: Tuple[FrozenSet[str], ...]
    initial: Tuple[Tuple[int, float], ...]
    choices: Tuple[Tuple[Choice, ...], ...]

    @cached_property
    def state_index(self):
        return {name: i for i, name in enumerate(self.states)}

    def choice(self, state, action):
        for c in self.choices[state]:
            if c.action == action:
                return c
        raise KeyError(f'action {action} not enabled at {self.states[state]}')

    def initial_states(self):
        return [s for s, p in self.initial if p > 0]


@dataclass(frozen=True)
class ParamSpace:
    """
    Declared parameter box plus the validity constraints 0 <= g(theta) <= 1
    for every transition expression g
    """
    names: Tuple[str, ...]
    lower: Tuple[float, ...]
    upper: Tuple[float, ...]
    constraints: Tuple[AffineExpr, ...] = field(default=())
    tolerance: float = 1e-12

    @property
    def dimension(self):
        return len(self.names)

    def volume(self):
        return float(np.prod(np.subtract(self.upper, self.lower)))

    def contains(self, theta):
        theta = np.asarray(theta, dtype=float)
        return bool(np.all(theta >= np.asarray(self.lower) - self.tolerance)
                    and np.all(theta <= np.asarray(self.upper) + self.tolerance))

    def violations(self, theta):
        """Constraints that evaluate outside [0, 1] at theta"""
        bad = []
        for expr in self.constraints:
            value = expr.evaluate(theta)
            if value < -self.tolerance or value > 1 + self.tolerance:
                bad.append((expr, value))
        return bad

    def is_valid(self, theta):
        return self.contains(theta) and not self.violations(theta)

    def classify_box(self, lower, upper):
        """
        Interval test of a sub-box against the constraints

        Returns:
            str: 'valid' if every point is valid, 'invalid' if no point is,
                'mixed' otherwise
        """
        mixed = False
        for expr in self.constraints:
            low, high = expr.bounds(lower, upper)
            if high < -self.tolerance or low > 1 + self.tolerance:
                return 'invalid'
            if low < -self.tolerance or high > 1 + self.tolerance:
                mixed = True
        return 'mixed' if mixed else 'valid'

    def valid_box(self, lower=None, upper=None, passes=8):
        """
        Shrink a box by interval bound propagation over the constraints

        Every slab removed contains no valid point. Returns None when the box
        is emptied (validity region does not meet the box).
        """
        lo = list(self.lower if lower is None else lower)
        hi = list(self.upper if upper is None else upper)
        for _ in range(passes):
            changed = False
            for expr in self.constraints:
                for index, coefficient in expr.terms:
                    k = float(coefficient)
                    rest_lo = rest_hi = float(expr.constant)
                    for j, kj in expr.terms:
                        if j == index:
                            continue
                        a, b = float(kj) * lo[j], float(kj) * hi[j]
                        rest_lo += min(a, b)
                        rest_hi += max(a, b)
                    # 0 <= k*x + rest <= 1
                    bound_a = (-rest_hi) / k
                    bound_b = (1 - rest_lo) / k
                    new_lo, new_hi = (bound_a, bound_b) if k > 0 else (bound_b, bound_a)
                    if new_lo > lo[index] + self.tolerance:
                        lo[index] = new_lo
                        changed = True
                    if new_hi < hi[index] - self.tolerance:
                        hi[index] = new_hi
                        changed = True
                    if lo[index] > hi[index] + self.tolerance:
                        return None
            if not changed:
                break
        hi = [max(h, l) for l, h in zip(lo, hi)]
        return tuple(lo), tuple(hi)

    def project(self, theta, passes=8):
        """Clip theta into the propagated valid box"""
        box = self.valid_box(passes=passes)
        if box is None:
            return None
        lo, hi = box
        return tuple(float(np.clip(v, l, h)) for v, l, h in zip(theta, lo, hi))
