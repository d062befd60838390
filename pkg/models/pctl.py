"""
Abstract syntax for the non-nested PCTL fragment

State formulas: true | "label" | !f | f & f | P~p [ path ]
Path formulas:  f U f | X f
"""
import operator
from dataclasses import dataclass
from enum import Enum
from typing import Union


class Comparison(Enum):
    LT = '<'
    LE = '<='
    GE = '>='
    GT = '>'

    def holds(self, value, threshold):
        return _COMPARATORS[self](value, threshold)

    def is_trivially_true(self, threshold):
        return (self is Comparison.GE and threshold <= 0) or \
            (self is Comparison.LE and threshold >= 1)

    def is_trivially_false(self, threshold):
        return (self is Comparison.LT and threshold <= 0) or \
            (self is Comparison.GT and threshold >= 1)


_COMPARATORS = {
    Comparison.LT: operator.lt,
    Comparison.LE: operator.le,
    Comparison.GE: operator.ge,
    Comparison.GT: operator.gt,
}


@dataclass(frozen=True)
class TrueFormula:
    def __str__(self):
        return 'true'


@dataclass(frozen=True)
class Atom:
    label: str

    def __str__(self):
        return f'"{self.label}"'


@dataclass(frozen=True)
class Not:
    operand: 'StateFormula'

    def __str__(self):
        return f'!{_wrap(self.operand)}'


@dataclass(frozen=True)
class And:
    left: 'StateFormula'
    right: 'StateFormula'

    def __str__(self):
        return f'{_wrap(self.left)} & {_wrap(self.right)}'


@dataclass(frozen=True)
class Until:
    left: 'StateFormula'
    right: 'StateFormula'

    def __str__(self):
        return f'{self.left} U {self.right}'


@dataclass(frozen=True)
class Next:
    operand: 'StateFormula'

    def __str__(self):
        return f'X {self.operand}'


@dataclass(frozen=True)
class ProbabilisticFormula:
    comparison: Comparison
    threshold: float
    path: Union[Until, Next]

    def __str__(self):
        return f'P{self.comparison.value}{self.threshold!r} [ {self.path} ]'


StateFormula = Union[TrueFormula, Atom, Not, And, ProbabilisticFormula]
Property = ProbabilisticFormula


def _wrap(formula):
    if isinstance(formula, And):
        return f'({formula})'
    return str(formula)


def is_propositional(formula):
    """True when the formula contains no probabilistic operator"""
    if isinstance(formula, (TrueFormula, Atom)):
        return True
    if isinstance(formula, Not):
        return is_propositional(formula.operand)
    if isinstance(formula, And):
        return is_propositional(formula.left) and is_propositional(formula.right)
    return False


def holds_in(formula, labels):
    """Evaluate a propositional formula against a state's label set"""
    if isinstance(formula, TrueFormula):
        return True
    if isinstance(formula, Atom):
        return formula.label in labels
    if isinstance(formula, Not):
        return not holds_in(formula.operand, labels)
    if isinstance(formula, And):
        return holds_in(formula.left, labels) and holds_in(formula.right, labels)
    raise TypeError(f'not a propositional formula: {formula}')
