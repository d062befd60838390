"""
Result types returned by the checking, confidence, design and harness services
"""
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np


@dataclass(frozen=True)
class Strategy:
    """Deterministic memoryless strategy: one enabled action per state, in state order"""
    choices: Tuple[Tuple[str, str], ...]

    @classmethod
    def of(cls, mapping, states):
        return cls(tuple((s, mapping[s]) for s in states))

    def __getitem__(self, state):
        for s, action in self.choices:
            if s == state:
                return action
        raise KeyError(state)

    def as_dict(self):
        return dict(self.choices)

    def restrict(self, states):
        keep = set(states)
        return Strategy(tuple((s, a) for s, a in self.choices if s in keep))

    def __str__(self):
        return ', '.join(f'{s}->{a}' for s, a in self.choices)


@dataclass(frozen=True)
class ReachResult:
    """Per-state minimal until-probabilities with the arg-min witness strategy"""
    values: Tuple[float, ...]
    strategy: Strategy
    iterations: int
    residual: float
    prob0: Tuple[int, ...] = ()
    prob1: Tuple[int, ...] = ()

    def value_of(self, index):
        return self.values[index]


@dataclass(frozen=True)
class ConfidenceEstimate:
    """
    Posterior mass of the feasible set

    Undecided mass is reported beside the value and never counted as satisfied.
    """
    value: float
    samples: int
    undecided_mass: float
    method: str = 'monte-carlo'
    rejected: int = 0

    @property
    def stderr(self):
        if self.samples <= 0:
            return 0.0
        return float(np.sqrt(self.value * (1 - self.value) / self.samples))

    @property
    def band(self):
        return self.value, min(1.0, self.value + self.undecided_mass)

    def as_dict(self):
        return {
            'c': self.value,
            'stderr': self.stderr,
            'undecided_mass': self.undecided_mass,
            'samples': self.samples,
            'method': self.method,
            'rejected': self.rejected
        }


@dataclass(frozen=True)
class PredictedCounts:
    """Expected edge counts over a trace and the derived expected parameter counts"""
    length: int
    edge_counts: Mapping[Tuple[str, str, str], float]
    param_counts: Mapping[str, Tuple[float, float]]
    step_totals: Tuple[float, ...] = ()


@dataclass(frozen=True)
class StrategyScore:
    strategy: Strategy
    predicted: float
    gain: float


@dataclass(frozen=True)
class GainReport:
    """Chosen strategy with the full per-strategy gain table and tie record"""
    strategy: Strategy
    predicted: float
    current: float
    gain: float
    scores: Tuple[StrategyScore, ...] = ()
    ties: Tuple[Strategy, ...] = ()

    @staticmethod
    def gain_of(predicted, current):
        return abs(0.5 - predicted) - abs(0.5 - current)

    def as_dict(self):
        return {
            'strategy': self.strategy.as_dict(),
            'predicted': self.predicted,
            'current': self.current,
            'gain': self.gain,
            'ties': [t.as_dict() for t in self.ties],
            'candidates': len(self.scores)
        }


@dataclass(frozen=True)
class DpResult:
    """Offline DP strategy with its value table and value ties per state"""
    strategy: Strategy
    rewards: Mapping[Tuple[str, str], float]
    q_values: Mapping[Tuple[str, str], float]
    ties: Mapping[str, Tuple[str, ...]]
    iterations: int

    def as_dict(self):
        return {
            'strategy': self.strategy.as_dict(),
            'ties': {s: list(a) for s, a in self.ties.items()},
            'q_values': {f'{s}|{a}': v for (s, a), v in self.q_values.items()},
            'rewards': {f'{s}|{a}': v for (s, a), v in self.rewards.items()},
            'iterations': self.iterations
        }


@dataclass
class RunResult:
    """Outcome of one sequential verification run with its audit log"""
    confidence: ConfidenceEstimate
    series: List[float] = field(default_factory=list)
    strategies: List[Optional[Dict[str, str]]] = field(default_factory=list)
    total_steps: int = 0
    audit: List[Dict] = field(default_factory=list)


@dataclass(frozen=True)
class ExperimentSpec:
    """Evaluation grid description"""
    model_path: str
    property_text: str
    grid: Tuple[float, ...]
    configurations: Tuple[Tuple[int, int], ...]
    modes: Tuple[str, ...]
    trials: int
    seed: int
    mc_samples: int
    prediction_samples: int
    tolerance: float
    tie: Mapping[str, str] = field(default_factory=dict)
    synthesis_tie: Mapping[str, str] = field(default_factory=dict)
    sweep_param: str = 'theta1'
    confidence_method: str = 'exact'
    prior: Optional[Mapping[str, Tuple[float, float]]] = None
    study: str = 'accuracy'


@dataclass
class EvalResult:
    """Per-cell confidence outcomes, MSE table and convergence series"""
    outcomes: Dict[Tuple[float, str, int, int], List[float]] = field(default_factory=dict)
    ground_truth: Dict[float, int] = field(default_factory=dict)
    boundary: Dict[float, bool] = field(default_factory=dict)
    mse: Dict[Tuple[float, str, int, int], float] = field(default_factory=dict)
    series: Dict[Tuple[float, str, int, int], List[List[float]]] = field(default_factory=dict)
    failures: List[Dict] = field(default_factory=list)

    def is_empty(self):
        return not self.outcomes and not self.series
