"""
Data and posterior types: traces, transition counts, Beta posteriors, count completions
"""
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

Step = Tuple[str, str, str]
EdgeKey = Tuple[str, str, str]


@dataclass(frozen=True)
class TraceData:
    """Traces on the original model; each step is (state, action, next state)"""
    traces: Tuple[Tuple[Step, ...], ...] = ()

    @classmethod
    def of(cls, traces):
        return cls(tuple(tuple(tuple(step) for step in trace) for trace in traces))

    def __len__(self):
        return len(self.traces)

    @property
    def total_steps(self):
        return sum(len(trace) for trace in self.traces)

    def steps(self):
        for trace in self.traces:
            yield from trace

    def __add__(self, other):
        return TraceData(self.traces + other.traces)


@dataclass(frozen=True)
class CountData:
    """
    Edge counts D_{s,a,s'} plus the tied parameter counts (D_theta, D_not_theta)
    """
    edge_counts: Mapping[EdgeKey, float]
    param_counts: Mapping[str, Tuple[float, float]]

    @property
    def total(self):
        return sum(self.edge_counts.values())

    def for_param(self, name):
        return self.param_counts.get(name, (0, 0))


@dataclass(frozen=True)
class DirichletPosterior:
    """Per-parameter Beta hyperparameters mu = (mu1, mu2), both positive"""
    names: Tuple[str, ...]
    mu: Tuple[Tuple[float, float], ...]

    def __post_init__(self):
        if len(self.names) != len(self.mu):
            raise ValueError('one hyperparameter pair per parameter required')
        for name, (a, b) in zip(self.names, self.mu):
            if not (a > 0 and b > 0) or not np.isfinite(a) or not np.isfinite(b):
                raise ValueError(f'hyperparameters of {name} must be positive, got ({a}, {b})')

    @property
    def alpha(self):
        return np.array([a for a, _ in self.mu], dtype=float)

    @property
    def beta(self):
        return np.array([b for _, b in self.mu], dtype=float)

    def index(self, name):
        return self.names.index(name)

    def pair(self, name):
        return self.mu[self.index(name)]

    def mean(self):
        return self.alpha / (self.alpha + self.beta)

    def as_dict(self):
        return {name: [a, b] for name, (a, b) in zip(self.names, self.mu)}

    def restrict(self, names):
        return DirichletPosterior(tuple(names), tuple(self.pair(n) for n in names))


@dataclass(frozen=True)
class CompletionSample:
    """Latent expanded-model counts D* with the theta_hat used to split and the theta drawn"""
    expanded_counts: Mapping[EdgeKey, int]
    theta_hat: Tuple[float, ...]
    theta: Tuple[float, ...]
    param_counts: Mapping[str, Tuple[int, int]] = field(default_factory=dict)
    route_counts: Mapping[EdgeKey, Tuple[int, ...]] = field(default_factory=dict)


@dataclass(frozen=True)
class SimConfig:
    """
    Simulation settings: true parameters, trace length and count, seed, action source

    action_source is a Strategy, or one of 'random-static' / 'none'.
    """
    theta: Tuple[float, ...]
    length: int
    traces: int
    seed: int
    action_source: object = 'none'
    keys: Tuple[int, ...] = ()
