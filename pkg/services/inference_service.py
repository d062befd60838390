"""
Inference service - transition counts, Beta posteriors and count completions
Parameter-tied counting, conjugate updates and sampling of latent expanded-model counts
"""
import logging

import numpy as np

from config.settings import DEFAULT_PRIOR, MONTE_CARLO
from models.data import CompletionSample, CountData, DirichletPosterior, TraceData
from utils import io_utils
from utils.rng_utils import STREAM_COMPLETION, STREAM_POSTERIOR, make_rng

logger = logging.getLogger(__name__)


class InferenceError(Exception):
    """Custom exception for inference errors"""
    pass


class DataConsistencyError(InferenceError):
    """Exception for trace steps that are impossible under the model"""
    pass


class CompletionError(InferenceError):
    """Exception for count splits that stay undefined after bounded retries"""
    pass


def parameter_counts(model, edge_counts, params=None):
    """
    Parameter-tied counts (D_theta_j, D_not_theta_j) from edge counts

    D_theta_j sums the counts of edges whose probability is literally theta_j.
    D_not_theta_j sums the other edges of every row holding a theta_j edge;
    a row holding 1 - theta_j but no theta_j edge adds only its 1 - theta_j count.

    Args:
        model (Pmdp): model the edge keys refer to (original or expanded)
        edge_counts (dict): (s, a, s') -> count (int or real)

    Returns:
        dict: parameter name -> (D_theta, D_not_theta)
    """
    names = model.param_names if params is None else params
    totals = {name: [0, 0] for name in names}
    for (state, action), row in model.rows.items():
        counts = [edge_counts.get((state, action, target), 0) for target, _ in row]
        if not any(counts):
            continue
        literal = {}
        complement = {}
        for (target, expr), count in zip(row, counts):
            j = expr.literal_param()
            if j is not None:
                literal.setdefault(j, []).append(count)
            j = expr.complement_param()
            if j is not None:
                complement.setdefault(j, []).append(count)
        row_total = sum(counts)
        for j, hits in literal.items():
            name = model.param_names[j]
            if name in totals:
                totals[name][0] += sum(hits)
                totals[name][1] += row_total - sum(hits)
        for j, misses in complement.items():
            name = model.param_names[j]
            if j not in literal and name in totals:
                totals[name][1] += sum(misses)
    return {name: (a, b) for name, (a, b) in totals.items()}


def extract_counts(model, traces):
    """
    Count edges of the original model and derive the tied parameter counts

    Args:
        model (Pmdp): original model
        traces (TraceData): observed traces

    Returns:
        CountData: edge counts and per-parameter (D_theta, D_not_theta)

    Raises:
        DataConsistencyError: If a step uses an unknown state, a disabled action,
            an absent or identically-zero transition, or does not chain
    """
    edge_counts = {}
    for number, trace in enumerate(traces.traces):
        previous = None
        for position, (state, action, target) in enumerate(trace):
            where = f'trace {number}, step {position}'
            if previous is not None and state != previous:
                raise DataConsistencyError(f'{where}: starts at {state} but previous step ended at {previous}')
            if state not in model.state_index:
                raise DataConsistencyError(f'{where}: unknown state {state}')
            if (state, action) not in model.rows:
                raise DataConsistencyError(f'{where}: action {action} not enabled at {state}')
            row = dict(model.rows[(state, action)])
            if target not in row or (row[target].is_constant and row[target].constant == 0):
                raise DataConsistencyError(
                    f'{where}: transition {state} -{action}-> {target} is impossible under the model')
            key = (state, action, target)
            edge_counts[key] = edge_counts.get(key, 0) + 1
            previous = target
    counts = CountData(edge_counts=edge_counts, param_counts=parameter_counts(model, edge_counts))
    logger.debug(f'Extracted {counts.total} transitions from {len(traces)} traces')
    return counts


def uniform_prior(model):
    """Per-parameter prior: the model file's prior where given, Beta(1, 1) otherwise"""
    declared = dict(model.prior)
    return DirichletPosterior(
        names=model.param_names,
        mu=tuple(tuple(declared.get(name, DEFAULT_PRIOR)) for name in model.param_names)
    )


def update_posterior(prior, counts):
    """
    Conjugate update mu' = mu + (D_theta, D_not_theta)

    Args:
        prior (DirichletPosterior): current hyperparameters
        counts: CountData, PredictedCounts or dict name -> (D_theta, D_not_theta)

    Returns:
        DirichletPosterior: updated hyperparameters (real increments allowed)

    Raises:
        InferenceError: If a count is negative
    """
    table = getattr(counts, 'param_counts', counts)
    updated = []
    for name, (a, b) in zip(prior.names, prior.mu):
        d_hit, d_miss = table.get(name, (0, 0))
        if d_hit < 0 or d_miss < 0:
            raise InferenceError(f'negative counts for {name}: ({d_hit}, {d_miss})')
        updated.append((a + d_hit, b + d_miss))
    return DirichletPosterior(prior.names, tuple(updated))


def _draw_theta(rng, posterior):
    return rng.beta(posterior.alpha, posterior.beta)


def sample_completions(expanded, counts, posterior, samples, seed, iterations=1, theta_source=None):
    """
    Sample completions D* of the expanded-model counts and a theta per completion

    Each sample draws theta_hat from the current posterior (theta_source),
    splits every observed edge count multinomially over its lineage routes in
    proportion to the route probabilities at theta_hat, then draws
    theta_j ~ Beta(mu + D*) per parameter. With iterations > 1 the drawn
    theta becomes the next theta_hat.

    Args:
        expanded (ExpandedModel): expansion of the model the counts come from
        counts (CountData): observed original-model counts
        posterior (DirichletPosterior): prior mu for the expanded-model parameters
        samples (int): number of completions
        seed (int): base seed; sample i uses its own derived stream
        theta_source (DirichletPosterior): posterior given the data so far,
            posterior when None

    Returns:
        list: CompletionSample per sample

    Raises:
        CompletionError: If every route of an observed edge has zero probability
            for completion_retries consecutive theta_hat draws
    """
    if samples < 1:
        raise InferenceError(f'at least one completion sample required, got {samples}')
    if iterations < 1:
        raise InferenceError(f'at least one completion iteration required, got {iterations}')
    source = posterior if theta_source is None else theta_source
    if source.names != posterior.names:
        raise InferenceError(f'theta source covers {source.names}, the prior covers {posterior.names}')
    retries = MONTE_CARLO['completion_retries']
    edges = sorted(e for e, c in counts.edge_counts.items() if c > 0)
    for edge in edges:
        if edge not in expanded.lineage:
            raise DataConsistencyError(f'edge {edge} has no lineage in the expanded model')

    results = []
    for index in range(samples):
        rng = make_rng(seed, STREAM_COMPLETION, index)
        theta_hat = tuple(float(v) for v in _draw_theta(rng, source))
        for _ in range(iterations):
            route_counts = None
            for _attempt in range(retries):
                route_counts = _split_counts(expanded, counts, edges, theta_hat, rng)
                if route_counts is not None:
                    break
                theta_hat = tuple(float(v) for v in _draw_theta(rng, source))
            if route_counts is None:
                raise CompletionError(f'count split undefined after {retries} theta draws')
            expanded_counts = {}
            for edge, per_route in route_counts.items():
                for route, n in zip(expanded.lineage[edge], per_route):
                    for step in route:
                        expanded_counts[step] = expanded_counts.get(step, 0) + int(n)
            tied = parameter_counts(expanded.model, expanded_counts, params=posterior.names)
            theta = tuple(float(v) for v in _draw_theta(rng, update_posterior(posterior, tied)))
            sample = CompletionSample(
                expanded_counts=expanded_counts,
                theta_hat=theta_hat,
                theta=theta,
                param_counts=tied,
                route_counts=route_counts
            )
            theta_hat = theta
        results.append(sample)
    logger.debug(f'Sampled {samples} completions over {len(edges)} observed edges')
    return results


def _split_counts(expanded, counts, edges, theta_hat, rng):
    """Per-route multinomial split of each observed edge count, None on a zero denominator"""
    split = {}
    for edge in edges:
        count = int(counts.edge_counts[edge])
        routes = expanded.lineage[edge]
        if len(routes) == 1:
            split[edge] = (count,)
            continue
        weights = np.array([expanded.route_probability(r, theta_hat) for r in routes])
        weights = np.clip(weights, 0.0, None)
        total = weights.sum()
        if total <= 0:
            logger.warning(f'All routes of {edge} have zero probability at theta_hat, redrawing')
            return None
        split[edge] = tuple(int(n) for n in rng.multinomial(count, weights / total))
    return split


def posterior_samples(source, samples=None, seed=None):
    """
    Joint parameter samples

    Args:
        source: DirichletPosterior (independent Beta draws) or a list of CompletionSample
        samples (int): number of draws from a posterior
        seed (int): base seed

    Returns:
        numpy.ndarray: shape (N, dimension)
    """
    if isinstance(source, DirichletPosterior):
        samples = MONTE_CARLO['samples'] if samples is None else samples
        if samples < 1:
            raise InferenceError(f'at least one posterior sample required, got {samples}')
        rng = make_rng(seed, STREAM_POSTERIOR)
        return rng.beta(source.alpha, source.beta, size=(samples, len(source.names)))
    draws = [c.theta for c in source]
    if not draws:
        raise InferenceError('no completion samples given')
    return np.array(draws, dtype=float)


def traces_from_records(records):
    traces = []
    for number, record in enumerate(records):
        if 'steps' not in record:
            raise io_utils.StorageFormatError(f"trace record {number} lacks 'steps'")
        traces.append(tuple(tuple(step) for step in record['steps']))
    return TraceData(tuple(traces))


def load_traces(path):
    """Read a JSON-lines trace file: one {"steps": [[s, a, s'], ...]} per line"""
    return traces_from_records(io_utils.read_jsonl(path))


def save_traces(traces, path):
    io_utils.write_jsonl(path, [{'steps': [list(step) for step in trace]} for trace in traces.traces])
    logger.info(f'Saved {len(traces)} traces to {path}')


def save_posterior(posterior, path):
    io_utils.write_json(path, posterior.as_dict())


def posterior_from_document(document, names=None):
    """Rebuild a posterior from {param: [mu1, mu2]}, ordered by names when given"""
    order = list(names) if names is not None else list(document)
    try:
        return DirichletPosterior(
            names=tuple(order),
            mu=tuple((float(document[n][0]), float(document[n][1])) for n in order)
        )
    except (KeyError, IndexError, TypeError) as e:
        raise io_utils.StorageFormatError(f'malformed posterior: {e}')
    except ValueError as e:
        raise InferenceError(str(e))


def load_posterior(path, names=None):
    """Posterior file, or the output of the infer command holding one under 'posterior'"""
    document = io_utils.read_json(path)
    if isinstance(document, dict) and isinstance(document.get('posterior'), dict):
        document = document['posterior']
    return posterior_from_document(document, names)
