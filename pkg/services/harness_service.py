"""
Harness service - the sequential verification loop and the accuracy, robustness and convergence studies
Synthesis once, then design / simulate / infer / confidence per trace; grid runs, MSE and plot scripts
"""
import logging
import os
from concurrent.futures import ProcessPoolExecutor

import jsonschema
import numpy as np

from config.experiment_settings import (
    CONVERGENCE_CONFIG,
    CONVERGENCE_FILE_PATTERN,
    EXPERIMENT_GRID,
    MSE_FILE_PATTERN,
    RESULTS_HEADER,
    ROBUSTNESS_CONFIGURATIONS,
    STRATEGY_MODES,
    STUDIES,
    TRACE_CONFIGURATIONS,
    TRIALS,
)
from config.settings import DEFAULT_SEED, DESIGN, MONTE_CARLO, SYNTHESIS, THREADS
from models.data import SimConfig, TraceData
from models.region import Verdict
from models.results import EvalResult, ExperimentSpec, RunResult
from services import (
    confidence_service,
    design_service,
    inference_service,
    model_service,
    pctl_service,
    simulation_service,
    synthesis_service,
)
from utils import io_utils
from utils.rng_utils import STREAM_TRIAL, derive_seed

logger = logging.getLogger(__name__)

SERIES_HEADER = ['theta', 'mode', 'traces', 'len', 'trial', 'batch', 'confidence']
DESIGN_MODES = ('synth', 'dp')

EXPERIMENT_SCHEMA = {
    'type': 'object',
    'required': ['model', 'property'],
    'properties': {
        'model': {'type': 'string'},
        'property': {'type': 'string'},
        'grid': {
            'oneOf': [
                {'type': 'array', 'items': {'type': 'number', 'minimum': 0, 'maximum': 1}, 'minItems': 1},
                {
                    'type': 'object',
                    'required': ['start', 'stop', 'step'],
                    'properties': {
                        'start': {'type': 'number'},
                        'stop': {'type': 'number'},
                        'step': {'type': 'number', 'exclusiveMinimum': 0}
                    }
                }
            ]
        },
        'configurations': {
            'type': 'array',
            'minItems': 1,
            'items': {
                'type': 'array',
                'items': {'type': 'integer', 'minimum': 0},
                'minItems': 2,
                'maxItems': 2
            }
        },
        'modes': {
            'type': 'array',
            'minItems': 1,
            'items': {'enum': ['synth', 'dp', 'random-static', 'none']}
        },
        'trials': {'type': 'integer', 'minimum': 1},
        'study': {'enum': STUDIES},
        'seed': {'type': 'integer', 'minimum': 0},
        'mc_samples': {'type': 'integer', 'minimum': 1},
        'prediction_samples': {'type': 'integer', 'minimum': 1},
        'tolerance': {'type': 'number', 'exclusiveMinimum': 0},
        'tie': {'type': 'object', 'additionalProperties': {'type': 'string'}},
        'synthesis_tie': {'type': 'object', 'additionalProperties': {'type': 'string'}},
        'sweep_param': {'type': 'string'},
        'confidence_method': {'enum': ['exact', 'monte-carlo']},
        'prior': {
            'type': 'object',
            'additionalProperties': {
                'type': 'array',
                'items': {'type': 'number', 'exclusiveMinimum': 0},
                'minItems': 2,
                'maxItems': 2
            }
        }
    },
    'additionalProperties': False
}


class HarnessError(Exception):
    """Custom exception for verification loop and evaluation errors"""
    pass


class UndecidedGroundTruthError(HarnessError):
    """Exception for true parameters inside an undecided cell of the region map"""
    pass


def ground_truth(region, theta):
    """
    1 if theta lies in a satisfied cell, 0 if in a violated one

    Raises:
        UndecidedGroundTruthError: If the covering cell is undecided
    """
    verdict = synthesis_service.membership(region, theta)
    if verdict is Verdict.UNKNOWN:
        raise UndecidedGroundTruthError(
            f'{theta} lies in an undecided cell; synthesise with a smaller tolerance')
    return 1 if verdict is Verdict.SAT else 0


def on_boundary(region, theta, tolerance=1e-9):
    """True when cells of different verdicts meet at theta"""
    values = synthesis_service.coordinates(region, theta)
    verdicts = {v for rect, v in region.cells if rect.contains(values, tolerance)}
    return len(verdicts) > 1


def mse(truth, outcomes):
    """Mean squared error (1/n) sum (truth - g_i)^2"""
    if len(outcomes) == 0:
        raise HarnessError('no outcomes to score')
    return float(sum((truth - g) ** 2 for g in outcomes) / len(outcomes))


def quartiles(values):
    """
    Box-plot statistics: quartiles plus whiskers at the furthest data within 1.5 IQR

    Returns:
        dict: whisker_low, q1, median, q3, whisker_high
    """
    data = np.sort(np.asarray(values, dtype=float))
    if data.size == 0:
        raise HarnessError('no values for quartiles')
    q1, median, q3 = np.percentile(data, [25, 50, 75])
    spread = 1.5 * (q3 - q1)
    low = data[data >= q1 - spread]
    high = data[data <= q3 + spread]
    return {
        'whisker_low': float(low.min()),
        'q1': float(q1),
        'median': float(median),
        'q3': float(q3),
        'whisker_high': float(high.max())
    }


def _has_ambiguous_lineage(expanded):
    return expanded is not None and any(expanded.is_ambiguous(e) for e in expanded.lineage)


def _assess(model, region, prior, current, traces, expanded, samples, seed, method):
    """Posterior and confidence after all traces so far; current is the posterior before the last batch"""
    counts = inference_service.extract_counts(model, traces)
    if not _has_ambiguous_lineage(expanded) or not counts.edge_counts:
        posterior = inference_service.update_posterior(prior, counts)
        estimate = confidence_service.confidence(region, posterior, samples=samples, seed=seed, method=method)
        return posterior, estimate
    completions = inference_service.sample_completions(
        expanded, counts, prior, MONTE_CARLO['completion_samples'], seed, theta_source=current)
    estimate = confidence_service.confidence(region, completions, names=prior.names)
    mean_counts = {
        name: tuple(float(np.mean([c.param_counts[name][k] for c in completions])) for k in (0, 1))
        for name in prior.names
    }
    return inference_service.update_posterior(prior, mean_counts), estimate


def _design(model, region, posterior, mode, length, samples, seed):
    """Action source of one batch and its audit fields"""
    if mode == 'synth':
        report = design_service.synthesise_strategy(model, region, posterior, length, samples, seed)
        return report.strategy, {'strategy': report.strategy.as_dict(), 'gain': report.gain}
    if mode == 'dp':
        result = design_service.offline_dp_strategy(model, region, posterior, samples=samples, seed=seed)
        return result.strategy, {'strategy': result.strategy.as_dict(), 'ties': result.ties}
    return mode, {'strategy': mode}


def run_verification(model, prop, mode, traces, length, theta, seed=None, region=None,
                     prior=None, mc_samples=None, prediction_samples=None, method='exact',
                     synthesis_ties=None, keys=(), audit_path=None):
    """
    One sequential verification run

    Synthesises the feasible set unless a region is given, then for every
    trace: designs an action source, simulates one trace of the true system,
    updates the posterior and records the confidence.

    Args:
        model (Pmdp): model of the system
        prop (ProbabilisticFormula): property to verify
        mode (str): 'synth', 'dp', 'random-static' or 'none'
        traces (int): number of traces (batches); 0 returns the prior confidence
        length (int): trace length
        theta: true parameter point of the simulated system
        audit_path (str): JSON-lines audit log, written even when a batch fails

    Returns:
        RunResult: final confidence, per-batch series (prior first), audit log
    """
    if mode not in STRATEGY_MODES and mode not in DESIGN_MODES:
        raise HarnessError(f'unknown strategy mode {mode}')
    if traces < 0 or length < 1:
        raise HarnessError(f'invalid budget: {traces} traces of length {length}')
    seed = DEFAULT_SEED if seed is None else seed
    if region is None:
        region = synthesis_service.synthesise_region(model, prop, ties=synthesis_ties)
    prior = inference_service.uniform_prior(model) if prior is None else prior
    theta = model_service.point(model, theta)
    expanded = design_service.expansion_of(model)

    posterior = prior
    estimate = confidence_service.confidence(region, prior, samples=mc_samples, seed=seed, method=method)
    result = RunResult(confidence=estimate, series=[estimate.value])
    data = TraceData()
    try:
        for batch in range(traces):
            source, audit = _design(model, region, posterior, mode, length, prediction_samples, seed)
            cfg = SimConfig(theta=theta, length=length, traces=1, seed=seed,
                            action_source=source, keys=tuple(keys) + (batch,))
            batch_data = simulation_service.simulate_traces(model, cfg)
            data = data + batch_data
            posterior, estimate = _assess(model, region, prior, posterior, data, expanded,
                                          mc_samples, seed, method)
            result.confidence = estimate
            result.series.append(estimate.value)
            result.strategies.append(audit['strategy'] if isinstance(audit['strategy'], dict) else None)
            result.total_steps = data.total_steps
            audit.update({'batch': batch, 'confidence': estimate.value,
                          'undecided_mass': estimate.undecided_mass, 'steps': data.total_steps})
            result.audit.append(audit)
            logger.debug(f'Batch {batch}: confidence {estimate.value:.4f}')
    finally:
        if audit_path:
            io_utils.write_jsonl(audit_path, result.audit)
    return result


def _grid_values(grid):
    if isinstance(grid, dict):
        count = int(round((grid['stop'] - grid['start']) / grid['step'])) + 1
        return tuple(round(grid['start'] + i * grid['step'], 10) for i in range(count))
    return tuple(float(v) for v in grid)


def study_defaults(study):
    """Grid, trace budgets, modes and trial count a study runs unless the spec overrides them"""
    if study == 'robustness':
        return {'grid': EXPERIMENT_GRID, 'configurations': ROBUSTNESS_CONFIGURATIONS,
                'modes': STRATEGY_MODES, 'trials': TRIALS}
    if study == 'convergence':
        return {
            'grid': [CONVERGENCE_CONFIG['theta']],
            'configurations': [(CONVERGENCE_CONFIG['traces'], CONVERGENCE_CONFIG['length'])],
            'modes': CONVERGENCE_CONFIG['modes'],
            'trials': CONVERGENCE_CONFIG['trials']
        }
    if study == 'accuracy':
        return {'grid': EXPERIMENT_GRID, 'configurations': TRACE_CONFIGURATIONS,
                'modes': STRATEGY_MODES, 'trials': TRIALS}
    raise HarnessError(f'unknown study {study}, expected one of {STUDIES}')


def load_experiment_spec(path):
    """
    Read and validate an experiment spec; the model path is relative to the spec file

    The optional "study" (accuracy, robustness, convergence) picks the
    defaults for grid, configurations, modes and trials.

    Raises:
        HarnessError: If the document does not match the schema
    """
    document = io_utils.read_json(path)
    try:
        jsonschema.validate(document, EXPERIMENT_SCHEMA)
    except jsonschema.ValidationError as e:
        location = '/'.join(str(p) for p in e.absolute_path) or '<root>'
        raise HarnessError(f'{path}: {location}: {e.message}')
    model_path = document['model']
    if not os.path.isabs(model_path):
        model_path = os.path.join(os.path.dirname(os.path.abspath(path)), model_path)
    study = document.get('study', 'accuracy')
    defaults = study_defaults(study)
    return ExperimentSpec(
        model_path=model_path,
        property_text=document['property'],
        grid=_grid_values(document.get('grid', defaults['grid'])),
        configurations=tuple(tuple(c) for c in document.get('configurations', defaults['configurations'])),
        modes=tuple(document.get('modes', defaults['modes'])),
        trials=document.get('trials', defaults['trials']),
        seed=document.get('seed', DEFAULT_SEED),
        mc_samples=document.get('mc_samples', MONTE_CARLO['samples']),
        prediction_samples=document.get('prediction_samples', DESIGN['prediction_samples']),
        tolerance=document.get('tolerance', SYNTHESIS['tolerance']),
        tie=document.get('tie', {}),
        synthesis_tie=document.get('synthesis_tie', {}),
        sweep_param=document.get('sweep_param', 'theta1'),
        confidence_method=document.get('confidence_method', 'exact'),
        prior=document.get('prior'),
        study=study
    )


def _run_trial(job):
    """One grid trial; module-level so it pickles into worker processes"""
    try:
        run = run_verification(
            job['model'], job['prop'], job['mode'], job['traces'], job['length'], job['theta'],
            seed=job['seed'], region=job['region'], prior=job['prior'],
            mc_samples=job['mc_samples'], prediction_samples=job['prediction_samples'],
            method=job['method']
        )
        return job['key'], run.confidence.value, run.series, None
    except Exception as e:
        return job['key'], None, None, f'{type(e).__name__}: {e}'


def evaluate_grid(spec, threads=None, out_dir=None):
    """
    Run every (theta, mode, traces, length) cell for spec.trials trials

    Trial seeds derive from (seed, trial stream, grid index, mode index,
    configuration index, trial), so results do not depend on scheduling.
    Failing trials are recorded and the grid continues.

    Returns:
        EvalResult: outcomes, ground truths, MSE per cell, convergence series
    """
    threads = THREADS if threads is None else threads
    model = model_service.load_model(spec.model_path)
    prop = pctl_service.parse_property(spec.property_text)
    region = synthesis_service.synthesise_region(model, prop, spec.tolerance, ties=spec.synthesis_tie)
    if spec.prior:
        prior = inference_service.posterior_from_document(
            {**inference_service.uniform_prior(model).as_dict(), **spec.prior}, model.param_names)
    else:
        prior = inference_service.uniform_prior(model)

    result = EvalResult()
    jobs = []
    for g, value in enumerate(spec.grid):
        free = [n for n in model.param_names if n not in spec.tie]
        if free != [spec.sweep_param]:
            raise HarnessError(
                f'the sweep parameter {spec.sweep_param} must be the only untied parameter, free are {free}')
        theta = model_service.untie_point(model, spec.tie, {spec.sweep_param: value})
        named = dict(zip(model.param_names, theta))
        try:
            result.ground_truth[value] = ground_truth(region, named)
            result.boundary[value] = on_boundary(region, named)
        except synthesis_service.SynthesisError as e:
            raise HarnessError(f'theta {value}: {e}')
        except UndecidedGroundTruthError as e:
            logger.warning(str(e))
            result.failures.append({'theta': value, 'error': str(e)})
            continue
        if result.boundary[value]:
            logger.warning(f'theta {value} lies on the boundary of the feasible set')
        for m, mode in enumerate(spec.modes):
            for c, (traces, length) in enumerate(spec.configurations):
                for trial in range(spec.trials):
                    jobs.append({
                        'key': (value, mode, traces, length, trial),
                        'model': model, 'prop': prop, 'region': region, 'prior': prior,
                        'mode': mode, 'traces': traces, 'length': length, 'theta': theta,
                        'seed': derive_seed(spec.seed, STREAM_TRIAL, g, m, c, trial),
                        'mc_samples': spec.mc_samples,
                        'prediction_samples': spec.prediction_samples,
                        'method': spec.confidence_method
                    })

    logger.info(f'Running {len(jobs)} trials on {threads} worker(s)')
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            finished = list(pool.map(_run_trial, jobs, chunksize=max(1, len(jobs) // (threads * 8))))
    else:
        finished = [_run_trial(job) for job in jobs]

    for (value, mode, traces, length, trial), confidence, series, error in sorted(finished, key=lambda f: f[0]):
        cell = (value, mode, traces, length)
        if error is not None:
            logger.warning(f'Trial {trial} of {cell} failed: {error}')
            result.failures.append({'theta': value, 'mode': mode, 'traces': traces,
                                    'len': length, 'trial': trial, 'error': error})
            continue
        result.outcomes.setdefault(cell, []).append(confidence)
        result.series.setdefault(cell, []).append(series)
    for cell, outcomes in result.outcomes.items():
        result.mse[cell] = mse(result.ground_truth[cell[0]], outcomes)

    if out_dir:
        write_results(result, out_dir)
    return result


def write_results(result, out_dir):
    """results.csv (one row per trial) and series.csv (one row per batch)"""
    rows, series_rows = [], []
    for cell in sorted(result.outcomes):
        value, mode, traces, length = cell
        for trial, confidence in enumerate(result.outcomes[cell]):
            rows.append([value, mode, traces, length, trial, confidence, result.mse[cell]])
        for trial, series in enumerate(result.series.get(cell, [])):
            for batch, confidence in enumerate(series):
                series_rows.append([value, mode, traces, length, trial, batch, confidence])
    io_utils.write_csv(os.path.join(out_dir, 'results.csv'), RESULTS_HEADER, rows)
    io_utils.write_csv(os.path.join(out_dir, 'series.csv'), SERIES_HEADER, series_rows)
    if result.failures:
        io_utils.write_jsonl(os.path.join(out_dir, 'failures.jsonl'), result.failures)


def read_results(out_dir):
    """Rebuild an EvalResult from results.csv and, when present, series.csv"""
    result = EvalResult()
    for row in io_utils.read_csv(os.path.join(out_dir, 'results.csv')):
        cell = (float(row['theta']), row['mode'], int(row['traces']), int(row['len']))
        result.outcomes.setdefault(cell, []).append(float(row['confidence']))
        result.mse[cell] = float(row['mse_cell'])
    series_path = os.path.join(out_dir, 'series.csv')
    if os.path.exists(series_path):
        runs = {}
        for row in io_utils.read_csv(series_path):
            cell = (float(row['theta']), row['mode'], int(row['traces']), int(row['len']))
            runs.setdefault(cell, {}).setdefault(int(row['trial']), []).append(float(row['confidence']))
        result.series = {cell: [trials[t] for t in sorted(trials)] for cell, trials in runs.items()}
    return result


def _mse_script(data_file, modes):
    plots = ', '.join(
        f"'{data_file}' using 1:(strcol(2) eq '{mode}' ? $3 : 1/0) with linespoints title '{mode}'"
        for mode in modes
    )
    return (
        "set datafile separator ','\n"
        "set key autotitle columnhead\n"
        "set xlabel 'theta'\n"
        "set ylabel 'MSE'\n"
        f"set output '{data_file[:-4]}.png'\n"
        "set terminal png size 800,500\n"
        f"plot {plots}\n"
    )


def _convergence_script(data_file):
    return (
        "set datafile separator ','\n"
        "set xlabel 'traces'\n"
        "set ylabel 'confidence'\n"
        "set yrange [0:1]\n"
        "set boxwidth 0.4\n"
        f"set output '{data_file[:-4]}.png'\n"
        "set terminal png size 800,500\n"
        f"plot '{data_file}' using 2:4:3:7:6 with candlesticks whiskerbars title 'IQR', \\\n"
        f"     '' using 2:5:5:5:5 with candlesticks notitle\n"
    )


def emit_plots(result, out_dir):
    """
    MSE tables, convergence quartile tables and a gnuplot script per figure

    Returns:
        list: paths written

    Raises:
        HarnessError: If the result holds no outcomes
    """
    if result.is_empty():
        raise HarnessError('nothing to plot: the evaluation result is empty')
    written = []
    configurations = sorted({(cell[2], cell[3]) for cell in result.mse})
    for traces, length in configurations:
        name = MSE_FILE_PATTERN.format(traces=traces, length=length)
        cells = sorted(c for c in result.mse if (c[2], c[3]) == (traces, length))
        rows = [[c[0], c[1], result.mse[c], int(result.boundary.get(c[0], False))] for c in cells]
        path = os.path.join(out_dir, name)
        io_utils.write_csv(path, ['theta', 'mode', 'mse', 'boundary'], rows)
        script = os.path.join(out_dir, name[:-4] + '.gp')
        io_utils.write_text(script, _mse_script(name, sorted({c[1] for c in cells})))
        written += [path, script]

    groups = sorted({(cell[1], cell[2], cell[3]) for cell in result.series})
    for mode, traces, length in groups:
        name = CONVERGENCE_FILE_PATTERN.format(mode=mode, traces=traces, length=length)
        rows = []
        for cell in sorted(c for c in result.series if (c[1], c[2], c[3]) == (mode, traces, length)):
            runs = np.array(result.series[cell], dtype=float)
            for batch in range(runs.shape[1]):
                stats = quartiles(runs[:, batch])
                rows.append([cell[0], batch, stats['whisker_low'], stats['q1'], stats['median'],
                             stats['q3'], stats['whisker_high']])
        path = os.path.join(out_dir, name)
        io_utils.write_csv(path, ['theta', 'batch', 'whisker_low', 'q1', 'median', 'q3', 'whisker_high'], rows)
        script = os.path.join(out_dir, name[:-4] + '.gp')
        io_utils.write_text(script, _convergence_script(name))
        written += [path, script]
    logger.info(f'Wrote {len(written)} plot files to {out_dir}')
    return written
