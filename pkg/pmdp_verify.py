"""
Main entry point - routes pmdp-verify subcommands to the service layer
Statistical verification of partially-known systems modelled as parametric MDPs
"""
import argparse
import logging
import sys

import numpy as np

from config.settings import DEFAULT_SEED, DESIGN, EXIT_CODES, LOG_FORMAT, LOG_LEVEL, MONTE_CARLO, THREADS
from models.data import SimConfig
from models.results import Strategy
from services import (
    confidence_service,
    design_service,
    harness_service,
    inference_service,
    model_service,
    pctl_service,
    simulation_service,
    synthesis_service,
    transform_service,
)
from utils import error_handler, io_utils, response_utils

logger = logging.getLogger('pmdp_verify')


class UsageError(Exception):
    """Custom exception for invalid command-line usage"""
    pass


def _pairs(items, what):
    """'a=b' strings to a dict"""
    pairs = {}
    for item in items or []:
        name, sep, value = item.partition('=')
        if not sep or not name or not value:
            raise UsageError(f'{what} must look like name=value, got {item!r}')
        pairs[name.strip()] = value.strip()
    return pairs


def _names(text):
    """'theta1,theta2' to a list, None when absent"""
    if not text:
        return None
    return [n.strip() for n in text.split(',') if n.strip()]


def parse_theta(text, model):
    """'0.7,0.7' (parameter order) or 'theta1=0.7,theta2=0.7'"""
    parts = [p.strip() for p in text.split(',') if p.strip()]
    try:
        if all('=' in p for p in parts):
            return model_service.point(model, {k: float(v) for k, v in _pairs(parts, 'theta').items()})
        return model_service.point(model, [float(p) for p in parts])
    except ValueError as e:
        raise UsageError(f'invalid parameter point {text!r}: {e}')


def _strategy_from_file(path, model):
    mapping = io_utils.read_json(path)
    mapping = mapping.get('strategy', mapping)
    missing = [s for s in model.states if s not in mapping]
    if missing:
        raise UsageError(f'strategy file lacks states {missing}')
    return Strategy.of(mapping, model.states)


def _emit(args, data, message, artifact=None):
    """Write the artifact to --out when given, then print the payload"""
    if artifact is not None and args.out:
        io_utils.write_json(args.out, artifact)
    print(response_utils.dumps(response_utils.success_response(data, message)))
    return EXIT_CODES['OK']


def handle_synth(args):
    logger.info('Routing to region synthesis')
    model = model_service.load_model(args.model)
    prop = pctl_service.parse_property(args.property)
    region = synthesis_service.synthesise_region(
        model, prop, tolerance=args.tol, budget=args.budget, ties=_pairs(args.tie, 'tie'))
    document = synthesis_service.region_document(region)
    summary = {
        'params': list(region.params),
        'rectangles': len(region.cells),
        'satisfied_volume': region.satisfied_volume,
        'undecided_volume': region.undecided_volume,
        'satisfied_interval': synthesis_service.satisfied_interval(region) if region.dimension == 1 else None
    }
    artifact = synthesis_service.region_rects(region) if args.bare else document
    return _emit(args, summary if args.out else document, 'Region synthesised', artifact)


def handle_expand(args):
    logger.info('Routing to model expansion')
    model = model_service.load_model(args.model)
    expanded = transform_service.expand(model)
    document = transform_service.expanded_document(expanded)
    summary = {
        'fresh_states': list(expanded.fresh_states),
        'tied_rows': [list(r) for r in expanded.tied_rows],
        'normal_form': transform_service.is_normal_form(expanded)
    }
    return _emit(args, summary if args.out else document, 'Model expanded', document)


def handle_simulate(args):
    logger.info('Routing to trace simulation')
    model = model_service.load_model(args.model)
    source = _strategy_from_file(args.strategy, model) if args.strategy else args.mode
    cfg = SimConfig(theta=parse_theta(args.theta, model), length=args.len, traces=args.traces,
                    seed=args.seed, action_source=source)
    traces = simulation_service.simulate_traces(model, cfg)
    if args.out:
        simulation_service.save_traces(traces, args.out)
        data = {'traces': len(traces), 'steps': traces.total_steps, 'path': args.out}
    else:
        data = {'traces': [[list(step) for step in trace] for trace in traces.traces]}
    return _emit(args, data, 'Traces simulated')


def handle_infer(args):
    logger.info('Routing to posterior inference')
    model = model_service.load_model(args.model)
    prior = inference_service.load_posterior(args.prior, model.param_names) if args.prior \
        else inference_service.uniform_prior(model)
    counts = inference_service.extract_counts(model, inference_service.load_traces(args.traces))
    posterior = inference_service.update_posterior(prior, counts)
    data = {'posterior': posterior.as_dict(),
            'counts': {n: list(c) for n, c in counts.param_counts.items()}}
    if args.completions:
        expanded = transform_service.expand(model)
        completions = inference_service.sample_completions(
            expanded, counts, prior, args.completions, args.seed, theta_source=posterior)
        data['completion_samples'] = {
            'params': list(prior.names),
            'theta': [list(c.theta) for c in completions]
        }
    return _emit(args, data, 'Posterior computed', data)


def handle_confidence(args):
    logger.info('Routing to confidence computation')
    region = synthesis_service.load_region(args.region, _names(args.params))
    document = io_utils.read_json(args.posterior)
    if 'completion_samples' in document:
        samples = document['completion_samples']
        estimate = confidence_service.confidence_from_samples(
            region, np.asarray(samples['theta'], dtype=float), names=samples['params'])
    else:
        posterior = inference_service.posterior_from_document(document.get('posterior', document))
        estimate = confidence_service.confidence(
            region, posterior, samples=args.mc_samples, seed=args.seed, method=args.method)
    return _emit(args, estimate.as_dict(), 'Confidence computed', estimate.as_dict())


def handle_design(args):
    logger.info(f'Routing to strategy design ({args.mode})')
    model = model_service.load_model(args.model)
    region = synthesis_service.load_region(args.region, _names(args.params))
    posterior = inference_service.load_posterior(args.posterior, model.param_names) if args.posterior \
        else inference_service.uniform_prior(model)
    if args.mode == 'synth':
        data = design_service.synthesise_strategy(
            model, region, posterior, args.trace_len, args.mc_samples, args.seed, args.method).as_dict()
    elif args.mode == 'dp':
        data = design_service.offline_dp_strategy(
            model, region, posterior, args.discount, args.mc_samples, args.seed, args.method).as_dict()
    else:
        source = design_service.baseline_strategies(model, args.mode, args.seed)
        data = {'strategy': args.mode}
        if isinstance(source, design_service.RandomStaticSource):
            data['strategy'] = source.strategy_for(0).as_dict()
    return _emit(args, data, 'Strategy designed', data)


def handle_run(args):
    logger.info(f'Routing to verification run ({args.mode})')
    model = model_service.load_model(args.model)
    prop = pctl_service.parse_property(args.property)
    theta = parse_theta(args.theta, model)
    result = harness_service.run_verification(
        model, prop, args.mode, args.traces, args.len, theta, seed=args.seed,
        mc_samples=args.mc_samples, method=args.method,
        synthesis_ties=_pairs(args.tie, 'tie'), audit_path=args.audit)
    data = {
        'confidence': result.confidence.as_dict(),
        'series': result.series,
        'total_steps': result.total_steps
    }
    return _emit(args, data, 'Verification run finished', data)


def handle_eval(args):
    logger.info('Routing to grid evaluation')
    if not args.out:
        raise UsageError('eval needs --out DIR')
    spec = harness_service.load_experiment_spec(args.spec)
    result = harness_service.evaluate_grid(spec, threads=args.threads, out_dir=args.out)
    written = harness_service.emit_plots(result, args.out) if not result.is_empty() else []
    data = {
        'cells': len(result.mse),
        'failures': len(result.failures),
        'files': sorted(written)
    }
    print(response_utils.dumps(response_utils.success_response(data, 'Evaluation finished')))
    return EXIT_CODES['OK']


def handle_check(args):
    logger.info('Routing to model checking')
    model = model_service.load_model(args.model)
    prop = pctl_service.parse_property(args.property)
    mdp = model_service.instantiate(model, parse_theta(args.theta, model))
    data = pctl_service.check(mdp, prop)
    return _emit(args, data, 'Model checked', data)


def handle_plots(args):
    logger.info('Routing to plot emission')
    result = harness_service.read_results(args.results)
    written = harness_service.emit_plots(result, args.out or args.results)
    print(response_utils.dumps(response_utils.success_response({'files': sorted(written)}, 'Plots written')))
    return EXIT_CODES['OK']


HANDLERS = {
    'synth': handle_synth,
    'expand': handle_expand,
    'simulate': handle_simulate,
    'infer': handle_infer,
    'confidence': handle_confidence,
    'design': handle_design,
    'run': handle_run,
    'eval': handle_eval,
    'check': handle_check,
    'plots': handle_plots
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--seed', type=int, default=DEFAULT_SEED)
    common.add_argument('--mc-samples', '--samples', dest='mc_samples', type=int, default=MONTE_CARLO['samples'])
    common.add_argument('--threads', type=int, default=THREADS)
    common.add_argument('--out')
    common.add_argument('--verbose', action='store_true')

    parser = argparse.ArgumentParser(prog='pmdp-verify', description=__doc__.strip().splitlines()[-1])
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('synth', parents=[common], help='synthesise the feasible parameter set')
    p.add_argument('--model', required=True)
    p.add_argument('--property', '--prop', dest='property', required=True)
    p.add_argument('--tol', type=float)
    p.add_argument('--budget', type=float)
    p.add_argument('--tie', action='append', help='tied=source, e.g. theta2=theta1')
    p.add_argument('--bare', action='store_true', help='write only the [{lo, hi, verdict}] list')

    p = sub.add_parser('expand', parents=[common], help='split transitions and states')
    p.add_argument('--model', required=True)

    p = sub.add_parser('simulate', parents=[common], help='simulate traces of the true system')
    p.add_argument('--model', required=True)
    p.add_argument('--theta', required=True)
    p.add_argument('--traces', type=int, default=1)
    p.add_argument('--len', type=int, default=10)
    p.add_argument('--strategy', help='JSON strategy map')
    p.add_argument('--mode', choices=['random-static', 'none'], default='none')

    p = sub.add_parser('infer', parents=[common], help='posterior from traces')
    p.add_argument('--model', required=True)
    p.add_argument('--traces', required=True)
    p.add_argument('--prior')
    p.add_argument('--completions', type=int, default=0)

    p = sub.add_parser('confidence', parents=[common], help='posterior mass of the feasible set')
    p.add_argument('--region', required=True)
    p.add_argument('--params', help='names of a bare region list, e.g. theta1,theta2')
    p.add_argument('--posterior', required=True)
    p.add_argument('--method', choices=['monte-carlo', 'exact'], default='monte-carlo')

    p = sub.add_parser('design', parents=[common], help='choose the data-collection strategy')
    p.add_argument('--model', required=True)
    p.add_argument('--region', required=True)
    p.add_argument('--params', help='names of a bare region list, e.g. theta1,theta2')
    p.add_argument('--posterior')
    p.add_argument('--trace-len', type=int, default=10)
    p.add_argument('--mode', choices=['synth', 'dp', 'random-static', 'none'], default='synth')
    p.add_argument('--discount', type=float, default=DESIGN['discount'])
    p.add_argument('--method', choices=['monte-carlo', 'exact'], default=DESIGN['prediction_method'])

    p = sub.add_parser('run', parents=[common], help='one sequential verification run')
    p.add_argument('--model', required=True)
    p.add_argument('--property', '--prop', dest='property', required=True)
    p.add_argument('--theta', required=True)
    p.add_argument('--mode', choices=['synth', 'dp', 'random-static', 'none'], default='synth')
    p.add_argument('--traces', type=int, default=10)
    p.add_argument('--len', type=int, default=10)
    p.add_argument('--tie', action='append', help='synthesis tie, e.g. theta2=theta1')
    p.add_argument('--method', choices=['monte-carlo', 'exact'], default='exact')
    p.add_argument('--audit', help='JSON-lines audit log')

    p = sub.add_parser('eval', parents=[common], help='run an experiment grid')
    p.add_argument('--spec', required=True)

    p = sub.add_parser('check', parents=[common], help='model-check M(theta)')
    p.add_argument('--model', required=True)
    p.add_argument('--property', '--prop', dest='property', required=True)
    p.add_argument('--theta', required=True)

    p = sub.add_parser('plots', parents=[common], help='plot scripts from results.csv')
    p.add_argument('--results', required=True, help='directory holding results.csv')
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(stream=sys.stderr, format=LOG_FORMAT,
                        level=logging.DEBUG if args.verbose else LOG_LEVEL, force=True)
    if args.mc_samples is not None and args.mc_samples < 1:
        parser.error('--mc-samples must be positive')

    try:
        return HANDLERS[args.command](args)
    except UsageError as e:
        error_handler.log_error_details(e, vars(args))
        print(response_utils.dumps(response_utils.error_response(EXIT_CODES['USAGE_ERROR'], str(e))))
        return EXIT_CODES['USAGE_ERROR']
    except Exception as e:
        exit_code, payload = error_handler.handle_error(e, {'command': args.command, **vars(args)})
        print(response_utils.dumps(payload))
        return exit_code


if __name__ == '__main__':
    sys.exit(main())
