"""
Confidence service - posterior mass of the feasible set
Monte-Carlo membership counting, exact rectangle integration and the Beta oracle
"""
import logging

import numpy as np
from scipy.special import betainc

from config.settings import MONTE_CARLO
from models.data import DirichletPosterior
from models.region import Verdict
from models.results import ConfidenceEstimate
from utils.rng_utils import STREAM_CONFIDENCE, make_rng
from utils.special import SpecialFunctionError, beta_interval_mass

logger = logging.getLogger(__name__)

SAT_CODE = list(Verdict).index(Verdict.SAT)
UNKNOWN_CODE = list(Verdict).index(Verdict.UNKNOWN)


class ConfidenceError(Exception):
    """Custom exception for confidence computation errors"""
    pass


def _restrict(region, posterior):
    missing = [n for n in region.params if n not in posterior.names]
    if missing:
        raise ConfidenceError(f'posterior lacks parameters {missing} of the region map')
    return posterior.restrict(region.params)


def _inside(region, points):
    lower, upper = np.asarray(region.lower), np.asarray(region.upper)
    return np.all((points >= lower) & (points <= upper), axis=1)


def _draw_in_box(region, posterior, samples, rng):
    """Beta draws restricted to the mapped box by rejection; returns (points, rejected)"""
    kept = np.empty((0, region.dimension))
    rejected = 0
    for _ in range(MONTE_CARLO['max_redraw_rounds']):
        needed = samples - len(kept)
        if needed <= 0:
            break
        draws = rng.beta(posterior.alpha, posterior.beta, size=(needed, region.dimension))
        mask = _inside(region, draws)
        rejected += int(np.count_nonzero(~mask))
        kept = np.vstack([kept, draws[mask]])
    if len(kept) < samples:
        raise ConfidenceError(
            f'only {len(kept)} of {samples} posterior samples fell inside the mapped box')
    if rejected:
        logger.warning(f'Rejected and redrew {rejected} posterior samples outside the mapped box')
    return kept[:samples], rejected


def _count(region, points, rejected, method):
    codes = region.verdict_codes(points)
    n = len(points)
    value = float(np.count_nonzero(codes == SAT_CODE)) / n
    undecided = float(np.count_nonzero(codes == UNKNOWN_CODE)) / n
    return ConfidenceEstimate(value=value, samples=n, undecided_mass=undecided,
                              method=method, rejected=rejected)


def confidence(region, source, samples=None, seed=None, method='monte-carlo', names=None):
    """
    Posterior probability that the parameters lie in the satisfied cells

    Args:
        region (FeasibleRegionMap): synthesised feasible set
        source: DirichletPosterior, or an (N, d) array / list of CompletionSample
            with coordinates over names
        samples (int): Monte-Carlo sample count
        seed (int): base seed
        method (str): 'monte-carlo' or 'exact' (product-of-Beta posteriors only)

    Returns:
        ConfidenceEstimate: value, sample count and undecided mass

    Raises:
        ConfidenceError: If samples is zero or the source does not cover the region parameters
    """
    if method == 'exact':
        if not isinstance(source, DirichletPosterior):
            raise ConfidenceError('exact integration needs a product-of-Beta posterior')
        return exact_confidence(region, source)
    if method != 'monte-carlo':
        raise ConfidenceError(f'unknown confidence method {method}')
    if not isinstance(source, DirichletPosterior):
        return confidence_from_samples(region, source, names=names)
    samples = MONTE_CARLO['samples'] if samples is None else samples
    if samples <= 0:
        raise ConfidenceError(f'sample count must be positive, got {samples}')
    rng = make_rng(seed, STREAM_CONFIDENCE)
    points, rejected = _draw_in_box(region, _restrict(region, source), samples, rng)
    estimate = _count(region, points, rejected, 'monte-carlo')
    logger.debug(f'Monte-Carlo confidence {estimate.value:.4f} from {samples} samples')
    return estimate


def confidence_from_samples(region, samples, names=None):
    """
    Confidence from precomputed joint samples (e.g. completion-based)

    Samples outside the mapped box cannot be redrawn here; they are dropped
    and counted as rejected.
    """
    if not isinstance(samples, np.ndarray):
        samples = np.array([getattr(s, 'theta', s) for s in samples], dtype=float)
    if samples.ndim != 2 or len(samples) == 0:
        raise ConfidenceError('no samples given')
    if names is not None:
        columns = [list(names).index(n) for n in region.params]
        samples = samples[:, columns]
    elif samples.shape[1] != region.dimension:
        raise ConfidenceError(
            f'samples have {samples.shape[1]} coordinates, region has {region.dimension}; '
            f'pass the sample parameter names')
    mask = _inside(region, samples)
    rejected = int(np.count_nonzero(~mask))
    if rejected:
        logger.warning(f'Dropped {rejected} samples outside the mapped box')
    if rejected == len(samples):
        raise ConfidenceError('every sample lies outside the mapped box')
    return _count(region, samples[mask], rejected, 'samples')


def exact_confidence(region, posterior):
    """
    Exact posterior mass of the satisfied cells for independent Beta marginals

    Each rectangle contributes the product over parameters of
    I_hi(a, b) - I_lo(a, b); the result is normalised by the mass of the box.
    """
    posterior = _restrict(region, posterior)
    a, b = posterior.alpha, posterior.beta
    lows, highs, codes = region.cell_arrays
    masses = np.prod(betainc(a, b, highs) - betainc(a, b, lows), axis=1)
    box = float(np.prod(betainc(a, b, np.asarray(region.upper)) - betainc(a, b, np.asarray(region.lower))))
    if box <= 0:
        raise ConfidenceError('posterior puts no mass on the mapped box')
    value = float(np.clip(masses[codes == SAT_CODE].sum() / box, 0.0, 1.0))
    undecided = float(np.clip(masses[codes == UNKNOWN_CODE].sum() / box, 0.0, 1.0))
    return ConfidenceEstimate(value=value, samples=0, undecided_mass=undecided, method='exact')


def confidence_beta_oracle(mu, interval):
    """
    Beta(a, b) mass of [lo, hi] by continued-fraction incomplete beta

    Raises:
        ConfidenceError: For non-positive shapes or an invalid interval
    """
    a, b = mu
    lo, hi = interval
    if not (a > 0 and b > 0):
        raise ConfidenceError(f'shape parameters must be positive, got ({a}, {b})')
    if not 0 <= lo <= hi <= 1:
        raise ConfidenceError(f'invalid interval [{lo}, {hi}]')
    try:
        return beta_interval_mass(a, b, lo, hi)
    except SpecialFunctionError as e:
        raise ConfidenceError(str(e))
