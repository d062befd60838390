"""
Seeded random number generation

Every stochastic operation draws from numpy's Philox-4x64 counter-based
generator keyed by SeedSequence([seed, *keys]). Derived keys give independent
streams per sample, trace or trial, so results do not depend on scheduling.
"""
import numpy as np

from config.settings import DEFAULT_SEED

# Stream namespaces, used as the first derived key
STREAM_SIMULATION = 2
STREAM_COMPLETION = 3
STREAM_POSTERIOR = 4
STREAM_CONFIDENCE = 5
STREAM_BASELINE = 7
STREAM_TRIAL = 8


def make_rng(seed=None, *keys):
    """
    Create a generator for (seed, *keys)

    Args:
        seed (int): base seed, DEFAULT_SEED when None
        *keys (int): derived stream keys

    Returns:
        numpy.random.Generator
    """
    base = DEFAULT_SEED if seed is None else int(seed)
    entropy = [base] + [int(k) for k in keys]
    if any(v < 0 for v in entropy):
        raise ValueError(f'seed and keys must be non-negative, got {entropy}')
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def derive_seed(seed, *keys):
    """Single 63-bit integer seed derived from (seed, *keys)"""
    base = DEFAULT_SEED if seed is None else int(seed)
    state = np.random.SeedSequence([base] + [int(k) for k in keys]).generate_state(2, np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1]))
