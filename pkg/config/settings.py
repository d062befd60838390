"""
Configuration settings for the pMDP verification toolkit
Centralizes numerical tolerances, sampling budgets and runtime options
"""
import os


def _env_float(name, default):
    return float(os.environ.get(name, default))


def _env_int(name, default):
    return int(float(os.environ.get(name, default)))


# Environment variables
LOG_LEVEL = os.environ.get('PMDP_LOG_LEVEL', 'WARNING').upper()
LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'
DEFAULT_SEED = _env_int('PMDP_SEED', 7)
THREADS = _env_int('PMDP_THREADS', 1)

# Value iteration for min-until probabilities (Gauss-Seidel, fixed state order)
VALUE_ITERATION = {
    'tolerance': _env_float('PMDP_VI_TOLERANCE', 1e-9),      # sup-norm residual
    'max_iterations': _env_int('PMDP_VI_MAX_ITERATIONS', 10**6)
}

# Adaptive bisection of the parameter space
SYNTHESIS = {
    'tolerance': _env_float('PMDP_SYNTH_TOLERANCE', 1e-3),   # per-dimension width
    'undecided_budget': _env_float('PMDP_SYNTH_BUDGET', 0.02),  # volume fraction
    'margin_factor': 2.0,          # decided only if |value - p| > factor * spread
    'propagation_passes': 8        # bound propagation sweeps for the valid sub-box
}

# Monte-Carlo integration of the posterior over the feasible set
MONTE_CARLO = {
    'samples': _env_int('PMDP_MC_SAMPLES', 100000),
    'max_redraw_rounds': 50,       # rejection rounds for samples outside the box
    'completion_retries': 100,     # theta-hat redraws on zero-probability splits
    'completion_samples': _env_int('PMDP_COMPLETION_SAMPLES', 2000)
}

# Experiment design
DESIGN = {
    'prediction_samples': _env_int('PMDP_PREDICTION_SAMPLES', 10000),
    'prediction_method': os.environ.get('PMDP_PREDICTION_METHOD', 'exact'),
    'enumeration_cap': _env_int('PMDP_ENUMERATION_CAP', 10**6),
    'discount': _env_float('PMDP_DISCOUNT', 0.95),
    'dp_tolerance': 1e-12,
    'dp_max_iterations': 100000,
    'tie_tolerance': _env_float('PMDP_TIE_TOLERANCE', 1e-9),
    'reference_max_horizon': 3
}

# Transform / verification tolerances
EQUIVALENCE_TOLERANCE = 1e-6
ROW_SUM_TOLERANCE = 1e-12

# Prior hyperparameters (uniform Beta per parameter)
DEFAULT_PRIOR = (1.0, 1.0)

# Reserved label for fresh states introduced by model expansion
AUX_LABEL = '__aux'
AUX_ACTION = '__aux'

# CLI exit codes
EXIT_CODES = {
    'OK': 0,
    'INTERNAL_ERROR': 1,
    'USAGE_ERROR': 2,
    'INPUT_ERROR': 3,
    'NUMERICAL_ERROR': 4,
    'UNDECIDED': 5,
    'STORAGE_ERROR': 6
}
