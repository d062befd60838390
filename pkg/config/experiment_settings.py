# config/experiment_settings.py
"""
Evaluation harness configuration
Default experiment grid, trace budgets and strategy modes per study

Change it :
1   PMDP_TRIALS            (trials per grid cell)
2   EXPERIMENT_GRID        (system parameter values)
3   TRACE_CONFIGURATIONS   (traces, trace length)
"""
import os

# Simulated system parameter values (0.15 .. 0.75 step 0.05)
EXPERIMENT_GRID = [round(0.15 + 0.05 * i, 2) for i in range(13)]

# (trace count, trace length) pairs
TRACE_CONFIGURATIONS = [(10, 2), (10, 10)]

# Equal total data, different splits into traces
ROBUSTNESS_CONFIGURATIONS = [
    (2, 20), (4, 10), (5, 8), (8, 5), (10, 2), (10, 10), (100, 10)
]

STRATEGY_MODES = ['synth', 'random-static', 'none']

# Trials per (theta, mode, traces, length) cell
TRIALS = int(os.environ.get('PMDP_TRIALS', 100))

# Convergence study
CONVERGENCE_CONFIG = {
    'theta': 0.7,
    'traces': 20,
    'length': 10,
    'trials': 50,
    'modes': ['synth', 'none']
}

STUDIES = ['accuracy', 'robustness', 'convergence']

# CSV layout
RESULTS_HEADER = ['theta', 'mode', 'traces', 'len', 'trial', 'confidence', 'mse_cell']
MSE_FILE_PATTERN = 'mse_t{traces:02d}_l{length:02d}.csv'
CONVERGENCE_FILE_PATTERN = 'convergence_{mode}_t{traces:02d}_l{length:02d}.csv'
