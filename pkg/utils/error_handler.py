"""
Error handling utilities for the command-line entry point
Maps service exceptions to exit codes and consistent error payloads
"""
import logging
import traceback

from config.settings import EXIT_CODES
from services.confidence_service import ConfidenceError
from services.design_service import DesignError, EnumerationCapError
from services.harness_service import HarnessError, UndecidedGroundTruthError
from services.inference_service import DataConsistencyError, InferenceError
from services.model_service import ModelError, ParameterRangeError
from services.pctl_service import CheckerError, PropertyError
from services.simulation_service import SimulationError
from services.synthesis_service import OutsideParamSpaceError, SynthesisError
from services.transform_service import TransformError
from utils.io_utils import StorageError
from utils.response_utils import error_response

logger = logging.getLogger(__name__)

# Most specific classes first
ERROR_MAP = [
    (UndecidedGroundTruthError, 'UNDECIDED', 'True parameters lie in an undecided cell'),
    (EnumerationCapError, 'USAGE_ERROR', 'Strategy space too large to enumerate'),
    (ParameterRangeError, 'INPUT_ERROR', 'Invalid parameter point'),
    (OutsideParamSpaceError, 'INPUT_ERROR', 'Parameter point outside the mapped box'),
    (DataConsistencyError, 'INPUT_ERROR', 'Trace data inconsistent with the model'),
    (ModelError, 'INPUT_ERROR', 'Invalid model'),
    (PropertyError, 'INPUT_ERROR', 'Invalid property'),
    (TransformError, 'INPUT_ERROR', 'Model cannot be expanded'),
    (StorageError, 'STORAGE_ERROR', 'File error'),
    (CheckerError, 'NUMERICAL_ERROR', 'Model checking failed'),
    (SynthesisError, 'NUMERICAL_ERROR', 'Region synthesis failed'),
    (InferenceError, 'NUMERICAL_ERROR', 'Inference failed'),
    (ConfidenceError, 'NUMERICAL_ERROR', 'Confidence computation failed'),
    (DesignError, 'NUMERICAL_ERROR', 'Strategy design failed'),
    (SimulationError, 'INPUT_ERROR', 'Invalid simulation settings'),
    (HarnessError, 'INPUT_ERROR', 'Experiment failed')
]


def classify_error(error):
    """
    Exit code name and user-facing message for an exception

    Returns:
        tuple: (EXIT_CODES key, message)
    """
    for error_class, code, message in ERROR_MAP:
        if isinstance(error, error_class):
            return code, message
    return 'INTERNAL_ERROR', 'Internal error'


def handle_error(error, context=None):
    """
    Log an error and build its payload

    Args:
        error: Exception raised by a command handler
        context (dict): command name and arguments (optional)

    Returns:
        tuple: (exit code, error payload)
    """
    code, message = classify_error(error)
    log_error_details(error, context)
    exit_code = EXIT_CODES[code]
    details = {'error': str(error), 'type': type(error).__name__}
    if code == 'INTERNAL_ERROR':
        details = {'type': type(error).__name__}
    return exit_code, error_response(exit_code, message, error_details=details)


def log_error_details(error, context=None):
    """
    Log detailed error information for debugging

    Args:
        error: Exception object
        context (dict): command context (optional)
    """
    logger.error(f'{type(error).__name__}: {error}')
    if context:
        logger.debug(f'Command context: {context}')
    logger.debug(f'Stack trace: {traceback.format_exc()}')
