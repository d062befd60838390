"""
Output formatting utilities
Handles JSON encoding of results and the success / error payloads printed by the CLI
"""
import json
from enum import Enum
from fractions import Fraction

import numpy as np


class NumpyEncoder(json.JSONEncoder):
    """
    Custom JSON encoder for result types that are not natively JSON serializable

    Handles:
    - numpy scalars and arrays returned by the numerical services
    - Fraction: exact model coefficients, rendered as 'n/d' strings
    - Enum: verdicts and comparison operators, rendered by value
    - tuple-keyed dicts are flattened by the callers before encoding
    """
    def default(self, obj):
        if isinstance(obj, np.integer):
            return int(obj)
        elif isinstance(obj, np.floating):
            return float(obj)
        elif isinstance(obj, np.ndarray):
            return obj.tolist()
        elif isinstance(obj, Fraction):
            return str(obj)
        elif isinstance(obj, Enum):
            return obj.value
        elif isinstance(obj, (set, frozenset)):
            return sorted(obj)
        return super(NumpyEncoder, self).default(obj)


def dumps(body, indent=2):
    """Deterministic JSON text: sorted keys, repr-exact floats"""
    return json.dumps(body, cls=NumpyEncoder, sort_keys=True, indent=indent)


def success_response(data, message='Operation completed successfully'):
    """
    Build the payload for a successful command

    Args:
        data (dict): Result data
        message (str): Status message

    Returns:
        dict: payload with status 'ok'
    """
    return {'status': 'ok', 'message': message, **data}


def error_response(exit_code, message, error_details=None):
    """
    Build the payload for a failed command

    Args:
        exit_code (int): Process exit code the CLI will return
        message (str): User-facing error message
        error_details (dict): Additional error information (optional)

    Returns:
        dict: payload with status 'error'
    """
    body = {'status': 'error', 'exitCode': exit_code, 'message': message}

    if error_details:
        body['details'] = error_details

    return body


def edge_key(edge):
    """Flatten an (s, a, s') key for JSON objects"""
    return '|'.join(edge)
