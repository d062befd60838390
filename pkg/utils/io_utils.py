"""
Persistence utilities for model, region, trace, posterior and result files
Handles all file interactions with proper error handling
"""
import csv
import json
import logging
import os

import numpy as np

from utils.response_utils import NumpyEncoder

logger = logging.getLogger(__name__)


class StorageError(Exception):
    """Custom exception for file storage errors"""
    pass


class StorageNotFoundError(StorageError):
    """Exception for missing files"""
    pass


class StorageFormatError(StorageError):
    """Exception for files that cannot be decoded"""
    pass


def _ensure_parent(path):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


def read_text(path):
    """
    Read a UTF-8 text file

    Raises:
        StorageNotFoundError: If the file doesn't exist
        StorageError: For other I/O errors
    """
    try:
        with open(path, encoding='utf-8') as handle:
            return handle.read()
    except FileNotFoundError:
        raise StorageNotFoundError(f'File not found: {path}')
    except UnicodeDecodeError as e:
        raise StorageFormatError(f'{path} is not valid UTF-8: {e}')
    except OSError as e:
        raise StorageError(f'Cannot read {path}: {e}')


def write_text(path, text):
    try:
        _ensure_parent(path)
        with open(path, 'w', encoding='utf-8', newline='\n') as handle:
            handle.write(text)
        logger.debug(f'Wrote {path}')
    except OSError as e:
        raise StorageError(f'Cannot write {path}: {e}')


def read_json(path):
    """
    Read and decode a JSON document

    Returns:
        object: decoded document

    Raises:
        StorageNotFoundError: If the file doesn't exist
        StorageFormatError: If the content is not JSON
    """
    text = read_text(path)
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise StorageFormatError(f'{path}: invalid JSON at line {e.lineno} column {e.colno}: {e.msg}')


def write_json(path, document):
    """Write a JSON document with sorted keys"""
    write_text(path, json.dumps(document, cls=NumpyEncoder, sort_keys=True, indent=2) + '\n')


def read_jsonl(path):
    """Read a JSON-lines file, skipping blank lines"""
    records = []
    for number, line in enumerate(read_text(path).splitlines(), start=1):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as e:
            raise StorageFormatError(f'{path}: invalid JSON on line {number}: {e.msg}')
    return records


def write_jsonl(path, records):
    lines = [json.dumps(r, cls=NumpyEncoder, sort_keys=True) for r in records]
    write_text(path, ''.join(line + '\n' for line in lines))


def _cell(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return int(value)
    return value


def write_csv(path, header, rows):
    """Write rows under a header; floats keep their repr"""
    try:
        _ensure_parent(path)
        with open(path, 'w', encoding='utf-8', newline='') as handle:
            writer = csv.writer(handle, lineterminator='\n')
            writer.writerow(header)
            for row in rows:
                writer.writerow([_cell(v) for v in row])
        logger.debug(f'Wrote {len(rows)} rows to {path}')
    except OSError as e:
        raise StorageError(f'Cannot write {path}: {e}')


def read_csv(path):
    """Read a CSV file into a list of dicts keyed by the header"""
    text = read_text(path)
    reader = csv.DictReader(text.splitlines())
    if reader.fieldnames is None:
        raise StorageFormatError(f'{path}: missing CSV header')
    return list(reader)
