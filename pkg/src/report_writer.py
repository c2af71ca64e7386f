"""Plot-ready CSV tables and JSON run records."""
import csv
import json
import logging
import os

import numpy as np

from src.utils import ensure_dir, get_timestamp

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "{:.16e}"


def _cell(value):
    if isinstance(value, (bool, np.bool_)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return FLOAT_FORMAT.format(float(value))
    if isinstance(value, (int, np.integer)):
        return int(value)
    return "" if value is None else value


def write_csv(output_dir, filename, rows, config_hash, columns=None):
    """Writes rows with a leading config_hash column; returns the file path.

    Floats use a fixed repr so identical runs produce identical bodies.
    """
    ensure_dir(output_dir)
    path = os.path.join(output_dir, filename)
    if columns is None:
        columns = []
        for row in rows:
            for key in row:
                if key not in columns:
                    columns.append(key)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["config_hash"] + list(columns))
        for row in rows:
            writer.writerow([config_hash] + [_cell(row.get(c)) for c in columns])
    logger.debug("Wrote %d rows to %s", len(rows), path)
    return path


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (complex, np.complexfloating)):
        return [float(value.real), float(value.imag)]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    return value


def write_json(output_dir, filename, record):
    ensure_dir(output_dir)
    path = os.path.join(output_dir, filename)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(_jsonable(record), f, indent=2, sort_keys=True)
    return path


def write_manifest(output_dir, command, config_hash, seed, files, elapsed, summary=None):
    """manifest.json: command, config hash, seed, files, timestamp, elapsed seconds."""
    record = {
        "command": command,
        "config_hash": config_hash,
        "seed": seed,
        "files": [os.path.basename(p) for p in files],
        "timestamp": get_timestamp(),
        "elapsed_seconds": round(elapsed, 3),
        "summary": summary or {},
    }
    return write_json(output_dir, "manifest.json", record)


def write_error(output_dir, error, config_hash=None):
    """error.json from a SpectraError record."""
    record = dict(error.to_record(), config_hash=config_hash)
    return write_json(output_dir, "error.json", record)
