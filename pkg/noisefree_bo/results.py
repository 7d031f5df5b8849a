"""
Result files with a metadata header.

CSV files start with one comment line ``# {json meta}``; JSON files are
``{"meta": ..., "results": ...}``. The meta block carries the resolved config,
the version string and a UTC creation stamp; everything else (the body) is a
deterministic function of the config.
"""
import csv
import json
import logging
import math
import os
import subprocess
from datetime import datetime
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np
import pytz

from . import __version__

logger = logging.getLogger(__name__)


def version_string() -> str:
    """``git describe`` of the source tree, or the package version outside a checkout."""
    try:
        result = subprocess.run(
            ['git', 'describe', '--tags', '--always', '--dirty'],
            cwd=os.path.dirname(os.path.abspath(__file__)),
            capture_output=True,
            text=True,
            timeout=5,
        )
    except (OSError, subprocess.TimeoutExpired):
        return __version__
    described = result.stdout.strip()
    return described if result.returncode == 0 and described else __version__


def make_meta(config: Dict[str, Any], **extra) -> Dict[str, Any]:
    meta = {
        'config': config,
        'version': version_string(),
        'created_at': datetime.now(pytz.UTC).isoformat(),
    }
    meta.update(extra)
    return meta


def to_builtin(obj):
    """Recursively convert numpy values to JSON-safe builtins; NaN becomes null."""
    if isinstance(obj, dict):
        return {str(k): to_builtin(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_builtin(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_builtin(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        return None if math.isnan(value) or math.isinf(value) else value
    if hasattr(obj, 'value') and isinstance(getattr(obj, 'value'), str):
        return obj.value
    return obj


class ResultWriter:
    """
    Writes result files for one experiment into an output directory.

    Args:
        output_dir (str): Target directory (created on first write)
        meta (dict): Header metadata shared by every file
        dry_run (bool): Log what would be written instead of writing
    """

    def __init__(self, output_dir: str, meta: Dict[str, Any], dry_run: bool = False):
        self.output_dir = output_dir
        self.meta = to_builtin(meta)
        self.dry_run = dry_run
        self.written: List[str] = []

    def path(self, name: str) -> str:
        return os.path.join(self.output_dir, name)

    def _prepare(self, name: str) -> Optional[str]:
        if self.dry_run:
            logger.info("DRY RUN: Would write %s", self.path(name))
            return None
        os.makedirs(self.output_dir, exist_ok=True)
        return self.path(name)

    def write_csv(self, name: str, columns: Sequence[str], rows: Iterable[Sequence[Any]],
                  meta: Optional[Dict[str, Any]] = None) -> Optional[str]:
        """
        Write a CSV file with the meta header line.

        Returns:
            str: The written path, or None in dry-run mode
        """
        path = self._prepare(name)
        if path is None:
            return None
        header = dict(self.meta, **to_builtin(meta or {}))
        try:
            with open(path, 'w', newline='') as f:
                f.write('# ' + json.dumps(header, sort_keys=True) + '\n')
                writer = csv.writer(f)
                writer.writerow(columns)
                for row in rows:
                    writer.writerow([_cell(v) for v in row])
        except IOError as e:
            logger.error("Failed to write %s: %s", path, e)
            raise
        logger.info("Wrote %s", path)
        self.written.append(path)
        return path

    def write_json(self, name: str, results: Any, meta: Optional[Dict[str, Any]] = None) -> Optional[str]:
        """Write ``{"meta": ..., "results": ...}``."""
        path = self._prepare(name)
        if path is None:
            return None
        document = {'meta': dict(self.meta, **to_builtin(meta or {})), 'results': to_builtin(results)}
        try:
            with open(path, 'w') as f:
                json.dump(document, f, indent=2, sort_keys=True)
                f.write('\n')
        except IOError as e:
            logger.error("Failed to write %s: %s", path, e)
            raise
        logger.info("Wrote %s", path)
        self.written.append(path)
        return path


def _cell(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return int(value)
    return value


def read_csv(path: str):
    """
    Read a result CSV.

    Returns:
        tuple: (meta dict, column names, list of string rows)
    """
    with open(path, 'r', newline='') as f:
        first = f.readline()
        if not first.startswith('# '):
            raise ValueError(f"{path} has no meta header")
        meta = json.loads(first[2:])
        reader = csv.reader(f)
        columns = next(reader)
        return meta, columns, [row for row in reader]


def read_body(path: str) -> str:
    """Everything after the meta line of a CSV, or the results member of a JSON file."""
    with open(path, 'r') as f:
        if path.endswith('.json'):
            return json.dumps(json.load(f)['results'], sort_keys=True)
        f.readline()
        return f.read()
