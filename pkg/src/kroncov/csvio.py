"""Matrix CSV format shared by every command.

The first line is ``# rows=<r> cols=<c>``; then ``r`` lines of ``c``
comma-separated values written with ``repr`` so they round-trip exactly.
"""

from __future__ import annotations

import json
import re
from pathlib import Path

import numpy as np

from . import __version__

_HEADER = re.compile(r"#\s*rows=(\d+)\s+cols=(\d+)")


def write_matrix(path, m) -> None:
    m = np.atleast_2d(np.asarray(m, dtype=float))
    rows, cols = m.shape
    lines = [f"# rows={rows} cols={cols}"]
    lines.extend(",".join(repr(float(v)) for v in row) for row in m)
    Path(path).write_text("\n".join(lines) + "\n")


def read_matrix(path) -> np.ndarray:
    text = Path(path).read_text().splitlines()
    if not text:
        raise ValueError(f"{path}: empty file")
    match = _HEADER.match(text[0].strip())
    if match is None:
        raise ValueError(f"{path}: missing '# rows=<r> cols=<c>' header")
    rows, cols = int(match.group(1)), int(match.group(2))
    body = [line for line in text[1:] if line.strip()]
    if len(body) != rows:
        raise ValueError(f"{path}: header says {rows} rows, found {len(body)}")
    out = np.empty((rows, cols))
    for r, line in enumerate(body):
        vals = line.split(",")
        if len(vals) != cols:
            raise ValueError(f"{path}: row {r} has {len(vals)} values, expected {cols}")
        out[r] = [float(v) for v in vals]
    return out


def write_provenance(path, config: dict, seed=None) -> Path:
    """Write ``<path>.provenance.json`` with the resolved config, seed and library version.

    ``seed`` defaults to ``config["seed"]`` when present.
    """
    side = Path(str(path) + ".provenance.json")
    if seed is None:
        seed = config.get("seed")
    payload = {"library": "kroncov", "version": __version__, "seed": seed, "config": config}
    side.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_jsonable) + "\n")
    return side


def _jsonable(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")
