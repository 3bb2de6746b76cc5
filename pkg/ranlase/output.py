"""
Table writers for the command-line interface.

CSV files start with '#'-prefixed provenance lines, then the column header and
the rows. Excluded or divergent points are NaN in the frame and are written as
the token `divergent` (CSV) or null (JSON). Output bytes depend only on the
frame and the header, so identical runs give identical files.
"""

import hashlib
import io
import json
import logging
import math
import sys
from pathlib import Path
from typing import Optional

import pandas as pd

from ranlase.errors import OutputError

logger = logging.getLogger(__name__)

DIVERGENT = "divergent"
FLOAT_FORMAT = "%.12g"


def _plain(value):
    """Make a header value JSON-serializable and stable."""
    if hasattr(value, "value") and not isinstance(value, (int, float, str)):
        return value.value
    if isinstance(value, float) and not math.isfinite(value):
        return None if math.isnan(value) else str(value)
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    return value


def provenance_header(command: str, parameters: dict, labels=(), seed: Optional[int] = None) -> dict:
    """
    Ordered provenance: library version, subcommand, formula labels, seed,
    every resolved parameter and a short hash of the parameters.
    """
    from ranlase import __version__

    resolved = {key: _plain(value) for key, value in sorted(parameters.items()) if value is not None}
    digest = hashlib.sha1(json.dumps(resolved, sort_keys=True).encode()).hexdigest()[:10]
    header = {"ranlase": __version__, "command": command}
    if labels:
        header["formulas"] = ",".join(dict.fromkeys(labels))
    if seed is not None:
        header["seed"] = seed
    header.update(resolved)
    header["config_hash"] = digest
    return header


def render_csv(frame: pd.DataFrame, header: dict) -> str:
    buffer = io.StringIO()
    for key, value in header.items():
        buffer.write(f"# {key}: {value}\n")
    frame.to_csv(buffer, index=False, float_format=FLOAT_FORMAT, na_rep=DIVERGENT, lineterminator="\n")
    return buffer.getvalue()


def render_json(frame: pd.DataFrame, header: dict) -> str:
    rows = []
    for record in frame.itertuples(index=False, name=None):
        row = []
        for value in record:
            if isinstance(value, float) and math.isnan(value):
                row.append(None)
            elif isinstance(value, float):
                row.append(float(FLOAT_FORMAT % value))
            elif hasattr(value, "item"):
                row.append(value.item())
            else:
                row.append(value)
        rows.append(row)
    document = {"header": header, "columns": list(frame.columns), "rows": rows}
    return json.dumps(document, indent=2) + "\n"


def write_table(frame: pd.DataFrame, header: dict, path: Optional[str] = None, fmt: str = "csv") -> str:
    """
    Render the table and write it to `path` (stdout when None or '-').
    Returns the rendered text.
    """
    if fmt == "csv":
        text = render_csv(frame, header)
    elif fmt == "json":
        text = render_json(frame, header)
    else:
        raise OutputError(f"unknown output format {fmt!r}; expected csv or json")

    if path in (None, "-"):
        sys.stdout.write(text)
        return text
    target = Path(path)
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        with open(target, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
    except OSError as exc:
        logger.error(f"Could not write {target}: {exc}")
        raise OutputError(f"cannot write output file {target}: {exc}") from exc
    logger.info(f"Wrote {len(frame)} row(s) to {target}")
    return text
